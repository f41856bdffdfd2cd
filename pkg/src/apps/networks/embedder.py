"""
Retrieval embedder R: (content code, style vector) -> embedding.
"""

import math

import torch
from torch import nn

from apps.core.exceptions import ShapeError

from .blocks import ConvBlock
from .config import NetworkConfig


class RetrievalEmbedder(nn.Module):
    """
    Downsizes the content code through up to three stride-2 stages,
    flattens it, appends the style vector and maps the result through a
    two-layer MLP to `embed_dim`. Instance norm is skipped on stages whose
    output is a single pixel.
    """

    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.base_width
        self.style_dim = config.style_dim
        widths = [config.content_channels, 2 * w, w, max(1, w // 2)]
        size = config.content_size
        self.n_down = min(3, int(math.log2(size)))

        layers: list[nn.Module] = []
        for c_in, c_out in zip(widths[: self.n_down], widths[1 : self.n_down + 1]):
            layers.append(ConvBlock(c_in, c_out, 3, 1, 1, "in" if size > 1 else "none", "relu"))
            size //= 2
            layers.append(ConvBlock(c_out, c_out, 4, 2, 1, "in" if size > 1 else "none", "relu"))
        self.convs = nn.Sequential(*layers)
        flat = widths[self.n_down] * size * size

        self.mlp = nn.Sequential(
            nn.Linear(flat + config.style_dim, config.retrieval_hidden),
            nn.ReLU(),
            nn.Linear(config.retrieval_hidden, config.retrieval_hidden),
            nn.ReLU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.retrieval_hidden, config.embed_dim),
        )

    def forward(self, content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if style.shape[-1] != self.style_dim:
            raise ShapeError(f"style vector has {style.shape[-1]} dims, expected {self.style_dim}")
        h = self.convs(content).flatten(1)
        return self.mlp(torch.cat([h, style], dim=1))
