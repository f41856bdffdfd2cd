"""
AdaIN decoder G with an attention-mask head.
"""

from dataclasses import dataclass

import torch
from torch import nn

from apps.core.exceptions import ShapeError

from .blocks import AdaINResBlock, Upsample
from .config import NetworkConfig


@dataclass(frozen=True)
class GeneratorOutput:
    prediction: torch.Tensor
    mask: torch.Tensor
    composite: torch.Tensor

    @staticmethod
    def compose(prediction: torch.Tensor, mask: torch.Tensor, x_in: torch.Tensor) -> torch.Tensor:
        return prediction * mask + x_in * (1.0 - mask)


class Generator(nn.Module):
    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.base_width
        c = config.content_channels
        self.style_dim = config.style_dim
        self.blocks = nn.ModuleList(AdaINResBlock(c) for _ in range(config.n_res))
        n_params = sum(b.n_params for b in self.blocks)
        # Style code -> per-block (scale, shift) pairs.
        self.mapping = nn.Sequential(
            nn.Linear(config.style_dim, config.adain_hidden),
            nn.ReLU(),
            nn.Linear(config.adain_hidden, n_params),
        )
        self.upsample = nn.Sequential(Upsample(c, 2 * w), Upsample(2 * w, w))
        self.image_head = nn.Sequential(nn.Conv2d(w, 3, 7, 1, 3), nn.Tanh())
        self.mask_head = nn.Sequential(nn.Conv2d(w, 1, 7, 1, 3), nn.Sigmoid())

    def forward(self, content: torch.Tensor, style: torch.Tensor, x_in: torch.Tensor) -> GeneratorOutput:
        if content.shape[-2] * 4 != x_in.shape[-2] or content.shape[-1] * 4 != x_in.shape[-1]:
            raise ShapeError(
                f"content {tuple(content.shape[-2:])} does not match input {tuple(x_in.shape[-2:])} / 4"
            )
        if style.shape[-1] != self.style_dim:
            raise ShapeError(f"style code has {style.shape[-1]} dims, expected {self.style_dim}")
        if style.dim() == 1:
            style = style.expand(content.shape[0], -1)

        params = self.mapping(style)
        h = content
        for block, block_params in zip(self.blocks, params.split([b.n_params for b in self.blocks], dim=1)):
            h = block(h, block_params)
        h = self.upsample(h)
        prediction = self.image_head(h)
        mask = self.mask_head(h)
        return GeneratorOutput(prediction, mask, GeneratorOutput.compose(prediction, mask, x_in))
