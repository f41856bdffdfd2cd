"""
Content encoder E_c and style encoder E_s.
"""

import math

import torch
import torch.nn.functional as F
from torch import nn

from apps.core.exceptions import ShapeError
from apps.style_space import StylePosterior

from .blocks import ConvBlock, ResBlock
from .config import NetworkConfig

# Floor on the predicted stddev so KL terms stay finite.
MIN_STDDEV = 1e-4


class ContentEncoder(nn.Module):
    """Image [B,3,H,W] -> content code [B, 4*width, H/4, W/4]."""

    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.base_width
        self.net = nn.Sequential(
            ConvBlock(3, w, 7, 1, 3, "in", "relu"),
            ConvBlock(w, 2 * w, 4, 2, 1, "in", "relu"),
            ConvBlock(2 * w, 4 * w, 4, 2, 1, "in", "relu"),
            *(ResBlock(4 * w, "in") for _ in range(config.n_res)),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ShapeError(f"content encoder needs H and W divisible by 4, got {tuple(x.shape[-2:])}")
        return self.net(x)


class StyleEncoder(nn.Module):
    """
    Image -> diagonal Gaussian over the style space.

    Conv tower without normalisation, global average pooling and two
    linear heads (mean, stddev). The stddev head goes through softplus.
    """

    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.base_width
        n_down = min(4, int(math.log2(config.image_size)))
        widths = [w, 2 * w, 4 * w, 4 * w, 4 * w][: n_down + 1]
        layers: list[nn.Module] = [ConvBlock(3, w, 7, 1, 3, "none", "relu")]
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            layers.append(ConvBlock(c_in, c_out, 4, 2, 1, "none", "relu"))
        self.net = nn.Sequential(*layers)
        self.mean_head = nn.Linear(widths[-1], config.style_dim)
        self.std_head = nn.Linear(widths[-1], config.style_dim)

    def forward(self, x: torch.Tensor) -> StylePosterior:
        h = self.net(x).mean(dim=(2, 3))
        return StylePosterior(self.mean_head(h), F.softplus(self.std_head(h)) + MIN_STDDEV)
