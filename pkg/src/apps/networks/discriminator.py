"""
Discriminator with a patch realness head and a domain classification head.
"""

from dataclasses import dataclass

import torch
from torch import nn

from apps.core.exceptions import ShapeError

from .blocks import ConvBlock
from .config import NetworkConfig


@dataclass(frozen=True)
class DiscriminatorOutput:
    realness: torch.Tensor
    domain_logits: torch.Tensor


class Discriminator(nn.Module):
    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        w = config.base_width
        self.image_size = config.image_size
        self.trunk = nn.Sequential(
            ConvBlock(3, w, 4, 2, 1, "none", "lrelu"),
            ConvBlock(w, 2 * w, 4, 2, 1, "none", "lrelu"),
            ConvBlock(2 * w, 4 * w, 4, 2, 1, "none", "lrelu"),
            ConvBlock(4 * w, 8 * w, 4, 2, 1, "none", "lrelu"),
        )
        self.realness_head = nn.Conv2d(8 * w, 1, 1)
        self.domain_head = nn.Conv2d(8 * w, config.n_attrs, config.image_size // 16)

    def forward(self, x: torch.Tensor) -> DiscriminatorOutput:
        if x.shape[-1] % 16 or x.shape[-2] % 16:
            raise ShapeError(f"discriminator needs H and W divisible by 16, got {tuple(x.shape[-2:])}")
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            raise ShapeError(f"discriminator was built for {self.image_size}px images, got {tuple(x.shape[-2:])}")
        h = self.trunk(x)
        return DiscriminatorOutput(
            realness=self.realness_head(h).squeeze(1),
            domain_logits=self.domain_head(h).flatten(1),
        )
