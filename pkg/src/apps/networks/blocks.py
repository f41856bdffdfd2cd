"""
Building blocks shared by the encoders, generator and discriminator.
"""

from typing import Literal

import torch
import torch.nn.functional as F
from torch import nn

Norm = Literal["in", "ln", "none"]
Activation = Literal["relu", "lrelu", "none"]


class LayerNorm2d(nn.Module):
    """Per-sample normalisation over (C, H, W) with a per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        flat = x.flatten(1)
        mean = flat.mean(dim=1).view(-1, 1, 1, 1)
        std = flat.std(dim=1).view(-1, 1, 1, 1)
        x = (x - mean) / (std + self.eps)
        return x * self.gamma.view(1, -1, 1, 1) + self.beta.view(1, -1, 1, 1)


def _norm(kind: Norm, channels: int) -> nn.Module:
    if kind == "in":
        return nn.InstanceNorm2d(channels, affine=True)
    if kind == "ln":
        return LayerNorm2d(channels)
    return nn.Identity()


def _activation(kind: Activation) -> nn.Module:
    if kind == "relu":
        return nn.ReLU()
    if kind == "lrelu":
        return nn.LeakyReLU(0.2)
    return nn.Identity()


class ConvBlock(nn.Sequential):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        stride: int,
        padding: int,
        norm: Norm = "none",
        activation: Activation = "relu",
    ) -> None:
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel, stride, padding),
            _norm(norm, out_ch),
            _activation(activation),
        )


class ResBlock(nn.Module):
    def __init__(self, channels: int, norm: Norm = "in") -> None:
        super().__init__()
        self.body = nn.Sequential(
            ConvBlock(channels, channels, 3, 1, 1, norm, "relu"),
            ConvBlock(channels, channels, 3, 1, 1, norm, "none"),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class AdaIN2d(nn.Module):
    """Instance normalisation whose scale and shift come from outside."""

    def __init__(self, channels: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.channels = channels
        self.eps = eps

    def forward(self, x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
        x = F.instance_norm(x, eps=self.eps)
        # Scale is parameterised around 1.
        return x * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]


class AdaINResBlock(nn.Module):
    """Residual block with two AdaIN layers; consumes 4 * channels style parameters."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = AdaIN2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm2 = AdaIN2d(channels)

    @property
    def n_params(self) -> int:
        return 4 * self.channels

    def forward(self, x: torch.Tensor, params: torch.Tensor) -> torch.Tensor:
        s1, b1, s2, b2 = params.chunk(4, dim=1)
        h = F.relu(self.norm1(self.conv1(x), s1, b1))
        h = self.norm2(self.conv2(h), s2, b2)
        return x + h


class Upsample(nn.Sequential):
    """2x bilinear upsampling followed by a 5x5 convolution, layer norm and ReLU."""

    def __init__(self, in_ch: int, out_ch: int) -> None:
        super().__init__(
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
            ConvBlock(in_ch, out_ch, 5, 1, 2, "ln", "relu"),
        )
