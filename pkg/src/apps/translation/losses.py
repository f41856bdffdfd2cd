"""
Loss primitives of the translation objective.
"""

import torch
import torch.nn.functional as F

from apps.core.exceptions import ShapeError


def l1_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"L1 operands differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def lsgan_d(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss with real -> 1, fake -> 0."""
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def lsgan_g(fake_scores: torch.Tensor) -> torch.Tensor:
    return ((fake_scores - 1.0) ** 2).mean()


def domain_cls_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """
    Multi-label domain classification: binary cross-entropy summed over
    attributes, averaged over the batch.
    """
    if logits.shape != target.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} do not match targets {tuple(target.shape)}")
    per_attr = F.binary_cross_entropy_with_logits(logits, target.to(logits.dtype), reduction="none")
    return per_attr.sum(dim=-1).mean()


def lr_at(step: int, base: float, half_every: int) -> float:
    """Step-wise halving schedule: base * 0.5 ** floor(step / half_every)."""
    return base * 0.5 ** (step // half_every)
