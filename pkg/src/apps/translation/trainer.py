"""
Stage-1 training of the translator.

The generator objective combines content, style, image and cycle
reconstruction with the KL prior match, the domain classification loss
and the adversarial term; the discriminator sees real images and detached
translations.
"""

import logging
import math
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from enum import StrEnum

import numpy as np
import torch
from torch import nn

from adaptor.storage.adaptor import MetricsLog
from apps.core.exceptions import NonFiniteLossError
from apps.core.models import AttributeVector, stack_attrs
from apps.core.random import RunRandom
from apps.datasets.domains import sample_target_attrs
from apps.datasets.preprocess import random_mirror
from apps.networks import TranslationModel
from apps.style_space import GMMStyleSpace

from .losses import domain_cls_loss, l1_loss, lr_at, lsgan_d, lsgan_g

logger = logging.getLogger(__name__)


class StyleReconTarget(StrEnum):
    SAMPLED = "sampled"
    ENCODED = "encoded"


@dataclass(frozen=True)
class LossWeights:
    style_recon: float = 10.0
    cycle: float = 10.0
    kl: float = 0.1

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be non-negative")


@dataclass(frozen=True)
class OptimSettings:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    half_every: int = 200_000


def _zero() -> torch.Tensor:
    return torch.zeros(())


@dataclass
class LossBreakdown:
    """Every loss term of one step plus the two totals."""

    adv_g: torch.Tensor = field(default_factory=_zero)
    adv_d: torch.Tensor = field(default_factory=_zero)
    c_recon: torch.Tensor = field(default_factory=_zero)
    s_recon: torch.Tensor = field(default_factory=_zero)
    x_recon: torch.Tensor = field(default_factory=_zero)
    cycle: torch.Tensor = field(default_factory=_zero)
    kl: torch.Tensor = field(default_factory=_zero)
    cls_g: torch.Tensor = field(default_factory=_zero)
    cls_d: torch.Tensor = field(default_factory=_zero)
    loss_g: torch.Tensor = field(default_factory=_zero)
    loss_d: torch.Tensor = field(default_factory=_zero)

    def as_floats(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}

    def check_finite(self, *names: str) -> None:
        for name in names or tuple(f.name for f in fields(self)):
            value = float(getattr(self, name).detach())
            if not math.isfinite(value):
                raise NonFiniteLossError(name, value)

    def merged(self, discriminator: "LossBreakdown") -> "LossBreakdown":
        """Generator terms from self, discriminator terms from `discriminator`."""
        return LossBreakdown(
            **{f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("adv_d", "cls_d", "loss_d")},
            adv_d=discriminator.adv_d,
            cls_d=discriminator.cls_d,
            loss_d=discriminator.loss_d,
        )


GENERATOR_TERMS = ("adv_g", "c_recon", "s_recon", "x_recon", "cycle", "kl", "cls_g", "loss_g")
DISCRIMINATOR_TERMS = ("adv_d", "cls_d", "loss_d")


@dataclass(frozen=True)
class TrainingBatch:
    x: torch.Tensor
    source: torch.Tensor
    target: torch.Tensor
    # Positions of the images in the sampled sequence, when known.
    indices: torch.Tensor | None = None

    def to(self, device: torch.device | str) -> "TrainingBatch":
        return TrainingBatch(self.x.to(device), self.source.to(device), self.target.to(device), self.indices)


def make_batch(
    pixels: torch.Tensor,
    attrs: torch.Tensor,
    rng: np.random.Generator,
    mirror: torch.Generator | None = None,
    indices: torch.Tensor | None = None,
) -> TrainingBatch:
    """Attach a random target domain (different from the source) to every image."""
    targets = [sample_target_attrs(AttributeVector.from_tensor(a), rng) for a in attrs]
    if mirror is not None:
        pixels = random_mirror(pixels, mirror)
    return TrainingBatch(pixels, attrs.to(pixels.dtype), stack_attrs(targets, pixels.dtype), indices)


@contextmanager
def requires_grad_off(module: nn.Module) -> Iterator[None]:
    flags = [p.requires_grad for p in module.parameters()]
    module.requires_grad_(False)
    try:
        yield
    finally:
        for p, flag in zip(module.parameters(), flags):
            p.requires_grad_(flag)


class TranslationTrainer:
    """Owns the optimizers and step counter of an adversarial translation run."""

    stage = "base"

    def __init__(
        self,
        model: TranslationModel,
        style_space: GMMStyleSpace,
        weights: LossWeights = LossWeights(),
        optim: OptimSettings = OptimSettings(),
        style_recon_target: StyleReconTarget = StyleReconTarget.SAMPLED,
    ) -> None:
        self.model = model
        self.style_space = style_space
        self.weights = weights
        self.optim = optim
        self.style_recon_target = StyleReconTarget(style_recon_target)
        self.step = 0
        self.last_lr = optim.lr
        self.g_optimizer = torch.optim.Adam(
            list(model.translator_parameters()), lr=optim.lr, betas=(optim.beta1, optim.beta2)
        )
        self.d_optimizer = torch.optim.Adam(
            model.discriminator.parameters(), lr=optim.lr, betas=(optim.beta1, optim.beta2)
        )

    def _style(self, attrs: torch.Tensor, generator: torch.Generator | None, like: torch.Tensor) -> torch.Tensor:
        return self.style_space.sample_style(attrs, generator, dtype=like.dtype).to(like.device)

    def generator_losses(
        self,
        x: torch.Tensor,
        source: torch.Tensor | None,
        target: torch.Tensor,
        generator: torch.Generator | None = None,
        content: torch.Tensor | None = None,
    ) -> LossBreakdown:
        """
        All generator-side terms for a batch. `content` replaces E_c(x) as
        the generator input (the fused code during guided fine-tuning).
        """
        if source is None:
            raise ValueError("generator losses need the source domain labels of x")
        model, w = self.model, self.weights

        c = model.encode_content(x)
        c_tilde = c if content is None else content
        s = self._style(target, generator, x)
        fake = model.decode(c_tilde, s, x).composite

        posterior_real = model.encode_style(x)
        posterior_fake = model.encode_style(fake)
        c_fake = model.encode_content(fake)

        c_recon = l1_loss(c_fake, c)
        s_ref = s if self.style_recon_target is StyleReconTarget.SAMPLED else posterior_real.mean
        s_recon = l1_loss(posterior_fake.rsample(generator), s_ref)

        s_self = self._style(source, generator, x)
        x_recon = l1_loss(model.decode(c_tilde, s_self, x).composite, x)

        s_back = posterior_real.rsample(generator)
        cycle = l1_loss(model.decode(c_fake, s_back, fake).composite, x)

        kl = self.style_space.kl_to_component(posterior_real, source)

        scores = model.discriminate(fake)
        adv_g = lsgan_g(scores.realness)
        cls_g = domain_cls_loss(scores.domain_logits, target)

        loss_g = (
            adv_g
            + c_recon
            + w.style_recon * s_recon
            + x_recon
            + w.cycle * cycle
            + w.kl * kl
            + cls_g
        )
        return LossBreakdown(
            adv_g=adv_g,
            c_recon=c_recon,
            s_recon=s_recon,
            x_recon=x_recon,
            cycle=cycle,
            kl=kl,
            cls_g=cls_g,
            loss_g=loss_g,
        )

    def discriminator_losses(
        self,
        x: torch.Tensor,
        source: torch.Tensor,
        target: torch.Tensor,
        generator: torch.Generator | None = None,
        content: torch.Tensor | None = None,
    ) -> LossBreakdown:
        with torch.no_grad():
            c_tilde = self.model.encode_content(x) if content is None else content
            fake = self.model.decode(c_tilde, self._style(target, generator, x), x).composite
        real_scores = self.model.discriminate(x)
        fake_scores = self.model.discriminate(fake.detach())
        adv_d = lsgan_d(real_scores.realness, fake_scores.realness)
        # Only real images with their own labels train the domain head.
        cls_d = domain_cls_loss(real_scores.domain_logits, source)
        return LossBreakdown(adv_d=adv_d, cls_d=cls_d, loss_d=adv_d + cls_d)

    def set_learning_rate(self) -> float:
        lr = lr_at(self.step, self.optim.lr, self.optim.half_every)
        for optimizer in (self.g_optimizer, self.d_optimizer):
            for group in optimizer.param_groups:
                group["lr"] = lr
        return lr

    def adversarial_step(
        self,
        batch: TrainingBatch,
        generator: torch.Generator | None,
        content_fn: Callable[[], torch.Tensor] | None = None,
    ) -> LossBreakdown:
        """One discriminator update followed by one generator update."""
        self.last_lr = self.set_learning_rate()

        content = content_fn() if content_fn is not None else None
        d = self.discriminator_losses(
            batch.x, batch.source, batch.target, generator, None if content is None else content.detach()
        )
        d.check_finite(*DISCRIMINATOR_TERMS)
        self.d_optimizer.zero_grad(set_to_none=True)
        d.loss_d.backward()
        self.d_optimizer.step()

        with requires_grad_off(self.model.discriminator):
            g = self.generator_losses(batch.x, batch.source, batch.target, generator, content)
            g.check_finite(*GENERATOR_TERMS)
            self.g_optimizer.zero_grad(set_to_none=True)
            g.loss_g.backward()
            self.g_optimizer.step()

        self.step += 1
        return g.merged(d)

    def train_step(self, batch: TrainingBatch, generator: torch.Generator | None = None) -> LossBreakdown:
        return self.adversarial_step(batch, generator)

    def fit(
        self,
        batches: Iterator[tuple[torch.Tensor, torch.Tensor, torch.Tensor]],
        steps: int,
        random: RunRandom,
        metrics: MetricsLog | None = None,
        checkpoint_every: int = 0,
        on_checkpoint: Callable[["TranslationTrainer"], None] | None = None,
        mirror: bool = True,
    ) -> LossBreakdown | None:
        """Run `steps` training steps; returns the last breakdown."""
        device = next(self.model.parameters()).device
        targets = random.numpy(f"{self.stage}.targets")
        styles = random.torch(f"{self.stage}.styles", device)
        flips = random.torch(f"{self.stage}.mirror") if mirror else None
        self.model.train()
        logger.info(f"Starting {self.stage} training for {steps} steps at step {self.step}")

        last = None
        for _ in range(steps):
            pixels, attrs, indices = next(batches)
            batch = make_batch(pixels, attrs, targets, flips, indices).to(device)
            last = self.train_step(batch, styles)
            if metrics is not None:
                metrics.write(self.step, {"lr": self.last_lr, **last.as_floats()})
            if on_checkpoint is not None and checkpoint_every and self.step % checkpoint_every == 0:
                on_checkpoint(self)
        if on_checkpoint is not None:
            on_checkpoint(self)
        logger.info(f"Finished {self.stage} training at step {self.step}")
        return last
