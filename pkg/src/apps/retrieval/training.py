"""
Stage-2 training of the retrieval embedder.
"""

import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from adaptor.storage.adaptor import MetricsLog
from apps.core.exceptions import NonFiniteLossError
from apps.core.models import AttributeVector
from apps.core.random import RunRandom
from apps.networks import RetrievalEmbedder, parameter_checksum
from apps.translation.losses import lr_at

from .triplets import NegativeStrategy, TripletBatch, TripletBuilder

logger = logging.getLogger(__name__)


def triplet_distances(ea: torch.Tensor, ep: torch.Tensor, en: torch.Tensor, margin: float) -> torch.Tensor:
    """Per-triplet hinge max(0, m + |ea - ep| - |ea - en|)."""
    d_ap = torch.linalg.vector_norm(ea - ep, dim=-1)
    d_an = torch.linalg.vector_norm(ea - en, dim=-1)
    return F.relu(margin + d_ap - d_an)


def triplet_loss(ea: torch.Tensor, ep: torch.Tensor, en: torch.Tensor, margin: float = 0.2) -> torch.Tensor:
    return triplet_distances(ea, ep, en, margin).mean()


@dataclass(frozen=True)
class RetrievalSettings:
    margin: float = 0.2
    batch_size: int = 32
    lr: float = 0.01
    half_every: int = 10_000
    mix: str = "all"


@dataclass(frozen=True)
class RetrievalStep:
    loss: float
    lr: float
    per_strategy: dict[str, float]

    def as_floats(self) -> dict[str, float]:
        return {"loss": self.loss, "lr": self.lr, **{f"loss_{k}": v for k, v in self.per_strategy.items()}}


class RetrievalTrainer:
    """Trains the embedder on triplets built by a frozen translator."""

    def __init__(
        self,
        embedder: RetrievalEmbedder,
        builder: TripletBuilder,
        settings: RetrievalSettings = RetrievalSettings(),
    ) -> None:
        self.embedder = embedder
        self.builder = builder
        self.settings = settings
        self.step = 0
        builder.model.requires_grad_(False)
        self.optimizer = torch.optim.Adam(embedder.parameters(), lr=settings.lr)

    def train_step(self, triplets: TripletBatch) -> RetrievalStep:
        """One gradient step on the embedder only."""
        lr = lr_at(self.step, self.settings.lr, self.settings.half_every)
        for group in self.optimizer.param_groups:
            group["lr"] = lr

        self.embedder.train()
        ea = self.embedder(triplets.anchor.content, triplets.anchor.style)
        ep = self.embedder(triplets.positive.content, triplets.positive.style)
        en = self.embedder(triplets.negative.content, triplets.negative.style)
        per_triplet = triplet_distances(ea, ep, en, self.settings.margin)
        loss = per_triplet.mean()
        if not math.isfinite(float(loss.detach())):
            raise NonFiniteLossError("triplet", float(loss.detach()))

        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.step += 1

        values = per_triplet.detach().cpu()
        per_strategy = {}
        for strategy in NegativeStrategy:
            rows = [i for i, s in enumerate(triplets.strategies) if s is strategy]
            if rows:
                per_strategy[strategy.value] = float(values[rows].mean())
        return RetrievalStep(float(loss.detach()), lr, per_strategy)

    def fit(
        self,
        batches: Iterator[tuple[torch.Tensor, torch.Tensor, torch.Tensor]],
        steps: int,
        random: RunRandom,
        metrics: MetricsLog | None = None,
        checkpoint_every: int = 0,
        on_checkpoint: Callable[["RetrievalTrainer"], None] | None = None,
    ) -> RetrievalStep | None:
        device = next(self.embedder.parameters()).device
        rng = random.numpy("retrieval.triplets")
        styles = random.torch("retrieval.styles", device)
        checksum = parameter_checksum(self.builder.model)
        logger.info(f"Starting retrieval training ({self.settings.mix} negatives) for {steps} steps")

        last = None
        for _ in range(steps):
            pixels, attrs, _indices = next(batches)
            sources = [AttributeVector.from_tensor(a) for a in attrs]
            triplets = self.builder.build(pixels.to(device), sources, rng, styles)
            last = self.train_step(triplets)
            if metrics is not None:
                metrics.write(self.step, last.as_floats())
            if on_checkpoint is not None and checkpoint_every and self.step % checkpoint_every == 0:
                on_checkpoint(self)
        if on_checkpoint is not None:
            on_checkpoint(self)

        if parameter_checksum(self.builder.model) != checksum:
            raise RuntimeError("translator parameters changed during retrieval training")
        logger.info(f"Finished retrieval training at step {self.step}")
        return last
