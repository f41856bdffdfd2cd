"""
Stage-3 fine-tuning with retrieval guidance.
"""

import logging
from collections.abc import Callable, Iterator, Sequence

import numpy as np
import torch

from adaptor.storage.adaptor import MetricsLog
from apps.core.exceptions import EncodersNotFrozenError
from apps.core.models import ImageSample
from apps.core.random import RunRandom
from apps.networks import TranslationModel
from apps.style_space import GMMStyleSpace
from apps.translation import (
    LossBreakdown,
    LossWeights,
    OptimSettings,
    StyleReconTarget,
    TrainingBatch,
    TranslationTrainer,
)

from .guidance import RetrievalGuide

logger = logging.getLogger(__name__)


def prepare_for_guidance(model: TranslationModel, r: int) -> None:
    """Freeze E_c/E_s, unfreeze G/D and attach a pass-through fusion block for r codes."""
    model.freeze_encoders()
    model.generator.requires_grad_(True)
    model.discriminator.requires_grad_(True)
    if r > 0 and (model.fusion is None or model.fusion.n_retrieved != r):
        device = next(model.parameters()).device
        model.attach_fusion(r).to(device)


class GuidedTrainer(TranslationTrainer):
    """
    Fine-tunes G, D and the fusion block with the stage-1 objective, the
    generator input being the fused content code.
    """

    stage = "guided"

    def __init__(
        self,
        model: TranslationModel,
        style_space: GMMStyleSpace,
        guide: RetrievalGuide,
        samples: Sequence[ImageSample],
        weights: LossWeights = LossWeights(),
        optim: OptimSettings = OptimSettings(),
        style_recon_target: StyleReconTarget = StyleReconTarget.SAMPLED,
    ) -> None:
        prepare_for_guidance(model, guide.config.r if guide.config.active else 0)
        super().__init__(model, style_space, weights, optim, style_recon_target)
        self.guide = guide
        # Maps batch indices back to sample ids for self-exclusion.
        self.sample_ids = [s.id for s in samples]
        self.retrieval_rng = np.random.default_rng(0)

    def finetune_step(
        self,
        batch: TrainingBatch,
        generator: torch.Generator | None = None,
        rng: np.random.Generator | None = None,
    ) -> LossBreakdown:
        if not self.model.encoders_frozen():
            raise EncodersNotFrozenError("content and style encoders must stay frozen during fine-tuning")
        if not self.guide.config.active:
            return self.adversarial_step(batch, generator)

        exclude = None
        if batch.indices is not None:
            exclude = [self.sample_ids[int(i)] for i in batch.indices]
        rng = rng if rng is not None else self.retrieval_rng

        def content() -> torch.Tensor:
            return self.guide.retrieve_and_fuse(batch.x, batch.target, exclude, rng)

        return self.adversarial_step(batch, generator, content)

    def train_step(self, batch: TrainingBatch, generator: torch.Generator | None = None) -> LossBreakdown:
        return self.finetune_step(batch, generator)

    def fit(
        self,
        batches: Iterator[tuple[torch.Tensor, torch.Tensor, torch.Tensor]],
        steps: int,
        random: RunRandom,
        metrics: MetricsLog | None = None,
        checkpoint_every: int = 0,
        on_checkpoint: Callable[[TranslationTrainer], None] | None = None,
        mirror: bool = True,
    ) -> LossBreakdown | None:
        self.retrieval_rng = random.numpy("guided.retrieval")
        logger.info(f"Guidance: {self.guide.config.mode} retrieval of r={self.guide.config.r}")
        return super().fit(batches, steps, random, metrics, checkpoint_every, on_checkpoint, mirror)
