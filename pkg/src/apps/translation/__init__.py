from .losses import domain_cls_loss, l1_loss, lr_at, lsgan_d, lsgan_g
from .trainer import (
    LossBreakdown,
    LossWeights,
    OptimSettings,
    StyleReconTarget,
    TrainingBatch,
    TranslationTrainer,
    make_batch,
)

__all__ = [
    "LossBreakdown",
    "LossWeights",
    "OptimSettings",
    "StyleReconTarget",
    "TrainingBatch",
    "TranslationTrainer",
    "domain_cls_loss",
    "l1_loss",
    "lr_at",
    "lsgan_d",
    "lsgan_g",
    "make_batch",
]
