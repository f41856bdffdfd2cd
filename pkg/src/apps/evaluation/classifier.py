"""
Multi-label attribute classifier and the feature extractor built on it.

The classifier stands in for the Inception network at desk scale: its
penultimate activations feed FID and diversity, its sigmoid outputs feed
accuracy and the Inception-Score analogue.
"""

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Protocol

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torchvision.models.resnet import BasicBlock, ResNet

from apps.core.models import N_ATTRS, ImageSample, valid_domains
from apps.core.random import RunRandom
from apps.datasets.loaders import infinite_batches
from apps.networks import parameter_checksum

logger = logging.getLogger(__name__)


class FeatureExtractor(Protocol):
    name: str

    @property
    def fingerprint(self) -> str: ...

    def features(self, images: torch.Tensor) -> np.ndarray: ...

    def probabilities(self, images: torch.Tensor) -> np.ndarray: ...


class AttributeClassifier(nn.Module):
    """A shallow ResNet (one basic block per stage) with one logit per attribute."""

    def __init__(self, n_attrs: int = N_ATTRS, blocks: Sequence[int] = (1, 1, 1, 1)) -> None:
        super().__init__()
        self.n_attrs = n_attrs
        self.blocks = tuple(blocks)
        self.backbone = ResNet(BasicBlock, list(self.blocks), num_classes=n_attrs)
        self.feature_dim = self.backbone.fc.in_features

    def features(self, x: torch.Tensor) -> torch.Tensor:
        b = self.backbone
        h = b.maxpool(b.relu(b.bn1(b.conv1(x))))
        h = b.layer4(b.layer3(b.layer2(b.layer1(h))))
        return torch.flatten(b.avgpool(h), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone.fc(self.features(x))


class ClassifierFeatures:
    """FeatureExtractor backed by an AttributeClassifier in eval mode."""

    def __init__(self, classifier: AttributeClassifier, name: str = "toy-attribute-resnet", batch_size: int = 64) -> None:
        self.classifier = classifier.eval()
        self.name = name
        self.batch_size = batch_size

    @property
    def fingerprint(self) -> str:
        return f"{self.name}:{parameter_checksum(self.classifier)[:16]}"

    @property
    def device(self) -> torch.device:
        return next(self.classifier.parameters()).device

    @torch.no_grad()
    def _run(self, images: torch.Tensor, head: bool) -> np.ndarray:
        self.classifier.eval()
        out = []
        for start in range(0, images.shape[0], self.batch_size):
            x = images[start : start + self.batch_size].to(self.device)
            h = self.classifier.features(x)
            out.append(torch.sigmoid(self.classifier.backbone.fc(h)) if head else h)
        return torch.cat(out).double().cpu().numpy()

    def features(self, images: torch.Tensor) -> np.ndarray:
        return self._run(images, head=False)

    def probabilities(self, images: torch.Tensor) -> np.ndarray:
        return self._run(images, head=True)

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "n_attrs": self.classifier.n_attrs,
                "blocks": list(self.classifier.blocks),
                "name": self.name,
                "state": self.classifier.state_dict(),
            },
            path,
        )
        return path

    @classmethod
    def load(cls, path: Path, map_location: str | torch.device = "cpu") -> "ClassifierFeatures":
        payload = torch.load(path, map_location=map_location, weights_only=True)
        classifier = AttributeClassifier(payload["n_attrs"], payload["blocks"])
        classifier.load_state_dict(payload["state"])
        return cls(classifier.to(map_location), payload["name"])


def train_attribute_classifier(
    samples: Sequence[ImageSample],
    random: RunRandom,
    steps: int = 1500,
    batch_size: int = 32,
    lr: float = 1e-3,
    device: str | torch.device = "cpu",
) -> ClassifierFeatures:
    """Sigmoid outputs trained with binary cross-entropy on the labeled samples."""
    labeled = [s for s in samples if s.attrs is not None]
    if not labeled:
        raise ValueError("classifier training needs labeled samples")
    with random.seeded("classifier.init"):
        classifier = AttributeClassifier().to(device)
    optimizer = torch.optim.Adam(classifier.parameters(), lr=lr)
    batches = infinite_batches(labeled, batch_size, random.torch("classifier.batches"))

    classifier.train()
    for step in range(steps):
        pixels, attrs, _ = next(batches)
        logits = classifier(pixels.to(device))
        loss = F.binary_cross_entropy_with_logits(logits, attrs.to(device))
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        if (step + 1) % 250 == 0:
            logger.info(f"classifier step {step + 1}/{steps}: bce {float(loss):.4f}")
    return ClassifierFeatures(classifier.eval())


def class_probabilities(attr_probs: np.ndarray) -> np.ndarray:
    """
    Distribution over the valid domains from independent attribute
    sigmoids: each domain scores the product of its bit likelihoods, rows
    are renormalised.
    """
    attr_probs = np.clip(np.asarray(attr_probs, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    domains = np.array([d.bits for d in valid_domains()], dtype=np.float64)
    log_p = np.log(attr_probs) @ domains.T + np.log1p(-attr_probs) @ (1.0 - domains).T
    log_p -= log_p.max(axis=1, keepdims=True)
    p = np.exp(log_p)
    return p / p.sum(axis=1, keepdims=True)
