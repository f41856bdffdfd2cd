"""
Evaluation protocols: translation quality and retrieval precision.

Reports carry the extractor fingerprint; numbers are comparable only
between reports that share it.
"""

import csv
import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from apps.core.models import AttributeVector, ImageSample, stack_attrs, valid_domains
from apps.core.random import RunRandom
from apps.datasets.domains import sample_target_attrs
from apps.datasets.toy import ground_truth_translation
from apps.networks import RetrievalEmbedder, TranslationModel
from apps.retrieval import RetrievalIndex, query_batch
from apps.style_space import GMMStyleSpace

from .classifier import FeatureExtractor, class_probabilities
from .metrics import (
    GaussianStats,
    PrecisionAtK,
    accuracy_from_probabilities,
    exact_domain_accuracy,
    frechet_distance,
    inception_score,
    mean_pairwise_distance,
    p_at_10,
)

logger = logging.getLogger(__name__)

# (x, target attrs [B, n]) -> generator content input; defaults to E_c(x).
ContentFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _batches(samples: Sequence[ImageSample], size: int) -> list[Sequence[ImageSample]]:
    return [samples[i : i + size] for i in range(0, len(samples), size)]


@torch.no_grad()
def translate_batch(
    model: TranslationModel,
    style_space: GMMStyleSpace,
    x: torch.Tensor,
    targets: torch.Tensor,
    generator: torch.Generator | None,
    content_fn: ContentFn | None = None,
) -> torch.Tensor:
    content = content_fn(x, targets) if content_fn is not None else model.encode_content(x)
    style = style_space.sample_style(targets, generator, dtype=x.dtype).to(x.device)
    return model.decode(content, style, x).composite


@torch.no_grad()
def translate_to_random_targets(
    model: TranslationModel,
    style_space: GMMStyleSpace,
    samples: Sequence[ImageSample],
    random: RunRandom,
    batch_size: int = 32,
    content_fn: ContentFn | None = None,
) -> tuple[torch.Tensor, torch.Tensor, list[AttributeVector]]:
    """Translate each sample to a random other domain; returns (real, fake, targets) on CPU."""
    device = next(model.parameters()).device
    rng = random.numpy("evaluation.targets")
    generator = random.torch("evaluation.styles", device)
    model.eval()
    reals, fakes, targets = [], [], []
    for chunk in _batches(samples, batch_size):
        chunk_targets = [sample_target_attrs(s.attrs, rng) for s in chunk]
        x = torch.stack([s.pixels for s in chunk]).to(device)
        t = stack_attrs(chunk_targets).to(device)
        fakes.append(translate_batch(model, style_space, x, t, generator, content_fn).cpu())
        reals.append(x.cpu())
        targets.extend(chunk_targets)
    return torch.cat(reals), torch.cat(fakes), targets


def feature_stats(extractor: FeatureExtractor, images: torch.Tensor) -> GaussianStats:
    return GaussianStats.from_features(extractor.features(images))


def lpips_input_indices(count: int, n: int, random: RunRandom) -> torch.Tensor:
    """A seeded random choice of min(n, count) distinct test positions, ascending."""
    picked = random.numpy("evaluation.lpips_inputs").choice(count, size=min(n, count), replace=False)
    return torch.from_numpy(np.sort(picked))


@torch.no_grad()
def lpips_diversity(
    model: TranslationModel,
    style_space: GMMStyleSpace,
    inputs: torch.Tensor,
    extractor: FeatureExtractor,
    random: RunRandom,
    samples_per_domain: int = 10,
    domains: Sequence[AttributeVector] | None = None,
    content_fn: ContentFn | None = None,
) -> float:
    """
    For every input and domain, translate with `samples_per_domain` style
    draws and average the feature L2 distance over all unordered pairs;
    the result is the mean over domains and inputs.
    """
    device = next(model.parameters()).device
    generator = random.torch("evaluation.diversity", device)
    domains = list(domains) if domains is not None else list(valid_domains())
    model.eval()
    scores = []
    for x in inputs:
        batch = x.unsqueeze(0).expand(samples_per_domain, -1, -1, -1).to(device)
        for domain in domains:
            targets = stack_attrs([domain] * samples_per_domain).to(device)
            fakes = translate_batch(model, style_space, batch, targets, generator, content_fn)
            scores.append(mean_pairwise_distance(extractor.features(fakes)))
    return float(np.mean(scores))


def ground_truth_l1(fakes: torch.Tensor, samples: Sequence[ImageSample], targets: Sequence[AttributeVector]) -> float:
    """Mean L1 between translations and re-rendered ground truth (toy data only)."""
    truth = torch.stack([ground_truth_translation(s, t) for s, t in zip(samples, targets)])
    return float((fakes.cpu() - truth).abs().mean())


def input_l1(reals: torch.Tensor, samples: Sequence[ImageSample], targets: Sequence[AttributeVector]) -> float:
    truth = torch.stack([ground_truth_translation(s, t) for s, t in zip(samples, targets)])
    return float((reals.cpu() - truth).abs().mean())


def closer_than_input(
    reals: torch.Tensor, fakes: torch.Tensor, samples: Sequence[ImageSample], targets: Sequence[AttributeVector]
) -> float:
    """Fraction of cases where the translation is nearer (L1) to ground truth than the input is."""
    truth = torch.stack([ground_truth_translation(s, t) for s, t in zip(samples, targets)])
    d_fake = (fakes.cpu() - truth).abs().flatten(1).mean(1)
    d_real = (reals.cpu() - truth).abs().flatten(1).mean(1)
    return float((d_fake < d_real).double().mean())


def domain_accuracy(extractor: FeatureExtractor, images: torch.Tensor, targets: Sequence[AttributeVector]) -> float:
    """Fraction of images classified into exactly their target domain."""
    return exact_domain_accuracy(extractor.probabilities(images), stack_attrs(targets).numpy())


def attribute_accuracy(
    extractor: FeatureExtractor, images: torch.Tensor, targets: Sequence[AttributeVector]
) -> tuple[tuple[float, ...], float]:
    accuracy = accuracy_from_probabilities(extractor.probabilities(images), stack_attrs(targets).numpy())
    return accuracy.per_attribute, accuracy.mean


@dataclass
class TranslationReport:
    fid: float
    inception_score: float
    lpips: float
    accuracy: float
    per_attribute_accuracy: tuple[float, ...]
    domain_accuracy: float
    n: int
    n_lpips_inputs: int
    extractor_fingerprint: str
    seed: int
    checkpoint: str
    ground_truth_l1: float | None = None
    closer_than_input: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def eval_translation(
    model: TranslationModel,
    style_space: GMMStyleSpace,
    test: Sequence[ImageSample],
    extractor: FeatureExtractor,
    random: RunRandom,
    checkpoint: str = "",
    lpips_inputs: int = 100,
    samples_per_domain: int = 10,
    content_fn: ContentFn | None = None,
) -> TranslationReport:
    """Translate every test image to a random other domain and score the result."""
    labeled = [s for s in test if s.attrs is not None]
    if len(labeled) < 2:
        raise ValueError("translation evaluation needs at least two labeled test images")
    reals, fakes, targets = translate_to_random_targets(model, style_space, labeled, random, content_fn=content_fn)

    fid = frechet_distance(feature_stats(extractor, reals), feature_stats(extractor, fakes))
    score = inception_score(class_probabilities(extractor.probabilities(fakes)))
    per_attribute, mean_accuracy = attribute_accuracy(extractor, fakes, targets)
    chosen = lpips_input_indices(len(labeled), lpips_inputs, random)
    n_lpips = len(chosen)
    lpips = lpips_diversity(
        model, style_space, reals[chosen], extractor, random, samples_per_domain, content_fn=content_fn
    )

    report = TranslationReport(
        fid=fid,
        inception_score=score,
        lpips=lpips,
        accuracy=mean_accuracy,
        per_attribute_accuracy=per_attribute,
        domain_accuracy=domain_accuracy(extractor, fakes, targets),
        n=len(labeled),
        n_lpips_inputs=n_lpips,
        extractor_fingerprint=extractor.fingerprint,
        seed=random.seed,
        checkpoint=checkpoint,
    )
    if all(s.meta is not None for s in labeled):
        report.ground_truth_l1 = ground_truth_l1(fakes, labeled, targets)
        report.closer_than_input = closer_than_input(reals, fakes, labeled, targets)
    logger.info(f"Translation report: FID {fid:.3f}, IS {score:.3f}, LPIPS {lpips:.4f}, ACC {mean_accuracy:.3f}")
    return report


@dataclass(frozen=True)
class RetrievalRow:
    name: str
    attr_sim: float
    content_sim: float
    avg: float
    n: int


@dataclass
class RetrievalReport:
    rows: list[RetrievalRow]
    k: int
    seed: int
    index_fingerprint: str

    def row(self, name: str) -> RetrievalRow:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _summarise(name: str, scores: Sequence[PrecisionAtK]) -> RetrievalRow:
    attr = float(np.mean([s.attr_sim for s in scores]))
    content = float(np.mean([s.content_sim for s in scores]))
    return RetrievalRow(name, attr, content, (attr + content) / 2.0, len(scores))


@torch.no_grad()
def eval_retrieval(
    model: TranslationModel,
    embedder: RetrievalEmbedder,
    style_space: GMMStyleSpace,
    index: RetrievalIndex,
    test: Sequence[ImageSample],
    random: RunRandom,
    k: int = 10,
    name: str = "learned",
    batch_size: int = 64,
) -> RetrievalReport:
    """One query per test image with a random target domain, scored by P@k; adds a random baseline row."""
    if k > len(index):
        raise ValueError(f"k={k} exceeds the index size {len(index)}")
    device = next(embedder.parameters()).device
    rng = random.numpy("evaluation.retrieval.targets")
    baseline_rng = random.numpy("evaluation.retrieval.baseline")
    learned, baseline = [], []
    for chunk in _batches(test, batch_size):
        targets = [sample_target_attrs(s.attrs, rng) for s in chunk]
        x = torch.stack([s.pixels for s in chunk]).to(device)
        hits = query_batch(index, embedder, style_space, model.encode_content(x), targets, k)
        for sample, target, row in zip(chunk, targets, hits):
            learned.append(p_at_10(sample, target, row))
            picks = baseline_rng.choice(len(index), size=k, replace=False)
            baseline.append(p_at_10(sample, target, [index.entry(int(i)) for i in picks]))
    report = RetrievalReport(
        rows=[_summarise(name, learned), _summarise("random", baseline)],
        k=k,
        seed=random.seed,
        index_fingerprint=index.fingerprint,
    )
    logger.info(f"Retrieval P@{k}: {name} {report.rows[0].attr_sim:.3f} vs random {report.rows[1].attr_sim:.3f}")
    return report


def write_json(payload: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=list), encoding="utf-8")
    return path


def write_csv(rows: Sequence[dict[str, Any]], path: Path) -> Path:
    """Rows as a CSV table; columns follow the first row's key order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        if rows:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path
