"""
Image-quality and retrieval metrics.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist
from scipy.special import rel_entr

from apps.core.models import AttributeVector, ImageSample

# Eigenvalues above -EIGEN_TOLERANCE * max|eig| are treated as round-off and clipped to 0.
EIGEN_TOLERANCE = 1e-8


@dataclass(frozen=True)
class GaussianStats:
    """Mean and covariance of a set of feature vectors."""

    mean: np.ndarray = field(compare=False)
    cov: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise ValueError(f"covariance {cov.shape} does not match mean {mean.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-6, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @classmethod
    def from_features(cls, features: np.ndarray) -> "GaussianStats":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 2:
            raise ValueError("need at least two feature vectors of shape [N, D]")
        return cls(features.mean(axis=0), np.cov(features, rowvar=False))

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition."""
    values, vectors = linalg.eigh(matrix)
    values = _clip_eigenvalues(values)
    return (vectors * np.sqrt(values)) @ vectors.T


def _clip_eigenvalues(values: np.ndarray) -> np.ndarray:
    scale = max(float(np.abs(values).max(initial=0.0)), 1.0)
    if (values < -EIGEN_TOLERANCE * scale).any():
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {values.min():.3e})")
    return np.clip(values, 0.0, None)


def trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    """Tr((AB)^1/2) for symmetric PSD A, B, computed as Tr((A^1/2 B A^1/2)^1/2)."""
    root_a = _psd_sqrt(a)
    inner = root_a @ b @ root_a
    values = _clip_eigenvalues(linalg.eigvalsh((inner + inner.T) / 2.0))
    return float(np.sqrt(values).sum())


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    if a.dim != b.dim:
        raise ValueError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    value = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_sqrt_product(a.cov, b.cov)
    return max(value, 0.0)


def inception_score(probs: np.ndarray) -> float:
    """exp(mean KL(p(y|x) || p(y))) over rows of a [N, K] probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("probabilities must be a non-empty [N, K] matrix")
    if (probs < 0).any() or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("rows must be probability distributions")
    marginal = probs.mean(axis=0, keepdims=True)
    kl = rel_entr(probs, marginal).sum(axis=1)
    return float(np.clip(np.exp(kl.mean()), 1.0, probs.shape[1]))


def mean_pairwise_distance(features: np.ndarray) -> float:
    """Average L2 distance over all unordered pairs of rows."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] < 2:
        raise ValueError("need at least two samples for a pairwise distance")
    return float(pdist(features, metric="euclidean").mean())


@dataclass(frozen=True)
class AttributeAccuracy:
    per_attribute: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_attribute))


def accuracy_from_probabilities(probs: np.ndarray, targets: np.ndarray, threshold: float = 0.5) -> AttributeAccuracy:
    """An attribute counts as positive when its score is above `threshold`."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets) > 0.5
    if probs.shape != targets.shape:
        raise ValueError(f"probabilities {probs.shape} do not match targets {targets.shape}")
    correct = (probs > threshold) == targets
    return AttributeAccuracy(tuple(float(v) for v in correct.mean(axis=0)))


def exact_domain_accuracy(probs: np.ndarray, targets: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of rows whose thresholded prediction matches every target bit."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets) > 0.5
    return float(((probs > threshold) == targets).all(axis=1).mean())


@dataclass(frozen=True)
class PrecisionAtK:
    attr_sim: float
    content_sim: float

    @property
    def avg(self) -> float:
        return (self.attr_sim + self.content_sim) / 2.0


class AnnotatedResult(Protocol):
    """Anything carrying an id plus ground-truth attrs and aux annotations."""

    @property
    def id(self) -> str: ...

    @property
    def attrs(self) -> AttributeVector | None: ...

    @property
    def aux(self) -> tuple[bool, ...] | None: ...


def p_at_10(query: ImageSample, target: AttributeVector, results: Sequence[AnnotatedResult]) -> PrecisionAtK:
    """
    Attribute similarity: per domain attribute, the fraction of results whose
    bit equals the target's, averaged over attributes. Content similarity:
    the same over the auxiliary annotations against the query's own.
    """
    if not results:
        raise ValueError("no retrieval results to score")
    if query.aux is None:
        raise ValueError(f"query {query.id} has no auxiliary annotations")
    for r in results:
        if r.attrs is None or r.aux is None:
            raise ValueError(f"result {r.id} lacks ground-truth annotations")
    attrs = np.array([r.attrs.bits for r in results if r.attrs is not None], dtype=bool)
    aux = np.array([r.aux for r in results if r.aux is not None], dtype=bool)
    attr_sim = float((attrs == np.array(target.bits, dtype=bool)).mean(axis=0).mean())
    content_sim = float((aux == np.array(query.aux, dtype=bool)).mean(axis=0).mean())
    return PrecisionAtK(attr_sim, content_sim)
