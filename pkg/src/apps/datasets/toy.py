"""
Procedural toy dataset with paired ground truth.

Attribute semantics mirror the face domains: bits 0-2 pick the foreground
hue (red/green/blue), bit 3 the shape (circle/square), bit 4 the size
(large/small). Content parameters (position, rotation, background) fix the
geometry, so re-rendering a spec with new attributes yields the exact
translation the real data never provides.
"""

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from apps.core.models import HAIR_BITS, AttributeVector, DatasetSplit, ImageSample

from .preprocess import to_pil

logger = logging.getLogger(__name__)

HUES = np.array(
    [
        [0.9, -0.8, -0.8],
        [-0.8, 0.9, -0.8],
        [-0.8, -0.8, 0.9],
    ],
    dtype=np.float32,
)
NO_HUE = np.array([0.5, 0.5, 0.5], dtype=np.float32)
LARGE_RADIUS = 0.28
SMALL_RADIUS = 0.16
# Half side of the square relative to the radius.
SQUARE_RATIO = 0.85
DARK_BACKGROUND = -0.4


@dataclass(frozen=True, slots=True)
class ToySpec:
    """Everything needed to render one toy image."""

    x: float
    y: float
    rotation: float
    background_seed: int
    attrs: AttributeVector
    size: int


@dataclass(frozen=True)
class ToyPriors:
    """Sampling probabilities of the toy attributes."""

    hair: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    male: float = 0.5
    young: float = 0.5


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    coords = np.arange(size, dtype=np.float32) + 0.5
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    return yy, xx


def _background(spec: ToySpec) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(spec.background_seed)
    brightness = float(rng.uniform(-0.9, 0.1))
    c0 = (brightness + rng.uniform(-0.1, 0.1, 3)).astype(np.float32)
    c1 = (brightness + rng.uniform(-0.1, 0.1, 3)).astype(np.float32)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = _grid(spec.size)
    t = ((xx - spec.size / 2) * np.cos(angle) + (yy - spec.size / 2) * np.sin(angle)) / spec.size + 0.5
    t = np.clip(t, 0.0, 1.0)[None]
    return (c0[:, None, None] * (1 - t) + c1[:, None, None] * t).astype(np.float32), brightness


def foreground_mask(spec: ToySpec) -> np.ndarray:
    """Boolean [size, size] mask of the attribute-controlled pixels."""
    yy, xx = _grid(spec.size)
    young = spec.attrs.bits[4]
    radius = spec.size * (SMALL_RADIUS if young else LARGE_RADIUS)
    dx, dy = xx - spec.x, yy - spec.y
    if spec.attrs.bits[3]:
        theta = np.deg2rad(spec.rotation)
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        half = radius * SQUARE_RATIO
        return (np.abs(u) <= half) & (np.abs(v) <= half)
    return dx**2 + dy**2 <= radius**2


def _hue(attrs: AttributeVector) -> np.ndarray:
    chosen = [i for i in range(HAIR_BITS) if attrs.bits[i]]
    if not chosen:
        return NO_HUE
    return HUES[chosen].mean(axis=0)


def render_toy(spec: ToySpec) -> torch.Tensor:
    """Render a spec into a float tensor [3, size, size] in [-1, 1]."""
    image, _ = _background(spec)
    mask = foreground_mask(spec)
    image = np.where(mask[None], _hue(spec.attrs)[:, None, None], image)
    return torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))


def content_bins(spec: ToySpec) -> tuple[bool, ...]:
    """Binned content parameters used as auxiliary (non-domain) annotations."""
    _, brightness = _background(spec)
    half = spec.size / 2
    return (spec.x >= half, spec.y >= half, spec.rotation % 90 >= 45, brightness < DARK_BACKGROUND)


def _sample(spec: ToySpec, index: int) -> ImageSample:
    return ImageSample(
        id=f"toy_{index:06d}",
        attrs=spec.attrs,
        data=render_toy(spec),
        aux=content_bins(spec),
        meta=spec,
    )


def generate_toy_dataset(
    count: int,
    size: int,
    seed: int,
    priors: ToyPriors = ToyPriors(),
    test_fraction: float = 0.1,
) -> DatasetSplit:
    """Deterministically sample `count` toy images; the last `test_fraction` form the test split."""
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    if size % 4:
        raise ValueError(f"image size must be divisible by 4, got {size}")

    rng = np.random.default_rng(seed)
    margin = size * LARGE_RADIUS
    samples = []
    for index in range(count):
        hair = int(rng.choice(HAIR_BITS, p=np.asarray(priors.hair)))
        male = bool(rng.random() < priors.male)
        young = bool(rng.random() < priors.young)
        attrs = AttributeVector((*(i == hair for i in range(HAIR_BITS)), male, young))
        spec = ToySpec(
            x=float(rng.uniform(margin, size - margin)),
            y=float(rng.uniform(margin, size - margin)),
            rotation=float(rng.uniform(0.0, 90.0)),
            background_seed=int(rng.integers(2**31)),
            attrs=attrs,
            size=size,
        )
        samples.append(_sample(spec, index))

    n_test = round(count * test_fraction)
    train = tuple(samples[: count - n_test])
    test = tuple(samples[count - n_test :])
    logger.info(f"Generated toy dataset: {len(train)} train / {len(test)} test at {size}px (seed {seed})")
    return DatasetSplit(train=train, test=test, retrieval_set=train)


def ground_truth_translation(sample: ImageSample, target: AttributeVector) -> torch.Tensor:
    """Re-render a toy sample with new attributes."""
    if not isinstance(sample.meta, ToySpec):
        raise ValueError(f"sample {sample.id} has no toy spec; ground truth exists only for toy data")
    return render_toy(replace(sample.meta, attrs=target))


def save_toy_dataset(split: DatasetSplit, directory: Path) -> Path:
    """Write PNGs under `directory/images` plus `manifest.json`; returns the manifest path."""
    images = directory / "images"
    images.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, samples in (("train", split.train), ("test", split.test)):
        for sample in samples:
            spec: ToySpec = sample.meta
            to_pil(sample.pixels).save(images / f"{sample.id}.png")
            record = asdict(spec)
            record["attrs"] = [int(b) for b in spec.attrs.bits]
            entries.append({"id": sample.id, "split": name, "spec": record})
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"samples": entries}, indent=1), encoding="utf-8")
    logger.info(f"Saved {len(entries)} toy images to {directory}")
    return manifest


def load_toy_dataset(directory: Path) -> DatasetSplit:
    """Re-render a saved toy dataset from its manifest."""
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    train, test = [], []
    for entry in manifest["samples"]:
        record = dict(entry["spec"])
        record["attrs"] = AttributeVector.of(record["attrs"])
        spec = ToySpec(**record)
        sample = replace(_sample(spec, 0), id=entry["id"])
        (train if entry["split"] == "train" else test).append(sample)
    return DatasetSplit(train=tuple(train), test=tuple(test), retrieval_set=tuple(train))
