"""
Ingestion of attribute-annotated image folders in the CelebA layout.
"""

import logging
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np
import torch

from apps.core.exceptions import AttributeFileError, MissingImagesError
from apps.core.models import AttributeVector, DatasetSplit, ImageSample

from .preprocess import preprocess_image

logger = logging.getLogger(__name__)

DOMAIN_COLUMNS: tuple[str, ...] = ("Black_Hair", "Blond_Hair", "Brown_Hair", "Male", "Young")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class AttributeTable:
    """Parsed attribute file: column names and boolean rows keyed by filename."""

    columns: tuple[str, ...]
    rows: dict[str, tuple[bool, ...]]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise AttributeFileError(name, "required column missing from header") from None


def _split_fields(line: str) -> list[str]:
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _parse_flag(value: str, column: str, filename: str) -> bool:
    if value in ("1", "+1"):
        return True
    if value in ("-1", "0"):
        return False
    raise AttributeFileError(column, f"invalid flag {value!r} for {filename}")


def read_attribute_table(attr_file: Path) -> AttributeTable:
    """
    Read a header+rows table mapping filename to signed flags.

    Accepts the original whitespace layout (optional leading row count,
    header without a filename column) as well as CSV with an ``image_id``
    first column. Flags may be ±1 or 0/1.
    """
    lines = [ln for ln in attr_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if lines and lines[0].strip().isdigit():
        lines = lines[1:]
    if not lines:
        return AttributeTable(columns=(), rows={})

    header = _split_fields(lines[0])
    body = [_split_fields(ln) for ln in lines[1:]]
    n_values = len(body[0]) - 1 if body else len(header)
    if len(header) == n_values + 1:
        header = header[1:]
    elif len(header) != n_values:
        raise AttributeFileError(
            header[-1] if header else "<header>",
            f"header names {len(header)} columns but rows carry {n_values} flags",
        )
    if len(set(header)) != len(header):
        duplicate = next(c for c in header if header.count(c) > 1)
        raise AttributeFileError(duplicate, "duplicate column name")

    rows: dict[str, tuple[bool, ...]] = {}
    for fields in body:
        filename, values = fields[0], fields[1:]
        if len(values) != len(header):
            missing = header[len(values)] if len(values) < len(header) else "<extra>"
            raise AttributeFileError(missing, f"row {filename} has {len(values)} flags")
        rows[filename] = tuple(_parse_flag(v, c, filename) for v, c in zip(values, header))
    return AttributeTable(columns=tuple(header), rows=rows)


def write_attribute_table(table: AttributeTable, attr_file: Path) -> None:
    """Serialize in the whitespace layout with ±1 flags, rows ordered by filename."""
    lines = [str(len(table.rows)), " ".join(table.columns)]
    for filename in sorted(table.rows):
        flags = " ".join("1" if b else "-1" for b in table.rows[filename])
        lines.append(f"{filename} {flags}")
    attr_file.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_pixels(path: Path, image_size: int) -> torch.Tensor:
    return preprocess_image(path.read_bytes(), image_size)


def load_attribute_dataset(
    root_path: Path,
    attr_file: Path,
    image_size: int = 128,
    test_size: int = 2000,
    seed: int = 0,
    domain_columns: tuple[str, ...] = DOMAIN_COLUMNS,
) -> DatasetSplit:
    """
    Build a split from an image folder and its attribute table.

    Images load lazily. Domain columns become the sample's AttributeVector,
    every other column its auxiliary annotations. Raw labels are stored
    verbatim, so hair exclusivity is not enforced here.
    """
    table = read_attribute_table(attr_file)
    if not table.rows:
        logger.info(f"Attribute file {attr_file} has no rows; returning an empty split")
        return DatasetSplit.empty()

    domain_idx = [table.column_index(c) for c in domain_columns]
    aux_idx = [i for i in range(len(table.columns)) if i not in domain_idx]

    filenames = sorted(table.rows)
    missing = [f for f in filenames if not (root_path / f).is_file()]
    if missing:
        raise MissingImagesError(missing)

    samples = []
    for filename in filenames:
        flags = table.rows[filename]
        path = root_path / filename
        samples.append(
            ImageSample(
                id=filename,
                attrs=AttributeVector(tuple(flags[i] for i in domain_idx)),
                loader=partial(_load_pixels, path, image_size),
                path=path,
                aux=tuple(flags[i] for i in aux_idx),
            )
        )

    rng = np.random.default_rng(seed)
    n_test = min(test_size, len(samples))
    test_positions = set(rng.permutation(len(samples))[:n_test].tolist())
    train = tuple(s for i, s in enumerate(samples) if i not in test_positions)
    test = tuple(s for i, s in enumerate(samples) if i in test_positions)
    logger.info(f"Loaded {len(samples)} images from {root_path}: {len(train)} train / {len(test)} test")
    return DatasetSplit(train=train, test=test, retrieval_set=train)


def add_unlabeled_images(split: DatasetSplit, image_dir: Path, image_size: int = 128) -> DatasetSplit:
    """Extend the retrieval set with every image of `image_dir`, without attributes."""
    known = {s.id for s in split.retrieval_set} | {s.id for s in split.test}
    extra = []
    for path in sorted(p for p in image_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        image_id = f"unlabeled/{path.name}"
        if image_id in known:
            continue
        extra.append(
            ImageSample(id=image_id, attrs=None, loader=partial(_load_pixels, path, image_size), path=path)
        )
    logger.info(f"Added {len(extra)} unlabeled images from {image_dir} to the retrieval set")
    return replace(split, retrieval_set=split.retrieval_set + tuple(extra))


def subsample_train(split: DatasetSplit, fraction: float, seed: int) -> DatasetSplit:
    """Keep a seeded `fraction` of the training images; the retrieval set stays full."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0:
        return split
    rng = np.random.default_rng(seed)
    keep = max(1, round(len(split.train) * fraction))
    chosen = sorted(rng.permutation(len(split.train))[:keep].tolist())
    return replace(split, train=tuple(split.train[i] for i in chosen))
