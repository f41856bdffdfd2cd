"""
Domain types shared by all apps: attribute vectors, image samples and splits.
"""

import itertools
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cache
from pathlib import Path
from typing import Any

import torch

ATTRIBUTE_NAMES: tuple[str, ...] = ("black_hair", "blond_hair", "brown_hair", "male", "young")
N_ATTRS = len(ATTRIBUTE_NAMES)
# The first three bits are mutually exclusive when used as a translation target.
HAIR_BITS = 3


@dataclass(frozen=True, slots=True)
class AttributeVector:
    """Binary attribute flags ordered as ATTRIBUTE_NAMES."""

    bits: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.bits) != N_ATTRS:
            raise ValueError(f"expected {N_ATTRS} attribute bits, got {len(self.bits)}")

    @classmethod
    def of(cls, values: Iterable[int | bool | float]) -> "AttributeVector":
        return cls(tuple(bool(v) for v in values))

    @classmethod
    def from_tensor(cls, tensor: torch.Tensor) -> "AttributeVector":
        return cls.of((tensor > 0.5).tolist())

    @property
    def is_valid_domain(self) -> bool:
        return sum(self.bits[:HAIR_BITS]) == 1

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.tensor(self.bits, dtype=dtype)

    def differing_bits(self, other: "AttributeVector") -> int:
        return sum(a != b for a, b in zip(self.bits, other.bits, strict=True))

    def describe(self) -> str:
        hair = [n.removesuffix("_hair") for n, b in zip(ATTRIBUTE_NAMES[:HAIR_BITS], self.bits) if b]
        gender = "male" if self.bits[3] else "female"
        age = "young" if self.bits[4] else "old"
        return "+".join([*(hair or ["nohair"]), gender, age])

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


@cache
def valid_domains() -> tuple[AttributeVector, ...]:
    """The 12 attribute configurations with exactly one hair bit set."""
    domains = []
    for hair in range(HAIR_BITS):
        for male, young in itertools.product((False, True), repeat=2):
            hair_bits = tuple(i == hair for i in range(HAIR_BITS))
            domains.append(AttributeVector((*hair_bits, male, young)))
    return tuple(domains)


def parse_target(text: str, base: AttributeVector | None = None) -> AttributeVector:
    """
    Parse a comma separated target such as ``blond,female``.

    Unspecified gender/age bits are inherited from `base`, defaulting to
    female and young.
    """
    bits = list(base.bits) if base is not None else [False, False, False, False, True]
    hair_names = [n.removesuffix("_hair") for n in ATTRIBUTE_NAMES[:HAIR_BITS]]
    for token in (t.strip().lower() for t in text.split(",") if t.strip()):
        if token in hair_names:
            bits[:HAIR_BITS] = [token == h for h in hair_names]
        elif token in ("male", "female"):
            bits[3] = token == "male"
        elif token in ("young", "old"):
            bits[4] = token == "young"
        else:
            raise ValueError(f"unknown target attribute {token!r}")
    return AttributeVector.of(bits)


def stack_attrs(vectors: Sequence[AttributeVector], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.stack([v.to_tensor(dtype) for v in vectors])


@dataclass(frozen=True, slots=True)
class ImageSample:
    """
    One image of a split.

    Pixels are either held in memory or produced lazily by `loader`.
    `aux` holds the non-domain annotations used for content similarity;
    `meta` carries generator parameters for procedurally rendered images.
    """

    id: str
    attrs: AttributeVector | None
    data: torch.Tensor | None = field(default=None, compare=False, repr=False)
    loader: Callable[[], torch.Tensor] | None = field(default=None, compare=False)
    path: Path | None = None
    aux: tuple[bool, ...] | None = None
    meta: Any = None

    @property
    def pixels(self) -> torch.Tensor:
        if self.data is not None:
            return self.data
        if self.loader is None:
            raise ValueError(f"sample {self.id} has neither pixels nor a loader")
        return self.loader()

    @property
    def labeled(self) -> bool:
        return self.attrs is not None


@dataclass(frozen=True, slots=True)
class DatasetSplit:
    """Train / test / retrieval-set partition of a dataset."""

    train: tuple[ImageSample, ...]
    test: tuple[ImageSample, ...]
    retrieval_set: tuple[ImageSample, ...]

    def __post_init__(self) -> None:
        overlap = {s.id for s in self.train} & {s.id for s in self.test}
        if overlap:
            raise ValueError(f"train and test overlap on {sorted(overlap)[:5]}")

    @classmethod
    def empty(cls) -> "DatasetSplit":
        return cls((), (), ())

    def by_id(self) -> dict[str, ImageSample]:
        return {s.id: s for s in (*self.retrieval_set, *self.train, *self.test)}
