"""
Retrieval guidance: look up target-domain images and fuse their content
codes into the generator input.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import torch

from apps.core.exceptions import FingerprintMismatchError
from apps.core.models import AttributeVector, ImageSample
from apps.networks import RetrievalEmbedder, TranslationModel
from apps.retrieval import RetrievalIndex, query_batch
from apps.style_space import GMMStyleSpace

logger = logging.getLogger(__name__)


class RetrievalMode(StrEnum):
    LEARNED = "learned"
    RANDOM = "random"
    NONE = "none"


@dataclass(frozen=True)
class GuidanceConfig:
    r: int = 3
    mode: RetrievalMode = RetrievalMode.LEARNED
    exclude_self: bool = True

    def __post_init__(self) -> None:
        if self.r < 0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        object.__setattr__(self, "mode", RetrievalMode(self.mode))

    @property
    def active(self) -> bool:
        return self.mode is not RetrievalMode.NONE and self.r > 0


class RetrievalGuide:
    """
    Serves retrieved images for a batch of (image, target) queries.

    Retrieved pixels come from `retrieval_set`, which must contain every
    indexed id; their content codes are recomputed with the frozen E_c.
    """

    def __init__(
        self,
        model: TranslationModel,
        style_space: GMMStyleSpace,
        config: GuidanceConfig,
        index: RetrievalIndex | None = None,
        embedder: RetrievalEmbedder | None = None,
        retrieval_set: Sequence[ImageSample] = (),
        embedder_fingerprint: str | None = None,
    ) -> None:
        self.model = model
        self.style_space = style_space
        self.config = config
        self.index = index
        self.embedder = embedder
        self.samples = {s.id: s for s in retrieval_set}

        if not config.active:
            return
        if index is None:
            raise ValueError(f"{config.mode} guidance needs a retrieval index")
        if config.mode is RetrievalMode.LEARNED and embedder is None:
            raise ValueError("learned guidance needs the retrieval embedder")
        if embedder_fingerprint is not None and embedder_fingerprint != index.fingerprint:
            raise FingerprintMismatchError(
                f"index was built with embedder {index.fingerprint[:12]}, "
                f"but embedder {embedder_fingerprint[:12]} is loaded",
                required_stage="build-index",
            )
        missing = [i for i in index.ids if i not in self.samples]
        if missing:
            raise ValueError(f"{len(missing)} indexed ids are not in the retrieval set, e.g. {missing[:3]}")
        if config.r > len(index):
            raise ValueError(f"cannot retrieve r={config.r} images from an index of {len(index)}")

    def retrieve(
        self,
        content: torch.Tensor,
        targets: Sequence[AttributeVector],
        exclude_ids: Sequence[str | None] | None,
        rng: np.random.Generator,
    ) -> list[list[ImageSample]]:
        """r retrieved samples per query."""
        assert self.index is not None
        r = self.config.r
        excluded = list(exclude_ids) if exclude_ids is not None and self.config.exclude_self else [None] * len(targets)

        if self.config.mode is RetrievalMode.LEARNED:
            assert self.embedder is not None
            hits = query_batch(self.index, self.embedder, self.style_space, content, targets, r, excluded)
            return [[self.samples[e.id] for e in row] for row in hits]

        rows = []
        ids = self.index.ids
        for exclude in excluded:
            candidates = [i for i, id_ in enumerate(ids) if id_ != exclude]
            if r > len(candidates):
                raise ValueError(f"cannot retrieve r={r} images from {len(candidates)} candidates")
            picks = rng.choice(len(candidates), size=r, replace=False)
            rows.append([self.samples[ids[candidates[int(p)]]] for p in picks])
        return rows

    def retrieve_and_fuse(
        self,
        x: torch.Tensor,
        targets: torch.Tensor | Sequence[AttributeVector],
        exclude_ids: Sequence[str | None] | None,
        rng: np.random.Generator,
    ) -> torch.Tensor:
        """c_total for a batch; in mode none (or r = 0) this is E_c(x)."""
        content = self.model.encode_content(x)
        if not self.config.active:
            return content
        if isinstance(targets, torch.Tensor):
            targets = [AttributeVector.from_tensor(t) for t in targets]

        retrieved = self.retrieve(content.detach(), targets, exclude_ids, rng)
        codes = []
        with torch.no_grad():
            for j in range(self.config.r):
                pixels = torch.stack([row[j].pixels for row in retrieved]).to(x)
                codes.append(self.model.encode_content(pixels))
        return self.model.fuse_content(content, codes)
