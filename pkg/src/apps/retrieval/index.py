"""
Flat exhaustive-scan retrieval index.

On-disk layout (all integers little-endian):

    4s   magic b"RGIX"
    u32  format version
    u16  fingerprint length, then the UTF-8 embedder fingerprint
    u32  embedding dimension D
    u32  entry count N
    N*D  float32 embeddings, row-major
    N x (u16 length + UTF-8 id)
    u32  length, then a JSON list of {"attrs": [0/1...] | null, "aux": [0/1...] | null}
"""

import json
import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np
import torch

from apps.core.models import AttributeVector, ImageSample, stack_attrs
from apps.networks import RetrievalEmbedder, TranslationModel, parameter_checksum
from apps.style_space import GMMStyleSpace

logger = logging.getLogger(__name__)

INDEX_MAGIC = b"RGIX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class RetrievalEntry:
    id: str
    embedding: np.ndarray = field(compare=False, repr=False)
    attrs: AttributeVector | None = None
    aux: tuple[bool, ...] | None = None


@dataclass(frozen=True)
class RetrievalIndex:
    ids: tuple[str, ...]
    embeddings: np.ndarray = field(compare=False, repr=False)
    fingerprint: str = ""
    attrs: tuple[AttributeVector | None, ...] = ()
    aux: tuple[tuple[bool, ...] | None, ...] = ()
    _id_rank: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        embeddings = np.array(self.embeddings, dtype=np.float32, copy=True)
        if embeddings.ndim != 2 or embeddings.shape[0] != len(self.ids):
            raise ValueError(f"embeddings {embeddings.shape} do not match {len(self.ids)} ids")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")
        if not np.isfinite(embeddings).all():
            raise ValueError("index embeddings must be finite")
        if not (len(self.attrs) == len(self.aux) == len(self.ids)):
            raise ValueError("annotation count does not match entry count")
        embeddings.flags.writeable = False
        object.__setattr__(self, "embeddings", embeddings)
        # Rank of each id in ascending order, for distance tie-breaks.
        object.__setattr__(self, "_id_rank", np.argsort(np.argsort(np.array(self.ids, dtype=str))))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def entry(self, i: int) -> RetrievalEntry:
        return RetrievalEntry(self.ids[i], self.embeddings[i], self.attrs[i], self.aux[i])

    @property
    def entries(self) -> list[RetrievalEntry]:
        return [self.entry(i) for i in range(len(self))]

    def distances(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(-1)
        if query.shape[0] != self.dim:
            raise ValueError(f"query has {query.shape[0]} dims, index has {self.dim}")
        diff = self.embeddings.astype(np.float64) - query
        return np.sqrt((diff * diff).sum(axis=1))

    def nearest(self, query: np.ndarray, k: int, exclude_id: str | None = None) -> list[tuple[RetrievalEntry, float]]:
        """The k closest entries with their distances, ascending; ties break by id."""
        available = len(self) - (1 if exclude_id is not None and exclude_id in self.ids else 0)
        if k < 0 or k > available:
            raise ValueError(f"k={k} exceeds the {available} searchable entries")
        distances = self.distances(query)
        order = np.lexsort((self._id_rank, distances))
        hits = []
        for i in order:
            if len(hits) == k:
                break
            if self.ids[i] == exclude_id:
                continue
            hits.append((self.entry(int(i)), float(distances[i])))
        return hits


@torch.no_grad()
def embed(
    embedder: RetrievalEmbedder,
    content: torch.Tensor,
    style: torch.Tensor,
) -> np.ndarray:
    embedder.eval()
    return embedder(content, style).double().cpu().numpy()


@torch.no_grad()
def build_index(
    model: TranslationModel,
    embedder: RetrievalEmbedder,
    images: Sequence[ImageSample],
    batch_size: int = 64,
) -> RetrievalIndex:
    """Embed every image as (E_c(x), mean of E_s(x)); labels are not needed."""
    device = next(embedder.parameters()).device
    chunks = []
    for start in range(0, len(images), batch_size):
        x = torch.stack([s.pixels for s in images[start : start + batch_size]]).to(device)
        chunks.append(embed(embedder, model.encode_content(x), model.encode_style(x).mean))
    dim = embedder.mlp[-1].out_features
    embeddings = np.concatenate(chunks) if chunks else np.zeros((0, dim))
    index = RetrievalIndex(
        ids=tuple(s.id for s in images),
        embeddings=embeddings,
        fingerprint=parameter_checksum(embedder),
        attrs=tuple(s.attrs for s in images),
        aux=tuple(s.aux for s in images),
    )
    logger.info(f"Built retrieval index of {len(index)} entries ({index.fingerprint[:12]})")
    return index


def query_embeddings(
    embedder: RetrievalEmbedder,
    style_space: GMMStyleSpace,
    content: torch.Tensor,
    targets: Sequence[AttributeVector],
) -> np.ndarray:
    """Query embeddings pair each content code with its target component mean."""
    if content.dim() == 3:
        content = content.unsqueeze(0)
    means, _ = style_space.component_params(stack_attrs(targets), dtype=content.dtype)
    return embed(embedder, content, means.to(content.device))


def query(
    index: RetrievalIndex,
    embedder: RetrievalEmbedder,
    style_space: GMMStyleSpace,
    content: torch.Tensor,
    target: AttributeVector,
    k: int = 3,
    exclude_id: str | None = None,
) -> list[RetrievalEntry]:
    embedding = query_embeddings(embedder, style_space, content, [target])[0]
    return [entry for entry, _ in index.nearest(embedding, k, exclude_id)]


def query_batch(
    index: RetrievalIndex,
    embedder: RetrievalEmbedder,
    style_space: GMMStyleSpace,
    content: torch.Tensor,
    targets: Sequence[AttributeVector],
    k: int,
    exclude_ids: Sequence[str | None] | None = None,
) -> list[list[RetrievalEntry]]:
    embeddings = query_embeddings(embedder, style_space, content, targets)
    excluded = exclude_ids if exclude_ids is not None else [None] * len(targets)
    return [[e for e, _ in index.nearest(q, k, ex)] for q, ex in zip(embeddings, excluded)]


def _write_str(handle: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    handle.write(struct.pack("<H", len(raw)))
    handle.write(raw)


def _read_exact(handle: BinaryIO, n: int) -> bytes:
    raw = handle.read(n)
    if len(raw) != n:
        raise ValueError("truncated index file")
    return raw


def _read_str(handle: BinaryIO) -> str:
    (length,) = struct.unpack("<H", _read_exact(handle, 2))
    return _read_exact(handle, length).decode("utf-8")


def save_index(index: RetrievalIndex, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    annotations = [
        {
            "attrs": None if a is None else [int(b) for b in a.bits],
            "aux": None if x is None else [int(b) for b in x],
        }
        for a, x in zip(index.attrs, index.aux)
    ]
    blob = json.dumps(annotations).encode("utf-8")
    with path.open("wb") as handle:
        handle.write(INDEX_MAGIC)
        handle.write(struct.pack("<I", INDEX_VERSION))
        _write_str(handle, index.fingerprint)
        handle.write(struct.pack("<II", index.dim, len(index)))
        handle.write(index.embeddings.astype("<f4").tobytes())
        for id_ in index.ids:
            _write_str(handle, id_)
        handle.write(struct.pack("<I", len(blob)))
        handle.write(blob)
    logger.info(f"Saved retrieval index to {path}")
    return path


def load_index(path: Path) -> RetrievalIndex:
    with path.open("rb") as handle:
        if _read_exact(handle, 4) != INDEX_MAGIC:
            raise ValueError(f"{path} is not a retrieval index")
        (version,) = struct.unpack("<I", _read_exact(handle, 4))
        if version != INDEX_VERSION:
            raise ValueError(f"unsupported index version {version}")
        fingerprint = _read_str(handle)
        dim, count = struct.unpack("<II", _read_exact(handle, 8))
        embeddings = np.frombuffer(_read_exact(handle, 4 * dim * count), dtype="<f4").reshape(count, dim)
        ids = tuple(_read_str(handle) for _ in range(count))
        (length,) = struct.unpack("<I", _read_exact(handle, 4))
        annotations = json.loads(_read_exact(handle, length).decode("utf-8"))
    return RetrievalIndex(
        ids=ids,
        embeddings=embeddings,
        fingerprint=fingerprint,
        attrs=tuple(None if a["attrs"] is None else AttributeVector.of(a["attrs"]) for a in annotations),
        aux=tuple(None if a["aux"] is None else tuple(bool(b) for b in a["aux"]) for a in annotations),
    )
