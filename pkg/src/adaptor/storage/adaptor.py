"""
Run-directory storage.

A run directory holds everything needed to re-run an experiment exactly:
the resolved config, a fingerprint of the code, per-stage metrics logs,
checkpoints, the retrieval index, reports and rendered samples.
"""

import hashlib
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from apps.core.exceptions import PreconditionError
from config import config

logger = logging.getLogger(__name__)

SOURCE_ROOT = Path(__file__).resolve().parents[2]

# Artifact -> subcommand that produces it.
PRODUCERS: dict[str, str] = {
    "toy": "make-toy",
    "base": "train-base",
    "retrieval": "train-retrieval",
    "index": "build-index",
    "guided": "train-guided",
}


class MetricsLog:
    """Append-only JSON-lines log of per-step training metrics."""

    def __init__(self, path: Path) -> None:
        self.path = path

    def write(self, step: int, values: Mapping[str, float]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        record = {"step": step, **{k: float(v) for k, v in values.items()}}
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record) + "\n")

    def read(self) -> list[dict[str, float]]:
        if not self.path.exists():
            return []
        with self.path.open(encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]


def source_fingerprint(root: Path = SOURCE_ROOT) -> str:
    """Git-style SHA-1 tree hash over the Python sources under `root`."""
    tree = hashlib.sha1()
    for path in sorted(root.rglob("*.py")):
        if "tests" in path.parts or "__pycache__" in path.parts:
            continue
        content = path.read_bytes()
        blob = hashlib.sha1(b"blob %d\0" % len(content) + content).hexdigest()
        tree.update(f"{path.relative_to(root).as_posix()} {blob}\n".encode("utf-8"))
    return tree.hexdigest()


@dataclass(frozen=True)
class ArtifactStore:
    root: Path

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def version_path(self) -> Path:
        return self.root / "VERSION"

    @property
    def toy_dir(self) -> Path:
        return self.root / "toy"

    @property
    def index_path(self) -> Path:
        return self.root / "index" / "retrieval.idx"

    def checkpoint(self, stage: str) -> Path:
        return self.root / "checkpoints" / f"{stage}.pt"

    def metrics(self, stage: str) -> MetricsLog:
        return MetricsLog(self.root / "metrics" / f"{stage}.jsonl")

    def report(self, name: str, suffix: str = "json") -> Path:
        path = self.root / "reports" / f"{name}.{suffix}"
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def sample(self, name: str) -> Path:
        path = self.root / "samples" / f"{name}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_provenance(self, resolved_config: Mapping[str, Any]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(json.dumps(resolved_config, indent=2, sort_keys=True), encoding="utf-8")
        fingerprint = source_fingerprint()
        self.version_path.write_text(fingerprint + "\n", encoding="utf-8")
        logger.info(f"Recorded provenance in {self.root} (source {fingerprint[:12]})")

    def require(self, path: Path, artifact: str) -> Path:
        """Return `path` or fail naming the subcommand that produces it."""
        if not path.exists():
            stage = PRODUCERS.get(artifact, artifact)
            raise PreconditionError(f"{stage} required: {path} not found", required_stage=stage)
        return path


def get_store(out_dir: Path | str | None = None) -> ArtifactStore:
    return ArtifactStore(Path(out_dir) if out_dir is not None else Path(config.RUNS_DIR) / "default")
