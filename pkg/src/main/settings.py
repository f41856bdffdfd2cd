"""
Experiment settings.

An experiment is described by a flat JSON object with dotted keys, e.g.

    {"network.preset": "toy", "loss.cycle": 10, "guidance.r": 3}

Missing keys take the defaults below; unknown keys are rejected. Process
settings (device, directories, broker) live in `config.Config` instead.
"""

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from apps.core.exceptions import ConfigError
from apps.guided import GuidanceConfig, RetrievalMode
from apps.networks import NetworkConfig, preset
from apps.retrieval import STRATEGY_MIXES, RetrievalSettings
from apps.style_space import GMMStyleSpace
from apps.translation import LossWeights, OptimSettings, StyleReconTarget

logger = logging.getLogger(__name__)


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataSettings(Section):
    source: Literal["toy", "celeba"] = "toy"
    # CelebA: image directory and attribute file.
    root: str | None = None
    attr_file: str | None = None
    test_size: int = Field(2000, ge=0)
    unlabeled_dir: str | None = None
    toy_count: int = Field(2000, gt=0)
    toy_test_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    train_fraction: float = Field(1.0, gt=0.0, le=1.0)
    batch_size: int = Field(1, gt=0)
    mirror: bool = True


class NetworkSettings(Section):
    preset: Literal["full", "toy", "gradcheck"] = "full"
    base_width: int | None = None
    image_size: int | None = None
    n_res: int | None = None
    embed_dim: int | None = None
    dropout: float | None = None


class StyleSettings(Section):
    block_dim: int = Field(8, gt=0)
    mean_on: float = 1.0
    mean_off: float = -1.0
    stddev: float = Field(0.5, gt=0.0)


class LossSettings(Section):
    style_recon: float = Field(10.0, ge=0.0)
    cycle: float = Field(10.0, ge=0.0)
    kl: float = Field(0.1, ge=0.0)
    style_recon_target: Literal["sampled", "encoded"] = "sampled"


class OptimizerSettings(Section):
    lr: float = Field(1e-4, gt=0.0)
    beta1: float = 0.5
    beta2: float = 0.999
    half_every: int = Field(200_000, gt=0)
    base_steps: int = Field(400_000, ge=0)
    checkpoint_every: int = Field(10_000, ge=0)


class RetrievalStageSettings(Section):
    margin: float = Field(0.2, ge=0.0)
    batch_size: int = Field(32, gt=0)
    lr: float = Field(0.01, gt=0.0)
    half_every: int = Field(10_000, gt=0)
    mix: str = "all"
    steps: int = Field(50_000, ge=0)


class GuidanceSettings(Section):
    r: int = Field(3, ge=0)
    mode: Literal["learned", "random", "none"] = "learned"
    exclude_self: bool = True
    steps: int = Field(100_000, ge=0)


class EvaluationSettings(Section):
    k: int = Field(10, gt=0)
    lpips_inputs: int = Field(100, gt=0)
    samples_per_domain: int = Field(10, ge=2)
    classifier_steps: int = Field(1500, ge=0)
    classifier_batch_size: int = Field(32, gt=0)
    seeds: list[int] = [0, 1, 2]
    scarcity_fractions: list[float] = [0.25, 0.5, 0.75, 1.0]
    retrieved_counts: list[int] = [1, 3, 10]


class ExperimentConfig(Section):
    seed: int = 0
    out_dir: str | None = None
    deterministic: bool = False
    data: DataSettings = DataSettings()
    network: NetworkSettings = NetworkSettings()
    style: StyleSettings = StyleSettings()
    loss: LossSettings = LossSettings()
    optim: OptimizerSettings = OptimizerSettings()
    retrieval: RetrievalStageSettings = RetrievalStageSettings()
    guidance: GuidanceSettings = GuidanceSettings()
    evaluation: EvaluationSettings = EvaluationSettings()

    def network_config(self) -> NetworkConfig:
        overrides = {k: v for k, v in self.network.model_dump(exclude={"preset"}).items() if v is not None}
        return preset(self.network.preset, block_dim=self.style.block_dim, **overrides)

    def style_space(self) -> GMMStyleSpace:
        return GMMStyleSpace(
            block_dim=self.style.block_dim,
            mean_on=self.style.mean_on,
            mean_off=self.style.mean_off,
            stddev=self.style.stddev,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.loss.style_recon, self.loss.cycle, self.loss.kl)

    def style_recon_target(self) -> StyleReconTarget:
        return StyleReconTarget(self.loss.style_recon_target)

    def optim_settings(self) -> OptimSettings:
        return OptimSettings(self.optim.lr, self.optim.beta1, self.optim.beta2, self.optim.half_every)

    def retrieval_settings(self) -> RetrievalSettings:
        r = self.retrieval
        if r.mix not in STRATEGY_MIXES:
            raise ConfigError("retrieval.mix", f"unknown mix {r.mix!r}; choose from {sorted(STRATEGY_MIXES)}")
        return RetrievalSettings(r.margin, r.batch_size, r.lr, r.half_every, r.mix)

    def guidance_config(self) -> GuidanceConfig:
        g = self.guidance
        return GuidanceConfig(g.r, RetrievalMode(g.mode), g.exclude_self)


def flatten(tree: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


def unflatten(flat: Mapping[str, Any]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for key, value in flat.items():
        node = tree
        *parents, leaf = key.split(".")
        for i, part in enumerate(parents):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(parents[: i + 1]), "is a value, not a section")
            node = child
        if isinstance(value, Mapping):
            value = unflatten(flatten(value))
        node[leaf] = value
    return tree


def parse_override(text: str) -> tuple[str, Any]:
    """`key=value`; the value is read as JSON, falling back to a plain string."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(text, "override must look like key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _validation_error(err: ValidationError) -> ConfigError:
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"]) or "<root>"
    if first["type"] == "extra_forbidden":
        return ConfigError(path, "unknown key")
    return ConfigError(path, first["msg"])


def config_from_flat(flat: Mapping[str, Any], overrides: Iterable[str] = ()) -> ExperimentConfig:
    merged = dict(flatten(flat))
    for text in overrides:
        key, value = parse_override(text)
        merged[key] = value
    try:
        return ExperimentConfig.model_validate(unflatten(merged))
    except ValidationError as err:
        raise _validation_error(err) from err


def parse_config(path: Path | str | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a flat dotted-key JSON file (or nothing) and apply `key=value` overrides."""
    flat: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(str(path), "config file not found")
        text = path.read_text(encoding="utf-8")
        if text.strip():
            try:
                flat = json.loads(text)
            except json.JSONDecodeError as err:
                raise ConfigError(str(path), f"invalid JSON: {err}") from err
            if not isinstance(flat, dict):
                raise ConfigError(str(path), "top level must be a JSON object")
    config = config_from_flat(flat, overrides)
    logger.debug(f"Resolved experiment config from {path or 'defaults'}")
    return config


def serialize_config(config: ExperimentConfig) -> dict[str, Any]:
    return flatten(config.model_dump(mode="json"))


def write_config(config: ExperimentConfig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(serialize_config(config), indent=2, sort_keys=True), encoding="utf-8")
    return path
