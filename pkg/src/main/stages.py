"""
Pipeline stages.

Each stage reads its predecessors' artifacts from the run directory,
verifies their fingerprints and writes its own. The CLI and the Celery
tasks both go through `run_stage`.
"""

import copy
import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any

import torch
from torch import nn

from adaptor.storage.adaptor import ArtifactStore, MetricsLog
from apps.core.exceptions import FingerprintMismatchError
from apps.core.models import DatasetSplit, ImageSample, parse_target
from apps.core.random import RunRandom
from apps.datasets.celeba import add_unlabeled_images, load_attribute_dataset, subsample_train
from apps.datasets.loaders import infinite_batches
from apps.datasets.preprocess import preprocess_image
from apps.datasets.toy import generate_toy_dataset, load_toy_dataset, save_toy_dataset
from apps.evaluation.classifier import ClassifierFeatures, train_attribute_classifier
from apps.evaluation.protocol import (
    ContentFn,
    RetrievalReport,
    TranslationReport,
    eval_retrieval,
    eval_translation,
    write_json,
)
from apps.guided import GuidanceConfig, GuidedTrainer, RetrievalGuide
from apps.networks import (
    RetrievalEmbedder,
    TranslationModel,
    load_checkpoint,
    save_checkpoint,
)
from apps.retrieval import (
    RetrievalIndex,
    RetrievalTrainer,
    TripletBuilder,
    build_index,
    load_index,
    query_embeddings,
    save_index,
)
from apps.style_space import interpolate_styles, interpolation_path
from apps.translation import TranslationTrainer
from config import config

from .grids import emit_grid
from .settings import ExperimentConfig, serialize_config

logger = logging.getLogger(__name__)


def translator_modules(model: TranslationModel) -> dict[str, nn.Module]:
    modules: dict[str, nn.Module] = {
        "content_encoder": model.content_encoder,
        "style_encoder": model.style_encoder,
        "generator": model.generator,
        "discriminator": model.discriminator,
    }
    if model.fusion is not None:
        modules["fusion"] = model.fusion
    return modules


@dataclass
class TrainedTranslator:
    model: TranslationModel
    fingerprint: str = ""
    step: int = 0


@dataclass
class Guidance:
    """Everything stage 3 needs besides the translator."""

    config: GuidanceConfig
    index: RetrievalIndex | None = None
    embedder: RetrievalEmbedder | None = None
    embedder_fingerprint: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)


class Pipeline:
    """Stages of one run, bound to an experiment config and a run directory."""

    def __init__(self, cfg: ExperimentConfig, store: ArtifactStore, device: str | None = None) -> None:
        self.cfg = cfg
        self.store = store
        self.device = torch.device(device or config.DEVICE)
        self.random = RunRandom(cfg.seed)
        if cfg.deterministic:
            torch.use_deterministic_algorithms(True)

    # Data

    @cached_property
    def split(self) -> DatasetSplit:
        return self.load_split()

    def load_split(self) -> DatasetSplit:
        data = self.cfg.data
        if data.source == "toy":
            self.store.require(self.store.toy_dir / "manifest.json", "toy")
            split = load_toy_dataset(self.store.toy_dir)
        else:
            root = Path(data.root or config.DATA_ROOT)
            attr_file = Path(data.attr_file) if data.attr_file else root / "list_attr_celeba.txt"
            image_size = self.cfg.network_config().image_size
            split = load_attribute_dataset(root, attr_file, image_size, data.test_size, self.cfg.seed)
            if data.unlabeled_dir:
                split = add_unlabeled_images(split, Path(data.unlabeled_dir), image_size)
        return subsample_train(split, data.train_fraction, self.cfg.seed)

    def make_toy(self) -> dict[str, Any]:
        data = self.cfg.data
        size = self.cfg.network_config().image_size
        split = generate_toy_dataset(data.toy_count, size, self.cfg.seed, test_fraction=data.toy_test_fraction)
        save_toy_dataset(split, self.store.toy_dir)
        return {"train": len(split.train), "test": len(split.test), "image_size": size}

    # Translator

    def new_translator(self, random: RunRandom | None = None) -> TranslationModel:
        with (random or self.random).seeded("init.translator"):
            return TranslationModel(self.cfg.network_config()).to(self.device)

    def fit_translator(
        self,
        samples: tuple[ImageSample, ...],
        steps: int,
        random: RunRandom,
        metrics: MetricsLog | None = None,
        on_checkpoint: Callable[[TranslationTrainer], None] | None = None,
    ) -> TranslationTrainer:
        model = self.new_translator(random)
        trainer = TranslationTrainer(
            model,
            self.cfg.style_space(),
            self.cfg.loss_weights(),
            self.cfg.optim_settings(),
            self.cfg.style_recon_target(),
        )
        batches = infinite_batches(samples, self.cfg.data.batch_size, random.torch("base.batches"))
        trainer.fit(
            batches,
            steps,
            random,
            metrics=metrics,
            checkpoint_every=self.cfg.optim.checkpoint_every,
            on_checkpoint=on_checkpoint,
            mirror=self.cfg.data.mirror,
        )
        return trainer

    def save_translator(self, stage: str, trainer: TranslationTrainer, extra: dict[str, Any] | None = None) -> str:
        return save_checkpoint(
            self.store.checkpoint(stage),
            trainer.model.config,
            trainer.step,
            extra,
            **translator_modules(trainer.model),
        )

    def load_translator(self, stage: str = "base") -> TrainedTranslator:
        checkpoint = load_checkpoint(self.store.require(self.store.checkpoint(stage), stage), self.device)
        model = TranslationModel(checkpoint.network_config)
        if "fusion" in checkpoint.state:
            model.attach_fusion(int(checkpoint.extra["r"]))
        checkpoint.load_into(**translator_modules(model))
        return TrainedTranslator(model.to(self.device), checkpoint.fingerprint, checkpoint.step)

    def train_base(self) -> dict[str, Any]:
        trainer = self.fit_translator(
            self.split.train,
            self.cfg.optim.base_steps,
            self.random,
            metrics=self.store.metrics("base"),
            on_checkpoint=lambda t: self.save_translator("base", t),
        )
        fingerprint = self.save_translator("base", trainer)
        return {"step": trainer.step, "fingerprint": fingerprint}

    # Retrieval

    def fit_embedder(
        self,
        model: TranslationModel,
        samples: tuple[ImageSample, ...],
        steps: int,
        random: RunRandom,
        mix: str | None = None,
        metrics: MetricsLog | None = None,
        on_checkpoint: Callable[[RetrievalTrainer], None] | None = None,
    ) -> RetrievalTrainer:
        settings = self.cfg.retrieval_settings()
        if mix is not None:
            settings = replace(settings, mix=mix)
        with random.seeded("init.embedder"):
            embedder = RetrievalEmbedder(model.config).to(self.device)
        builder = TripletBuilder(model, self.cfg.style_space(), samples, settings.mix)
        trainer = RetrievalTrainer(embedder, builder, settings)
        batches = infinite_batches(samples, settings.batch_size, random.torch("retrieval.batches"))
        trainer.fit(
            batches,
            steps,
            random,
            metrics=metrics,
            checkpoint_every=self.cfg.optim.checkpoint_every,
            on_checkpoint=on_checkpoint,
        )
        return trainer

    def _save_embedder(self, trainer: RetrievalTrainer, base_fingerprint: str) -> str:
        return save_checkpoint(
            self.store.checkpoint("retrieval"),
            trainer.builder.model.config,
            trainer.step,
            {"base_fingerprint": base_fingerprint, "mix": trainer.settings.mix},
            embedder=trainer.embedder,
        )

    def load_embedder(self, base_fingerprint: str) -> tuple[RetrievalEmbedder, str]:
        path = self.store.require(self.store.checkpoint("retrieval"), "retrieval")
        checkpoint = load_checkpoint(path, self.device)
        if checkpoint.extra.get("base_fingerprint") != base_fingerprint:
            raise FingerprintMismatchError(
                f"embedder was trained on translator {str(checkpoint.extra.get('base_fingerprint'))[:12]}, "
                f"not on the current base checkpoint {base_fingerprint[:12]}",
                required_stage="train-retrieval",
            )
        embedder = RetrievalEmbedder(checkpoint.network_config)
        checkpoint.load_into(embedder=embedder)
        return embedder.to(self.device).eval(), checkpoint.fingerprint

    def train_retrieval(self) -> dict[str, Any]:
        base = self.load_translator("base")
        trainer = self.fit_embedder(
            base.model,
            self.split.train,
            self.cfg.retrieval.steps,
            self.random,
            metrics=self.store.metrics("retrieval"),
            on_checkpoint=lambda t: self._save_embedder(t, base.fingerprint),
        )
        fingerprint = self._save_embedder(trainer, base.fingerprint)
        return {"step": trainer.step, "fingerprint": fingerprint, "mix": trainer.settings.mix}

    def build_index(self) -> dict[str, Any]:
        base = self.load_translator("base")
        embedder, fingerprint = self.load_embedder(base.fingerprint)
        index = build_index(base.model, embedder, self.split.retrieval_set)
        if index.fingerprint != fingerprint:
            raise FingerprintMismatchError("index fingerprint differs from the embedder checkpoint")
        save_index(index, self.store.index_path)
        return {"entries": len(index), "fingerprint": index.fingerprint}

    def load_guidance(self, base_fingerprint: str, guidance: GuidanceConfig | None = None) -> Guidance:
        guidance = guidance or self.cfg.guidance_config()
        if not guidance.active:
            return Guidance(guidance)
        index = load_index(self.store.require(self.store.index_path, "index"))
        embedder, fingerprint = self.load_embedder(base_fingerprint)
        return Guidance(guidance, index, embedder, fingerprint)

    def guide_for(self, model: TranslationModel, guidance: Guidance, split: DatasetSplit) -> RetrievalGuide:
        return RetrievalGuide(
            model,
            self.cfg.style_space(),
            guidance.config,
            guidance.index,
            guidance.embedder,
            split.retrieval_set,
            guidance.embedder_fingerprint,
        )

    # Guided fine-tuning

    def fit_guided(
        self,
        base: TranslationModel,
        guidance: Guidance,
        split: DatasetSplit,
        steps: int,
        random: RunRandom,
        metrics: MetricsLog | None = None,
        on_checkpoint: Callable[[TranslationTrainer], None] | None = None,
    ) -> GuidedTrainer:
        model = copy.deepcopy(base)
        with random.seeded("init.fusion"):
            guide = self.guide_for(model, guidance, split)
            trainer = GuidedTrainer(
                model,
                self.cfg.style_space(),
                guide,
                split.train,
                self.cfg.loss_weights(),
                self.cfg.optim_settings(),
                self.cfg.style_recon_target(),
            )
        batches = infinite_batches(split.train, self.cfg.data.batch_size, random.torch("guided.batches"))
        trainer.fit(
            batches,
            steps,
            random,
            metrics=metrics,
            checkpoint_every=self.cfg.optim.checkpoint_every,
            on_checkpoint=on_checkpoint,
            mirror=self.cfg.data.mirror,
        )
        return trainer

    def train_guided(self) -> dict[str, Any]:
        base = self.load_translator("base")
        guidance = self.load_guidance(base.fingerprint)
        extra = {
            "r": guidance.config.r if guidance.config.active else 0,
            "mode": str(guidance.config.mode),
            "base_fingerprint": base.fingerprint,
            "index_fingerprint": guidance.index.fingerprint if guidance.index is not None else None,
        }
        trainer = self.fit_guided(
            base.model,
            guidance,
            self.split,
            self.cfg.guidance.steps,
            self.random,
            metrics=self.store.metrics("guided"),
            on_checkpoint=lambda t: self.save_translator("guided", t, extra),
        )
        fingerprint = self.save_translator("guided", trainer, extra)
        return {"step": trainer.step, "fingerprint": fingerprint, **extra}

    def load_guided(self) -> tuple[TrainedTranslator, RetrievalGuide]:
        guided = self.load_translator("guided")
        checkpoint = load_checkpoint(self.store.checkpoint("guided"), self.device)
        base_fingerprint = checkpoint.extra.get("base_fingerprint", "")
        r = int(checkpoint.extra.get("r", 0))
        mode = checkpoint.extra.get("mode", "none")
        guidance = self.load_guidance(
            base_fingerprint, GuidanceConfig(r, mode, self.cfg.guidance.exclude_self) if r else GuidanceConfig(0, "none")
        )
        if guidance.index is not None and guidance.index.fingerprint != checkpoint.extra.get("index_fingerprint"):
            raise FingerprintMismatchError(
                "the stored index differs from the one used for fine-tuning", required_stage="build-index"
            )
        guided.model.requires_grad_(False)
        return guided, self.guide_for(guided.model, guidance, self.split)

    # Evaluation

    def classifier(self) -> ClassifierFeatures:
        path = self.store.checkpoint("classifier")
        if path.exists():
            return ClassifierFeatures.load(path, self.device)
        ev = self.cfg.evaluation
        extractor = train_attribute_classifier(
            self.split.train,
            self.random,
            steps=ev.classifier_steps,
            batch_size=ev.classifier_batch_size,
            device=self.device,
        )
        extractor.save(path)
        return extractor

    @staticmethod
    def content_fn(guide: RetrievalGuide, random: RunRandom) -> ContentFn:
        rng = random.numpy("evaluation.guidance")
        return lambda x, targets: guide.retrieve_and_fuse(x, targets, None, rng)

    def evaluate_translator(
        self,
        model: TranslationModel,
        split: DatasetSplit,
        extractor: ClassifierFeatures,
        random: RunRandom,
        checkpoint: str = "",
        guide: RetrievalGuide | None = None,
    ) -> TranslationReport:
        ev = self.cfg.evaluation
        return eval_translation(
            model,
            self.cfg.style_space(),
            split.test,
            extractor,
            random,
            checkpoint=checkpoint,
            lpips_inputs=ev.lpips_inputs,
            samples_per_domain=ev.samples_per_domain,
            content_fn=self.content_fn(guide, random) if guide is not None and guide.config.active else None,
        )

    def evaluate(self) -> dict[str, Any]:
        extractor = self.classifier()
        base = self.load_translator("base")
        summary: dict[str, Any] = {}

        report = self.evaluate_translator(base.model, self.split, extractor, self.random, base.fingerprint)
        write_json(report.to_dict(), self.store.report("translation_base"))
        summary["base"] = report.to_dict()

        if self.store.checkpoint("guided").exists():
            guided, guide = self.load_guided()
            report = self.evaluate_translator(
                guided.model, self.split, extractor, self.random, guided.fingerprint, guide
            )
            write_json(report.to_dict(), self.store.report("translation_guided"))
            summary["guided"] = report.to_dict()

        if self.store.index_path.exists():
            embedder, _ = self.load_embedder(base.fingerprint)
            index = load_index(self.store.index_path)
            retrieval: RetrievalReport = eval_retrieval(
                base.model, embedder, self.cfg.style_space(), index, self.split.test, self.random, self.cfg.evaluation.k
            )
            write_json(retrieval.to_dict(), self.store.report("retrieval"))
            summary["retrieval"] = retrieval.to_dict()
        return summary

    # Single-image tools

    def _translator_for_inference(self) -> tuple[TranslationModel, RetrievalGuide | None]:
        if self.store.checkpoint("guided").exists():
            guided, guide = self.load_guided()
            return guided.model, guide
        return self.load_translator("base").model.requires_grad_(False), None

    def _load_input(self, input_path: Path, image_size: int) -> torch.Tensor:
        return preprocess_image(Path(input_path).read_bytes(), image_size).unsqueeze(0).to(self.device)

    @torch.no_grad()
    def translate(
        self,
        input_path: Path,
        target: str,
        samples: int = 1,
        interpolate: str | None = None,
        steps: int = 5,
    ) -> dict[str, Any]:
        model, guide = self._translator_for_inference()
        model.eval()
        style_space = self.cfg.style_space()
        x = self._load_input(input_path, model.config.image_size)
        generator = self.random.torch("translate.styles", self.device)
        rng = self.random.numpy("translate.retrieval")
        stem = Path(input_path).stem

        def content_for(t: torch.Tensor) -> torch.Tensor:
            if guide is not None and guide.config.active:
                return guide.retrieve_and_fuse(x, t, None, rng)
            return model.encode_content(x)

        if interpolate is not None:
            start_text, _, end_text = interpolate.partition(":")
            start, end = parse_target(start_text), parse_target(end_text)
            style_a = style_space.sample_style(start, generator).unsqueeze(0).to(self.device)
            style_b = style_space.sample_style(end, generator).unsqueeze(0).to(self.device)
            content = content_for(start.to_tensor().unsqueeze(0).to(self.device))
            frames = [
                model.decode(content, interpolate_styles(style_a, style_b, t), x).composite[0]
                for t in interpolation_path(steps)
            ]
            labels = [f"t={t:.2f}" for t in interpolation_path(steps)]
            path = emit_grid([[x[0], *frames]], self.store.sample(f"{stem}_interpolation"), ["input", *labels])
            return {"strip": str(path), "frames": len(frames)}

        attrs = parse_target(target)
        t = attrs.to_tensor().unsqueeze(0).to(self.device)
        content = content_for(t)
        outputs = []
        for i in range(samples):
            style = style_space.sample_style(attrs, generator).unsqueeze(0).to(self.device)
            result = model.decode(content, style, x)
            image = emit_grid([[result.composite[0]]], self.store.sample(f"{stem}_{attrs.describe()}_{i}"), padding=0)
            mask = emit_grid([[result.mask[0]]], self.store.sample(f"{stem}_{attrs.describe()}_{i}_mask"), padding=0)
            outputs.append({"image": str(image), "mask": str(mask)})
        return {"target": attrs.describe(), "outputs": outputs}

    @torch.no_grad()
    def retrieve(self, input_path: Path, target: str, k: int = 10) -> dict[str, Any]:
        base = self.load_translator("base")
        embedder, _ = self.load_embedder(base.fingerprint)
        index = load_index(self.store.require(self.store.index_path, "index"))
        x = self._load_input(input_path, base.model.config.image_size)
        attrs = parse_target(target)
        embedding = query_embeddings(embedder, self.cfg.style_space(), base.model.encode_content(x), [attrs])[0]
        hits = index.nearest(embedding, k)
        results = [{"id": entry.id, "distance": distance} for entry, distance in hits]
        write_json({"target": attrs.describe(), "results": results}, self.store.report(f"retrieve_{Path(input_path).stem}"))
        return {"target": attrs.describe(), "results": results}


STAGES = ("make-toy", "train-base", "train-retrieval", "build-index", "train-guided", "evaluate")


def run_stage(stage: str, cfg: ExperimentConfig, store: ArtifactStore, **kwargs: Any) -> dict[str, Any]:
    """Run one pipeline stage after recording the resolved config and code version."""
    store.write_provenance(serialize_config(cfg))
    pipeline = Pipeline(cfg, store)
    handlers: dict[str, Callable[..., dict[str, Any]]] = {
        "make-toy": pipeline.make_toy,
        "train-base": pipeline.train_base,
        "train-retrieval": pipeline.train_retrieval,
        "build-index": pipeline.build_index,
        "train-guided": pipeline.train_guided,
        "evaluate": pipeline.evaluate,
        "translate": pipeline.translate,
        "retrieve": pipeline.retrieve,
    }
    if stage == "ablate":
        from .experiments import run_ablation

        return run_ablation(pipeline, **kwargs)
    if stage not in handlers:
        raise ValueError(f"unknown stage {stage!r}")
    logger.info(f"Running {stage} in {store.root}")
    result = handlers[stage](**kwargs)
    logger.info(f"Finished {stage}: {result}")
    return result
