"""
Ablation tables.

Every table trains its models in memory from the run's dataset, once per
seed, and reports one row per variant plus a seed-averaged row.
"""

import logging
from collections import defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from apps.core.models import DatasetSplit
from apps.core.random import RunRandom
from apps.datasets.celeba import subsample_train
from apps.evaluation.classifier import ClassifierFeatures
from apps.evaluation.protocol import TranslationReport, eval_retrieval, write_csv, write_json
from apps.guided import GuidanceConfig, RetrievalMode
from apps.networks import RetrievalEmbedder, TranslationModel
from apps.retrieval import RetrievalIndex, build_index

from .stages import Guidance, Pipeline

logger = logging.getLogger(__name__)

Row = dict[str, Any]


@dataclass
class SeedModels:
    base: TranslationModel
    embedder: RetrievalEmbedder
    index: RetrievalIndex


def _train_seed(pipeline: Pipeline, split: DatasetSplit, seed: int, mix: str | None = None) -> SeedModels:
    random = RunRandom(seed)
    cfg = pipeline.cfg
    base = pipeline.fit_translator(split.train, cfg.optim.base_steps, random).model
    embedder = pipeline.fit_embedder(base, split.train, cfg.retrieval.steps, random, mix=mix).embedder
    return SeedModels(base, embedder, build_index(base, embedder, split.retrieval_set))


def _translation_row(report: TranslationReport) -> Row:
    return {
        "fid": report.fid,
        "is": report.inception_score,
        "lpips": report.lpips,
        "acc": report.accuracy,
        "gt_l1": report.ground_truth_l1,
    }


def _guided_report(
    pipeline: Pipeline,
    models: SeedModels,
    split: DatasetSplit,
    guidance: GuidanceConfig,
    extractor: ClassifierFeatures,
    seed: int,
) -> TranslationReport:
    random = RunRandom(seed)
    bundle = Guidance(guidance, models.index, models.embedder, models.index.fingerprint)
    trainer = pipeline.fit_guided(models.base, bundle, split, pipeline.cfg.guidance.steps, random)
    return pipeline.evaluate_translator(trainer.model, split, extractor, random, guide=trainer.guide)


def with_means(rows: Sequence[Row], key: str) -> list[Row]:
    """Append one row per `key` value averaging the numeric columns over seeds."""
    groups: dict[Any, list[Row]] = defaultdict(list)
    for row in rows:
        groups[row[key]].append(row)
    means = []
    for value, group in groups.items():
        mean: Row = {"seed": "mean", key: value}
        for column in group[0]:
            if column in ("seed", key):
                continue
            numbers = [r[column] for r in group if isinstance(r[column], (int, float))]
            mean[column] = float(np.mean(numbers)) if numbers else None
        means.append(mean)
    return [*rows, *means]


def strategy_table(pipeline: Pipeline) -> list[Row]:
    """Retrieval P@k per negative-strategy mix, with a random-retrieval row."""
    split, cfg = pipeline.split, pipeline.cfg
    rows = []
    for seed in cfg.evaluation.seeds:
        random = RunRandom(seed)
        base = pipeline.fit_translator(split.train, cfg.optim.base_steps, random).model
        for mix in ("easy", "medium", "hard", "all"):
            embedder = pipeline.fit_embedder(base, split.train, cfg.retrieval.steps, random, mix=mix).embedder
            index = build_index(base, embedder, split.retrieval_set)
            report = eval_retrieval(
                base, embedder, cfg.style_space(), index, split.test, RunRandom(seed), cfg.evaluation.k, name=mix
            )
            for row in report.rows if mix == "all" else report.rows[:1]:
                rows.append(
                    {
                        "seed": seed,
                        "negatives": row.name,
                        "attributes": row.attr_sim,
                        "content": row.content_sim,
                        "average": row.avg,
                    }
                )
    return with_means(rows, "negatives")


def guidance_table(pipeline: Pipeline) -> list[Row]:
    """Stage-1 model against fine-tuning with no, random and learned retrieval."""
    split, cfg = pipeline.split, pipeline.cfg
    extractor = pipeline.classifier()
    rows = []
    for seed in cfg.evaluation.seeds:
        models = _train_seed(pipeline, split, seed)
        report = pipeline.evaluate_translator(models.base, split, extractor, RunRandom(seed))
        rows.append({"seed": seed, "model": "stage1", **_translation_row(report)})
        for mode in (RetrievalMode.NONE, RetrievalMode.RANDOM, RetrievalMode.LEARNED):
            guidance = GuidanceConfig(cfg.guidance.r, mode, cfg.guidance.exclude_self)
            report = _guided_report(pipeline, models, split, guidance, extractor, seed)
            rows.append({"seed": seed, "model": f"guided_{mode}", **_translation_row(report)})
    return with_means(rows, "model")


def scarcity_table(pipeline: Pipeline) -> list[Row]:
    """Guidance gain at shrinking training-set sizes; the retrieval set stays full."""
    cfg = pipeline.cfg
    extractor = pipeline.classifier()
    guidance = cfg.guidance_config()
    rows = []
    for seed in cfg.evaluation.seeds:
        for fraction in cfg.evaluation.scarcity_fractions:
            split = subsample_train(pipeline.split, fraction, seed)
            models = _train_seed(pipeline, split, seed)
            base = pipeline.evaluate_translator(models.base, split, extractor, RunRandom(seed))
            guided = _guided_report(pipeline, models, split, guidance, extractor, seed)
            rows.append(
                {
                    "seed": seed,
                    "fraction": fraction,
                    "fid_stage1": base.fid,
                    "fid_guided": guided.fid,
                    "delta_fid": base.fid - guided.fid,
                }
            )
    return with_means(rows, "fraction")


def retrieved_table(pipeline: Pipeline) -> list[Row]:
    """Guided translation quality against the number of retrieved images."""
    split, cfg = pipeline.split, pipeline.cfg
    extractor = pipeline.classifier()
    rows = []
    for seed in cfg.evaluation.seeds:
        models = _train_seed(pipeline, split, seed)
        for r in cfg.evaluation.retrieved_counts:
            guidance = GuidanceConfig(r, RetrievalMode.LEARNED, cfg.guidance.exclude_self)
            report = _guided_report(pipeline, models, split, guidance, extractor, seed)
            rows.append({"seed": seed, "r": r, **_translation_row(report)})
    return with_means(rows, "r")


TABLES: dict[str, Callable[[Pipeline], list[Row]]] = {
    "strategies": strategy_table,
    "guidance": guidance_table,
    "scarcity": scarcity_table,
    "retrieved": retrieved_table,
}


def run_ablation(pipeline: Pipeline, table: str) -> dict[str, Any]:
    try:
        build = TABLES[table]
    except KeyError:
        raise ValueError(f"unknown ablation table {table!r}; choose from {sorted(TABLES)}") from None
    logger.info(f"Running {table} ablation over seeds {pipeline.cfg.evaluation.seeds}")
    rows = build(pipeline)
    csv_path = write_csv(rows, pipeline.store.report(f"ablation_{table}", "csv"))
    write_json({"table": table, "rows": rows}, pipeline.store.report(f"ablation_{table}"))
    return {"table": table, "rows": len(rows), "csv": str(csv_path)}
