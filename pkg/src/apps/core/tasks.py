"""
Celery tasks wrapping the pipeline stages.
"""

import logging
from typing import Any

from celery import shared_task

from adaptor.storage.adaptor import get_store
from main.settings import parse_config
from main.stages import run_stage

logger = logging.getLogger(__name__)


@shared_task
def run_stage_task(
    stage: str,
    config_path: str | None = None,
    out_dir: str | None = None,
    overrides: list[str] | None = None,
    **kwargs: Any,
) -> dict[str, Any]:
    """Run one stage exactly as the CLI would; the result must be JSON serialisable."""
    try:
        cfg = parse_config(config_path, overrides or [])
        result = run_stage(stage, cfg, get_store(out_dir or cfg.out_dir), **kwargs)
        logger.info(f"Task {stage} finished in {out_dir or cfg.out_dir}")
        return result
    except Exception as e:
        logger.exception(f"Task {stage} failed: {str(e)}")
        raise
