import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings

logger = logging.getLogger()
# Silence noisy logs from PIL's plugin discovery
logging.getLogger("PIL").setLevel(logging.WARNING)

ENV = os.environ.get("ENVIRONMENT", "local")
env_file: str = os.environ.get("ENV_FILE", f"./env/{ENV}.env")
logger.info(f"Loading environment variables from : {env_file}")
load_dotenv(env_file)


class Config(BaseSettings):
    """
    Process settings.

    These parameters can be configured
    with environment variables. Experiment hyper-parameters live in
    main.settings.ExperimentConfig instead.
    """

    # Current environment
    PROJECT: str = os.environ.get("PROJECT", "rgunit")
    ENVIRONMENT: str = os.environ.get("ENVIRONMENT", "dev")
    LOG_LEVEL: str = os.environ.get("LOG_LEVEL", "INFO")
    SENTRY_DSN: Optional[str] = os.environ.get("SENTRY_DSN")

    # Compute
    DEVICE: str = os.environ.get("DEVICE", "cpu")

    # Filesystem
    RUNS_DIR: str = os.environ.get("RUNS_DIR", "./runs")
    DATA_ROOT: str = os.environ.get("DATA_ROOT", "./data")

    # Task queue settings
    TASK_QUEUE: str = os.environ.get("TASK_QUEUE", "rgunit-stages")
    CELERY_BROKER_URL: str = os.environ.get(
        "CELERY_BROKER_URL", "redis://localhost:6379/0"
    )
    CELERY_RESULT_BACKEND: str = os.environ.get(
        "CELERY_RESULT_BACKEND", "redis://localhost:6379/0"
    )

    TESTING: bool = "pytest" in sys.argv[0]


config = Config()
