"""
Celery application for queueing long pipeline stages on a worker.
"""

from celery import Celery

from config import config

app = Celery(config.PROJECT)

app.conf.update(
    broker_url=config.CELERY_BROKER_URL,
    result_backend=config.CELERY_RESULT_BACKEND,
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
    task_default_queue=config.TASK_QUEUE,
    # Stages run for hours; a worker holds one at a time.
    worker_prefetch_multiplier=1,
    task_acks_late=True,
    task_always_eager=config.TESTING,
    task_eager_propagates=True,
)

app.autodiscover_tasks(["apps.core"])
