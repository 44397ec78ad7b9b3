# --- Start of File: celery_app.py ---
from celery import Celery
from config import Config

config = Config()

# Eager by default (CELERY_TASK_ALWAYS_EAGER), so the CLI runs without a
# broker; point CELERY_BROKER_URL at Redis and start a worker to distribute chains.
celery_app = Celery(
    'potts_phase_tasks',
    broker=config.CELERY_BROKER_URL,
    backend=config.CELERY_RESULT_BACKEND,
    include=['tasks.chain_tasks', 'tasks.experiment_tasks']
)

# Keys prefixed CELERY_ on Config become Celery settings.
celery_app.config_from_object(config, namespace='CELERY')
celery_app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
)

if __name__ == '__main__':
    # `celery -A celery_app.celery_app worker` is the usual entry point.
    celery_app.start()
# --- END OF FILE: celery_app.py ---
