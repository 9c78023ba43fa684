from toonflow.service.app import create_app
from toonflow.service.jobs import GenerationWorker, Job, JobStore
