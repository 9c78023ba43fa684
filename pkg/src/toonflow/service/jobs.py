"""Job store and the single-worker generation queue.

Jobs move queued -> running -> {done | failed | cancelled}, never backwards.
One worker thread owns the numeric engine and consumes the FIFO queue;
cancellation is polled between Euler steps.
"""

from __future__ import annotations

import itertools
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from toonflow.errors import ContractError

TERMINAL = ("done", "failed", "cancelled")
_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2, "cancelled": 2}


@dataclass
class Job:
    id: str
    state: str = "queued"
    progress_step: int = 0
    total_steps: int = 0
    error: str | None = None
    frames: np.ndarray | None = None          # (K, H, W, 3) when done
    png_frames: list[bytes] = field(default_factory=list)
    cancel_requested: bool = False

    def public(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "progress": {"step": self.progress_step, "of": self.total_steps},
            "error": self.error,
            "frames": len(self.png_frames),
        }


class JobStore:
    """Thread-safe registry enforcing monotone state transitions."""

    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._counter = itertools.count(1)

    def create(self, total_steps: int) -> Job:
        with self._lock:
            job = Job(id=f"job-{next(self._counter):06d}", total_steps=total_steps)
            self._jobs[job.id] = job
            return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def transition(self, job_id: str, state: str) -> Job:
        with self._lock:
            job = self._jobs[job_id]
            if _ORDER[state] < _ORDER[job.state]:
                raise ContractError(f"job {job_id}: illegal transition {job.state} -> {state}")
            if job.state in TERMINAL and state != job.state:
                return job  # terminal states are sticky (idempotent cancel on done)
            job.state = state
            return job

    def request_cancel(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs[job_id]
            if job.state == "queued":
                job.state = "cancelled"
            elif job.state == "running":
                job.cancel_requested = True
            return job


class GenerationWorker:
    """FIFO consumer running one generation at a time."""

    def __init__(self, store: JobStore, runner):
        self.store = store
        self.runner = runner          # (job, payload) -> (frames, png list)
        self.queue: "queue.Queue[tuple[str, dict] | None]" = queue.Queue()
        self.thread = threading.Thread(target=self._loop, daemon=True)
        self.thread.start()

    def submit(self, job: Job, payload: dict) -> None:
        self.queue.put((job.id, payload))

    def stop(self) -> None:
        self.queue.put(None)
        self.thread.join(timeout=5)

    def drain(self) -> None:
        """Block until every queued job has been processed (tests)."""
        self.queue.join()

    def _loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is None:
                self.queue.task_done()
                return
            job_id, payload = item
            try:
                job = self.store.get(job_id)
                if job is None or job.state == "cancelled":
                    continue
                self.store.transition(job_id, "running")
                frames, pngs = self.runner(job, payload)
                if frames is None:
                    self.store.transition(job_id, "cancelled")
                else:
                    job.frames = frames
                    job.png_frames = pngs
                    self.store.transition(job_id, "done")
            except Exception as e:  # failures land on the job, not the worker
                job = self.store.get(job_id)
                if job is not None:
                    job.error = str(e)
                    self.store.transition(job_id, "failed")
            finally:
                self.queue.task_done()
