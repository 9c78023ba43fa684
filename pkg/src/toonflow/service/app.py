"""HTTP generation service.

Endpoints: GET /health, GET /checkpoints, POST /jobs, GET /jobs/{id},
POST /jobs/{id}/cancel, GET /jobs/{id}/frames/{k}. Bodies are JSON; images
travel as base-64 PNG; masks as base-64 PNG or run-length strings. Errors
carry {code, field, message} and arrive with 400/404 status codes.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from toonflow.backbone.patches import ReferenceSet
from toonflow.control import SketchKeyframe, full_mask
from toonflow.errors import ContractError, ToonflowError
from toonflow.flow import SamplingCancelled, generate
from toonflow.harness.train import load_model
from toonflow.imaging import b64_to_frame, frame_to_png_bytes, rle_to_mask
from toonflow.service.jobs import GenerationWorker, JobStore
from toonflow.toydata.captions import WORD_TO_ID, tokenize


class ApiError(Exception):
    def __init__(self, status: int, code: str, field: str, message: str):
        self.status = status
        self.detail = {"code": code, "field": field, "message": message}
        super().__init__(message)


class ReferenceIn(BaseModel):
    index: int
    image_b64: str


class SketchIn(BaseModel):
    index: int
    image_b64: str
    mask_b64: str | None = None
    mask_rle: str | None = None


class GenerationRequest(BaseModel):
    checkpoint: str
    references: list[ReferenceIn] = Field(default_factory=list)
    sketches: list[SketchIn] = Field(default_factory=list)
    alpha: float = 1.0
    prompt: str | None = None
    prompt_ids: list[int] | None = None
    steps: int = 20
    seed: int = 0


class CheckpointRegistry:
    """Lazy, read-only view of a directory of checkpoint containers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._cache: dict[str, object] = {}
        self._lock = threading.Lock()

    def ids(self) -> list[str]:
        if not (self.root / "base.tfck").exists():
            return []
        out = ["base"]
        out += sorted(p.stem for p in self.root.glob("adapter-*.tfck"))
        return out

    def load(self, checkpoint_id: str):
        with self._lock:
            if checkpoint_id in self._cache:
                return self._cache[checkpoint_id]
            base = self.root / "base.tfck"
            if checkpoint_id == "base":
                model = load_model(base)
            else:
                adapter = self.root / f"{checkpoint_id}.tfck"
                if not adapter.exists():
                    raise ApiError(404, "unknown_checkpoint", "checkpoint",
                                   f"no checkpoint named {checkpoint_id!r}")
                model = load_model(base, adapter)
            self._cache[checkpoint_id] = model
            return model

    def describe(self, checkpoint_id: str) -> dict:
        model = self.load(checkpoint_id)
        c = model.config
        return {"id": checkpoint_id, "K": c.K, "H": c.H, "W": c.W,
                "adapted": model.dit.adapters is not None or model.dit.lora is not None}


def _validate(req: GenerationRequest, model) -> tuple[ReferenceSet, list[SketchKeyframe], np.ndarray]:
    c = model.config
    if len(req.references) < 1:
        raise ApiError(400, "post_keyframing_minimum", "references",
                       "at least one colored reference frame is required")
    if len(req.sketches) < 1:
        raise ApiError(400, "post_keyframing_minimum", "sketches",
                       "at least one keyframe sketch is required")
    if req.steps < 1:
        raise ApiError(400, "invalid_value", "steps", "steps must be >= 1")
    if req.alpha < 0:
        raise ApiError(400, "invalid_value", "alpha", "alpha must be non-negative")

    ref_idx = [r.index for r in req.references]
    if len(set(ref_idx)) != len(ref_idx):
        raise ApiError(400, "duplicate_index", "references", f"duplicate reference indices {ref_idx}")
    sk_idx = [s.index for s in req.sketches]
    if len(set(sk_idx)) != len(sk_idx):
        raise ApiError(400, "duplicate_index", "sketches", f"duplicate sketch indices {sk_idx}")
    for field_name, indices in (("references", ref_idx), ("sketches", sk_idx)):
        for i in indices:
            if not (0 <= i < c.K):
                raise ApiError(400, "index_out_of_range", field_name,
                               f"index {i} outside [0, {c.K})")

    entries = []
    for n, r in enumerate(sorted(req.references, key=lambda r: r.index)):
        try:
            frame = b64_to_frame(r.image_b64, channels=3)
        except ToonflowError as e:
            raise ApiError(400, "bad_image", f"references[{n}].image_b64", str(e))
        if frame.shape != (c.H, c.W, 3):
            raise ApiError(400, "bad_dimensions", f"references[{n}].image_b64",
                           f"expected {c.H}x{c.W} RGB, got {frame.shape[1]}x{frame.shape[0]}")
        entries.append((r.index, frame))
    refs = ReferenceSet(entries)

    sketches = []
    for n, s in enumerate(req.sketches):
        try:
            lineart = b64_to_frame(s.image_b64, channels=1)
        except ToonflowError as e:
            raise ApiError(400, "bad_image", f"sketches[{n}].image_b64", str(e))
        if lineart.shape[:2] != (c.H, c.W):
            raise ApiError(400, "bad_dimensions", f"sketches[{n}].image_b64",
                           f"expected {c.H}x{c.W}, got {lineart.shape[1]}x{lineart.shape[0]}")
        if s.mask_rle is not None:
            try:
                mask = rle_to_mask(s.mask_rle)
            except ToonflowError as e:
                raise ApiError(400, "bad_mask", f"sketches[{n}].mask_rle", str(e))
        elif s.mask_b64 is not None:
            try:
                mask = b64_to_frame(s.mask_b64, channels=1)[:, :, 0]
            except ToonflowError as e:
                raise ApiError(400, "bad_mask", f"sketches[{n}].mask_b64", str(e))
            mask = (mask > 0.5).astype(np.float32)
        else:
            mask = full_mask(c.H, c.W)
        if mask.shape != (c.H, c.W):
            raise ApiError(400, "bad_dimensions", f"sketches[{n}].mask",
                           f"mask must be {c.H}x{c.W}, got {mask.shape[1]}x{mask.shape[0]}")
        sketches.append(SketchKeyframe(s.index, lineart, mask))

    if req.prompt_ids is not None:
        ids = np.asarray(req.prompt_ids, dtype=np.int64)
        if ids.shape != (c.prompt_len,) or ids.min() < 0 or ids.max() >= c.vocab:
            raise ApiError(400, "bad_prompt", "prompt_ids",
                           f"need {c.prompt_len} ids within [0, {c.vocab})")
    else:
        text = req.prompt or ""
        unknown = [w for w in text.split() if w not in WORD_TO_ID]
        if unknown:
            raise ApiError(400, "bad_prompt", "prompt", f"unknown words: {unknown}")
        try:
            ids = tokenize(text, c.prompt_len)
        except ToonflowError as e:
            raise ApiError(400, "bad_prompt", "prompt", str(e))
    return refs, sketches, ids


def create_app(checkpoint_dir: str | Path) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app_: FastAPI):
        yield
        app_.state.worker.stop()

    app = FastAPI(title="toonflow generation service", lifespan=lifespan)
    registry = CheckpointRegistry(checkpoint_dir)
    store = JobStore()

    def runner(job, payload):
        model = registry.load(payload["checkpoint"])

        def on_step(i, steps):
            job.progress_step = i
            return not job.cancel_requested

        try:
            clip = generate(model, payload["refs"], payload["sketches"], payload["ids"],
                            alpha=payload["alpha"], steps=payload["steps"],
                            seed=payload["seed"], on_step=on_step)
        except SamplingCancelled:
            return None, []
        pngs = [frame_to_png_bytes(f) for f in clip.frames]
        return clip.frames, pngs

    worker = GenerationWorker(store, runner)
    app.state.store = store
    app.state.worker = worker
    app.state.registry = registry

    @app.exception_handler(ApiError)
    async def api_error_handler(_, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.detail)

    @app.get("/health")
    def health():
        return {"status": "ok", "checkpoints": len(registry.ids())}

    @app.get("/checkpoints")
    def checkpoints():
        return [registry.describe(cid) for cid in registry.ids()]

    @app.post("/jobs")
    def submit(req: GenerationRequest):
        if req.checkpoint not in registry.ids():
            raise ApiError(404, "unknown_checkpoint", "checkpoint",
                           f"no checkpoint named {req.checkpoint!r}")
        model = registry.load(req.checkpoint)
        refs, sketches, ids = _validate(req, model)
        job = store.create(total_steps=req.steps)
        worker.submit(job, {"checkpoint": req.checkpoint, "refs": refs, "sketches": sketches,
                            "ids": ids, "alpha": req.alpha, "steps": req.steps, "seed": req.seed})
        return {"id": job.id}

    def _job_or_404(job_id: str):
        job = store.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", "id", f"no job named {job_id!r}")
        return job

    @app.get("/jobs/{job_id}")
    def poll(job_id: str):
        return _job_or_404(job_id).public()

    @app.post("/jobs/{job_id}/cancel")
    def cancel(job_id: str):
        _job_or_404(job_id)
        return store.request_cancel(job_id).public()

    @app.get("/jobs/{job_id}/frames/{k}")
    def frame(job_id: str, k: int):
        job = _job_or_404(job_id)
        if job.state != "done" or k < 0 or k >= len(job.png_frames):
            raise ApiError(404, "frame_unavailable", "k",
                           f"job {job_id} has no frame {k} (state={job.state})")
        return Response(content=job.png_frames[k], media_type="image/png")

    return app
