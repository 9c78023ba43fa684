"""Two-phase training orchestration.

Phase "base" pretrains the backbone as plain image-to-video on natural-mode
clips (no sketch tokens). Phase "adapt" freezes the backbone and trains the
adapter variant plus the control heads on cartoon-mode clips with sparse
sketches and region-mask augmentation.

Every random draw derives from (seed, purpose, step), so a run is a pure
function of its config: resuming from a checkpoint continues the exact
unbroken trace, and two runs with the same config agree bitwise.
"""

from __future__ import annotations

import json
import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from toonflow.backbone.config import DiTConfig
from toonflow.control import SketchKeyframe, apply_region_mask_training, full_mask
from toonflow.errors import ConfigError, ContractError, TrainingError
from toonflow.flow import training_step
from toonflow.model import Conditioning, SketchVideoModel
from toonflow.numerics import AdamW, load_checkpoint, save_checkpoint
from toonflow.rng import derive_rng
from toonflow.slra import AdapterVariantConfig, attach_adapters
from toonflow.toydata.dataset import clip_sample, train_indices, val_indices

# Paper-scale settings kept as a preset; the toy defaults below actually run.
PAPER_PRESET = {"lr": 1e-5, "batch_size": 16, "slra_rank": 144, "lora_rank": 24, "epochs": 10}

BASE_TRAINABLE = "backbone."
ADAPT_TRAINABLE = ("adapter.", "control.")


@dataclass
class TrainConfig:
    phase: str = "base"
    dit: DiTConfig = field(default_factory=DiTConfig)
    adapter: AdapterVariantConfig | None = None
    steps: int = 500
    batch_size: int = 4
    lr: float = 2e-3
    weight_decay: float = 0.0
    seed: int = 0
    data_size: int = 2000
    p_mask: float = 0.5
    lr_schedule: str = "cosine"     # "constant" | "cosine" (warmup then decay)
    out_dir: str = "runs"
    base_checkpoint: str | None = None

    def __post_init__(self):
        if self.phase not in ("base", "adapt"):
            raise ConfigError(f"phase must be base or adapt, got {self.phase!r}")
        if self.phase == "adapt":
            if self.base_checkpoint is None:
                raise ConfigError("phase=adapt requires a base checkpoint path")
            if self.adapter is None:
                raise ConfigError("phase=adapt requires an adapter variant")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")


@dataclass
class TrainResult:
    checkpoint: Path
    losses: list[float]


def batch_indices_for_step(cfg: TrainConfig, step: int) -> np.ndarray:
    pool = np.array(train_indices(cfg.data_size))
    rng = derive_rng(cfg.seed, "data-order", step)
    return pool[rng.integers(0, len(pool), size=cfg.batch_size)]


def sketch_plan_for_step(cfg: TrainConfig, step: int) -> list[int]:
    """1-3 distinct sketch indices shared across the batch, never the reference."""
    rng = derive_rng(cfg.seed, "sketch-plan", step)
    n = int(rng.integers(1, 4))
    pool = np.arange(1, cfg.dit.K)
    picked = rng.choice(pool, size=min(n, len(pool)), replace=False)
    return sorted(int(j) for j in picked)


def data_order_hash(cfg: TrainConfig) -> str:
    h = hashlib.sha256()
    for step in range(cfg.steps):
        h.update(batch_indices_for_step(cfg, step).astype(np.int64).tobytes())
    return h.hexdigest()[:16]


def build_batch(cfg: TrainConfig, step: int, mode: str, with_sketches: bool,
                indices: np.ndarray | None = None,
                noise_tag: str = "mask") -> tuple[np.ndarray, Conditioning]:
    c = cfg.dit
    if indices is None:
        indices = batch_indices_for_step(cfg, step)
    samples = [clip_sample(cfg.seed, int(i), c, mode) for i in indices]
    clips = np.stack([s.frames for s in samples])
    B = len(samples)
    refs = np.zeros_like(clips)
    refs[:, 0] = clips[:, 0]
    present = np.zeros((B, c.K), dtype=np.float32)
    present[:, 0] = 1.0
    prompt = np.stack([s.caption_ids for s in samples])
    sketches = []
    if with_sketches:
        for j in sketch_plan_for_step(cfg, step):
            lineart = np.zeros((B, c.H, c.W, 1), dtype=np.float32)
            mask = np.zeros((B, c.H, c.W), dtype=np.float32)
            for b, s in enumerate(samples):
                kf = SketchKeyframe(j, s.sketch(j), full_mask(c.H, c.W), s.default_style)
                kf = apply_region_mask_training(kf, derive_rng(cfg.seed, noise_tag, step, b, j),
                                                p_mask=cfg.p_mask)
                lineart[b] = kf.lineart
                mask[b] = kf.mask
            sketches.append((j, lineart, mask))
    return clips, Conditioning(refs, present, sketches, prompt, alpha=1.0)


def _trace_path(cfg: TrainConfig) -> Path:
    return Path(cfg.out_dir) / f"trace-{cfg.phase}.jsonl"


def _append_trace(cfg: TrainConfig, rows: list[dict]) -> None:
    p = _trace_path(cfg)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "a") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def lr_at_step(cfg: TrainConfig, step: int, total: int) -> float:
    """Pure function of the step index so resumed runs stay bit-identical."""
    if cfg.lr_schedule == "constant":
        return cfg.lr
    warmup = max(1, min(50, total // 10))
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    frac = (step - warmup) / max(1, total - warmup)
    return cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + math.cos(math.pi * frac)))


def _train_loop(model: SketchVideoModel, cfg: TrainConfig, opt: AdamW, mode: str,
                with_sketches: bool, start_step: int, frozen_prefix: str | None,
                total_steps: int | None = None) -> list[float]:
    losses = []
    rows = []
    total = cfg.steps if total_steps is None else total_steps
    for step in range(start_step, cfg.steps):
        opt.lr = lr_at_step(cfg, step, total)
        clips, cond = build_batch(cfg, step, mode, with_sketches)
        model.store.zero_grads()
        loss = training_step(model, clips, cond, derive_rng(cfg.seed, "flow-noise", step))
        if frozen_prefix is not None and step == start_step:
            for p in model.store:
                if p.name.startswith(frozen_prefix) and p.tensor.grad is not None:
                    raise TrainingError(f"gradient reached frozen parameter {p.name}")
        opt.step()
        losses.append(loss)
        rows.append({"phase": cfg.phase, "step": step, "loss": loss})
    _append_trace(cfg, rows)
    return losses


def _save(model: SketchVideoModel, opt: AdamW, cfg: TrainConfig, path: Path, phase: str,
          names: list[str] | None, extra: dict) -> None:
    arrays = model.state_arrays()
    if names is not None:
        arrays = {n: arrays[n] for n in names}
    arrays.update(opt.state_arrays())
    extra = dict(extra)
    extra["dit"] = asdict(cfg.dit)
    extra["optim_step"] = opt.step_count
    save_checkpoint(path, arrays, cfg.dit.config_hash(), phase, extra)


def _maybe_resume(model: SketchVideoModel, opt: AdamW, path: Path, resume: bool) -> int:
    if not (resume and path.exists()):
        return 0
    ck = load_checkpoint(path)
    model.load_arrays(ck.arrays, strict=False)
    opt.load_state(ck.arrays, int(ck.extra["optim_step"]))
    return int(ck.extra["step"])


def pretrain_base(cfg: TrainConfig, model: SketchVideoModel | None = None,
                  stop_after: int | None = None, resume: bool = True) -> TrainResult:
    """Train the image-to-video backbone on natural clips; writes base.tfck."""
    if cfg.phase != "base":
        raise ConfigError("pretrain_base requires phase=base")
    if model is None:
        model = SketchVideoModel(cfg.dit, seed=cfg.seed)
    if model.dit.adapters is not None or model.dit.lora is not None:
        raise ContractError("pretrain_base refuses a model with adapters attached")
    model.store.set_trainable(lambda n: n.startswith(BASE_TRAINABLE))
    opt = AdamW(model.store.trainable(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    path = Path(cfg.out_dir) / "base.tfck"
    start = _maybe_resume(model, opt, path, resume)
    end = cfg.steps if stop_after is None else min(cfg.steps, start + stop_after)
    sub = TrainConfig(**{**asdict_config(cfg), "steps": end})
    losses = _train_loop(model, sub, opt, mode="natural", with_sketches=False,
                         start_step=start, frozen_prefix=None, total_steps=cfg.steps)
    _save(model, opt, cfg, path, "base", None, {"step": end, "init_seed": cfg.seed})
    return TrainResult(path, losses)


def adapt_cartoon(cfg: TrainConfig, base_checkpoint: str | Path | None = None,
                  stop_after: int | None = None, resume: bool = True) -> TrainResult:
    """Freeze the base, attach the configured adapter, train on cartoon clips."""
    if cfg.phase != "adapt":
        raise ConfigError("adapt_cartoon requires phase=adapt")
    base_path = Path(base_checkpoint or cfg.base_checkpoint)
    base = load_checkpoint(base_path)
    if base.config_hash != cfg.dit.config_hash():
        raise ConfigError(f"base checkpoint config {base.config_hash} does not match {cfg.dit.config_hash()}")
    model = SketchVideoModel(cfg.dit, seed=cfg.seed)
    model.load_arrays(base.arrays, strict=False)
    # derive the sketch head from the *trained* patch projection; a resumed
    # run loads its trained head right back over this below
    model._init_sketch_head_from_patch_proj()
    attach_adapters(model.dit, cfg.adapter, derive_rng(cfg.seed, "adapter-init"))
    base_hashes = model.param_hashes("backbone.")

    opt = AdamW(model.store.trainable(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    name = f"adapter-{cfg.adapter.kind}-r{cfg.adapter.rank}.tfck"
    path = Path(cfg.out_dir) / name
    start = _maybe_resume(model, opt, path, resume)
    end = cfg.steps if stop_after is None else min(cfg.steps, start + stop_after)
    sub = TrainConfig(**{**asdict_config(cfg), "steps": end})
    losses = _train_loop(model, sub, opt, mode="cartoon", with_sketches=True,
                         start_step=start, frozen_prefix="backbone.", total_steps=cfg.steps)
    if model.param_hashes("backbone.") != base_hashes:
        raise TrainingError("base parameters changed during adaptation")
    trainable_names = [p.name for p in model.store.trainable()]
    _save(model, opt, cfg, path, "adapted", trainable_names, {
        "step": end,
        "variant": cfg.adapter.kind,
        "rank": cfg.adapter.rank,
        "base_config": base.config_hash,
    })
    return TrainResult(path, losses)


def asdict_config(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["dit"] = cfg.dit          # keep the dataclass, not its dict form
    d["adapter"] = cfg.adapter
    return d


def load_model(base_path: str | Path, adapter_path: str | Path | None = None) -> SketchVideoModel:
    """Rebuild a model from a base checkpoint, optionally composing an adapter."""
    base = load_checkpoint(base_path)
    dit_cfg = DiTConfig(**base.extra["dit"])
    model = SketchVideoModel(dit_cfg, seed=int(base.extra.get("init_seed", 0)))
    model.load_arrays(base.arrays, strict=False)
    if adapter_path is not None:
        ad = load_checkpoint(adapter_path)
        if ad.extra.get("base_config") != base.config_hash:
            raise ConfigError("adapter checkpoint was trained against a different base config")
        attach_adapters(model.dit, AdapterVariantConfig(ad.extra["variant"], int(ad.extra["rank"])),
                        derive_rng(0, "adapter-init"))
        model.load_arrays(ad.arrays, strict=False)
    return model


def validation_loss(model: SketchVideoModel, cfg: TrainConfig, mode: str,
                    with_sketches: bool, batches: int = 6) -> float:
    """Mean velocity MSE over seeded validation batches (no gradients)."""
    pool = np.array(val_indices(cfg.data_size))
    losses = []
    for b in range(batches):
        rng = derive_rng(cfg.seed, "val-order", b)
        idxs = pool[rng.integers(0, len(pool), size=cfg.batch_size)]
        clips, cond = build_batch(cfg, 10_000 + b, mode, with_sketches, indices=idxs,
                                  noise_tag="val-mask")
        losses.append(training_step(model, clips, cond, derive_rng(cfg.seed, "val-noise", b),
                                    compute_grads=False))
    return float(np.mean(losses))
