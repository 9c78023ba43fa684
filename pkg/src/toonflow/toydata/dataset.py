"""Clip samples, the training stream, and the held-out benchmark builder."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from toonflow.backbone.config import DiTConfig
from toonflow.errors import ContractError
from toonflow.toydata.captions import tokenize
from toonflow.toydata.scenes import SceneSpec, caption_of, make_scene, render_clip, turn_frame
from toonflow.toydata.sketches import STYLE_TAGS, extract_sketch, style_named

VAL_EVERY = 20  # every 20th index is validation (5% by seed partition)


@dataclass
class ClipSample:
    """One rendered scene with caption ids and on-demand (memoized) sketches."""

    spec: SceneSpec
    frames: np.ndarray            # (K, H, W, 3)
    caption_ids: np.ndarray
    mode: str
    default_style: str
    _sketch_cache: dict = field(default_factory=dict, repr=False)

    def sketch(self, k: int, style_tag: str | None = None) -> np.ndarray:
        tag = style_tag or self.default_style
        hit = self._sketch_cache.get((k, tag))
        if hit is None:
            hit = extract_sketch(self.frames[k], style_named(tag, seed=self.spec.index))
            self._sketch_cache[(k, tag)] = hit
        return hit

    def all_sketches(self) -> dict[str, np.ndarray]:
        K = self.frames.shape[0]
        return {tag: np.stack([self.sketch(k, tag) for k in range(K)]) for tag in STYLE_TAGS}


_CLIP_CACHE: dict[tuple, ClipSample] = {}
_CLIP_CACHE_MAX = 4096


def clip_sample(domain_seed: int, index: int, config: DiTConfig, mode: str,
                n_shapes: int | None = None) -> ClipSample:
    key = (domain_seed, index, mode, n_shapes, config.config_hash())
    hit = _CLIP_CACHE.get(key)
    if hit is not None:
        return hit
    spec = make_scene(domain_seed, index, config.K, config.H, config.W, n_shapes=n_shapes)
    frames = render_clip(spec, config.K, config.H, config.W, mode)
    ids = tokenize(caption_of(spec), config.prompt_len)
    sample = ClipSample(spec, frames, ids, mode, STYLE_TAGS[index % len(STYLE_TAGS)])
    if len(_CLIP_CACHE) < _CLIP_CACHE_MAX:
        _CLIP_CACHE[key] = sample
    return sample


def is_validation_index(index: int) -> bool:
    return index % VAL_EVERY == VAL_EVERY - 1


def train_indices(data_size: int) -> list[int]:
    return [i for i in range(data_size) if not is_validation_index(i)]


def val_indices(data_size: int) -> list[int]:
    return [i for i in range(data_size) if is_validation_index(i)]


@dataclass
class BenchmarkSample:
    """Eval unit: ground truth retained, reference frame 0, sparse sketches."""

    sample: ClipSample
    sketch_indices: list[int]
    style: str

    @property
    def trajectory(self) -> str:
        return self.sample.spec.shapes[0].trajectory


def build_benchmark(n: int, seed: int, train_seeds: set[int] | list[int],
                    config: DiTConfig | None = None) -> list[BenchmarkSample]:
    """n held-out single-shape samples; refuses seed reuse with training.

    Turn-trajectory samples get an extra mid sketch candidate at K//2; every
    sample gets the final-frame sketch at K-1.
    """
    if n < 1:
        raise ContractError(f"benchmark size must be >= 1, got {n}")
    train_seeds = set(train_seeds)
    if seed in train_seeds:
        raise ContractError(f"benchmark seed {seed} intersects the training seed set")
    config = config or DiTConfig()
    out = []
    for i in range(n):
        sample = clip_sample(seed, i, config, "cartoon", n_shapes=1)
        indices = [config.K - 1]
        if sample.spec.shapes[0].trajectory == "turn":
            indices = [turn_frame(config.K), config.K - 1]
        out.append(BenchmarkSample(sample, indices, "thin"))
    return out


def write_manifest(samples: list[BenchmarkSample], seed: int, path: str | Path) -> None:
    """Line-delimited records; clips regenerate from (seed, index) on load."""
    lines = []
    for i, b in enumerate(samples):
        lines.append(json.dumps({
            "index": i,
            "seed": seed,
            "inline": True,
            "mode": b.sample.mode,
            "trajectory": b.trajectory,
            "sketch_indices": b.sketch_indices,
            "style": b.style,
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path, config: DiTConfig) -> list[BenchmarkSample]:
    samples = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if not rec.get("inline", True):
            raise ContractError("materialized manifests are not supported by this build")
        sample = clip_sample(rec["seed"], rec["index"], config, rec["mode"], n_shapes=1)
        samples.append(BenchmarkSample(sample, list(rec["sketch_indices"]), rec["style"]))
    return samples
