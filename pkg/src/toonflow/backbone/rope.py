"""Three-axis rotary position tables.

Each token carries an integer (t, y, x) position. A head's subdimensions are
partitioned across the three axes; every axis rotates its slice of the head by
angle position * base^(-2i/d_axis). Rotation depends only on the position
tuple, never on what kind of token sits there, which is what lets sketch
tokens borrow the rotation of the video position they steer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from toonflow.errors import ContractError
from toonflow.numerics import Tensor, rope_rotate
from toonflow.backbone.config import DiTConfig, split_head_axes


@dataclass(frozen=True)
class RopeTable:
    """Per-axis inverse-frequency tables plus the axis -> subdimension split."""

    alloc: tuple[int, ...]                 # even subdims per axis, sums to rotated dim
    freqs: tuple[np.ndarray, ...]          # per axis: (alloc[i] / 2,) inverse frequencies

    @property
    def dim(self) -> int:
        return int(sum(self.alloc))

    def angles(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """cos/sin tables for integer positions (L, n_axes) -> each (L, dim/2)."""
        positions = np.asarray(positions)
        if positions.ndim != 2 or positions.shape[1] != len(self.alloc):
            raise ContractError(
                f"positions must be (L, {len(self.alloc)}) for this table, got {positions.shape}")
        parts = [positions[:, i:i + 1].astype(np.float64) * f[None, :] for i, f in enumerate(self.freqs)]
        ang = np.concatenate(parts, axis=1)
        return np.cos(ang).astype(np.float32), np.sin(ang).astype(np.float32)


def _axis_freqs(sub_dim: int, base: float) -> np.ndarray:
    i = np.arange(sub_dim // 2, dtype=np.float64)
    return base ** (-2.0 * i / sub_dim)


def build_rope(config: DiTConfig) -> RopeTable:
    """(t, y, x) table covering one attention head of the main model."""
    alloc = split_head_axes(config.head_dim)
    return RopeTable(alloc, tuple(_axis_freqs(d, config.rope_base) for d in alloc))


def build_axes_rope(dims: tuple[int, ...], base: float) -> RopeTable:
    """Table over an arbitrary subset of axes (used by the adapters)."""
    if any(d % 2 != 0 or d < 2 for d in dims):
        raise ContractError(f"rotary axis dims must be even and >= 2, got {dims}")
    return RopeTable(tuple(dims), tuple(_axis_freqs(d, base) for d in dims))


def apply_rope(q: Tensor, k: Tensor, cos: np.ndarray, sin: np.ndarray) -> tuple[Tensor, Tensor]:
    """Rotate (..., L, head_dim) queries/keys by precomputed (L, head_dim/2) tables."""
    return rope_rotate(q, cos, sin), rope_rotate(k, cos, sin)


def video_positions(K: int, h: int, w: int) -> np.ndarray:
    """(K*h*w, 3) integer (t, y, x) in lexicographic token order."""
    t, y, x = np.meshgrid(np.arange(K), np.arange(h), np.arange(w), indexing="ij")
    return np.stack([t.ravel(), y.ravel(), x.ravel()], axis=1)


def frame_positions(j: int, h: int, w: int) -> np.ndarray:
    """(h*w, 3) positions of one frame slice at temporal index j."""
    y, x = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    t = np.full(h * w, j)
    return np.stack([t, y.ravel(), x.ravel()], axis=1)
