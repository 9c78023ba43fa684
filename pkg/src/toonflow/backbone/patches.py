"""Pixel <-> token patch layout and reference-frame channel conditioning.

There is no VAE at this scale: the model diffuses directly in patchified pixel
space, so the patch layout map must be an exact (bit-level) bijection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from toonflow.errors import ContractError, DimensionError


@dataclass
class VideoClip:
    """K x H x W x 3 frame stack in [0,1]."""

    frames: np.ndarray
    fps: float = 8.0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim != 4 or f.shape[-1] != 3 or f.shape[0] < 1:
            raise DimensionError(f"clip frames must be (K,H,W,3) with K>=1, got {f.shape}")
        self.frames = f

    @property
    def K(self) -> int:
        return self.frames.shape[0]


@dataclass
class ReferenceSet:
    """Colored reference frames at strictly increasing temporal indices."""

    entries: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        idx = [i for i, _ in self.entries]
        if len(self.entries) < 1:
            raise ContractError("reference set needs at least one entry")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractError(f"reference indices must be strictly increasing, got {idx}")

    def indices(self) -> list[int]:
        return [i for i, _ in self.entries]

    def validate_for(self, K: int, H: int, W: int) -> None:
        for i, frame in self.entries:
            if not (0 <= i < K):
                raise ContractError(f"reference index {i} outside [0, {K})")
            if frame.shape != (H, W, 3):
                raise DimensionError(f"reference frame at {i} has shape {frame.shape}, expected {(H, W, 3)}")


def patch_layout(frames: np.ndarray, P: int) -> np.ndarray:
    """(K,H,W,C) or (B,K,H,W,C) -> (..., K*h*w, P*P*C) in (t, y, x) token order."""
    *lead, K, H, W, C = frames.shape
    if H % P or W % P:
        raise DimensionError(f"frame dims {H}x{W} not divisible by patch size {P}")
    h, w = H // P, W // P
    x = frames.reshape(*lead, K, h, P, w, P, C)
    x = np.moveaxis(x, -4, -3)  # (..., K, h, w, P, P, C)
    return np.ascontiguousarray(x.reshape(*lead, K * h * w, P * P * C))


def unpatch_layout(tokens: np.ndarray, K: int, H: int, W: int, P: int) -> np.ndarray:
    """Exact inverse of patch_layout; errors if the token count is wrong."""
    h, w = H // P, W // P
    *lead, n, d = tokens.shape
    if n != K * h * w or d % (P * P) != 0:
        raise ContractError(f"expected {K * h * w} tokens of patch dim multiple, got {tokens.shape}")
    C = d // (P * P)
    x = tokens.reshape(*lead, K, h, w, P, P, C)
    x = np.moveaxis(x, -3, -4)  # (..., K, h, P, w, P, C)
    return np.ascontiguousarray(x.reshape(*lead, K, H, W, C))


def reference_channels(refs: ReferenceSet, K: int, H: int, W: int, P: int) -> np.ndarray:
    """(K*h*w, P*P*3 + 1): reference patch pixels or zeros, plus a presence bit.

    The bit disambiguates a genuinely black reference frame from an absent one;
    every temporal index not in the set gets zero pixels and bit 0.
    """
    refs.validate_for(K, H, W)
    dense = np.zeros((K, H, W, 3), dtype=np.float32)
    present = np.zeros(K, dtype=np.float32)
    for i, frame in refs.entries:
        dense[i] = frame
        present[i] = 1.0
    tokens = patch_layout(dense, P)
    h, w = H // P, W // P
    bit = np.repeat(present, h * w)[:, None]
    return np.concatenate([tokens, bit], axis=1)


def reference_channels_batch(ref_frames: np.ndarray, ref_present: np.ndarray, P: int) -> np.ndarray:
    """Batched variant: (B,K,H,W,3) + (B,K) -> (B, K*h*w, P*P*3 + 1)."""
    B, K, H, W, _ = ref_frames.shape
    tokens = patch_layout(ref_frames, P)
    h, w = H // P, W // P
    bit = np.repeat(ref_present, h * w, axis=1)[:, :, None].astype(np.float32)
    return np.concatenate([tokens, bit], axis=2)
