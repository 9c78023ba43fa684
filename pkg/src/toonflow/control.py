"""Sparse sketch injection.

Sketch keyframes are encoded into tokens (line art + region-mask channel
through a projection head), appended to the video token sequence with
positions borrowed from the video frame they steer, and additionally pushed
into the video tokens at the same indices through a zero-initialized linear
residual scaled by the control strength alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import toonflow.numerics as nx
from toonflow.backbone.patches import patch_layout
from toonflow.backbone.rope import frame_positions, video_positions
from toonflow.errors import ContractError, DimensionError
from toonflow.numerics import ParamStore, Tensor

KIND_VIDEO = 0
KIND_SKETCH = 1


@dataclass
class SketchKeyframe:
    """One line-art keyframe: temporal index, strokes, region mask, style tag.

    mask(i,j)=0 marks "no sketch provided here"; line art under a zero mask is
    treated as unspecified and zeroed before encoding.
    """

    index: int
    lineart: np.ndarray          # (H, W, 1) in [0,1]
    mask: np.ndarray             # (H, W) binary
    style: str = "thin"

    def __post_init__(self):
        self.lineart = np.asarray(self.lineart, dtype=np.float32)
        if self.lineart.ndim == 2:
            self.lineart = self.lineart[:, :, None]
        self.mask = np.asarray(self.mask, dtype=np.float32)
        if self.lineart.shape[:2] != self.mask.shape:
            raise DimensionError(
                f"mask shape {self.mask.shape} does not match line art {self.lineart.shape[:2]}")


def full_mask(H: int, W: int) -> np.ndarray:
    return np.ones((H, W), dtype=np.float32)


@dataclass
class SketchTokens:
    """Encoded tokens of one keyframe plus their borrowed (j, y, x) positions."""

    index: int
    tokens: Tensor               # (h*w, D) or (B, h*w, D)
    positions: np.ndarray        # (h*w, 3), temporal coordinate all == index


@dataclass
class TokenSequence:
    """Video tokens followed by sketch blocks, with per-token position and kind.

    Video rows come first in (t, y, x) lexicographic order; sketch blocks are
    sorted by temporal index. block_rows maps each sketch block to (its own row
    span, the row span of the video frame with the same temporal index).
    """

    tokens: Tensor               # (B, L, D)
    positions: np.ndarray        # (L, 3)
    kinds: np.ndarray            # (L,) KIND_VIDEO / KIND_SKETCH
    layout: tuple[int, int, int]  # (K + N, h, w) frame-slice structure
    video_rows: int
    sketch_spans: list[tuple[int, int, int]] = field(default_factory=list)  # (j, start, stop)

    @property
    def length(self) -> int:
        return int(self.tokens.shape[-2])


class ControlHeads:
    """Trainable control parameters: the sketch projection head and W_res."""

    def __init__(self, store: ParamStore, P: int, D: int, rng: np.random.Generator, dtype=np.float32):
        self.P = P
        self.D = D
        in_dim = 2 * P * P  # line-art patch plus mask patch
        if "control.sketch_proj.w" not in store:
            store.add("control.sketch_proj.w", (rng.standard_normal((in_dim, D)) * 0.02).astype(dtype))
            store.add("control.sketch_proj.b", np.zeros(D, dtype=dtype))
            store.add("control.w_res", np.zeros((D, D), dtype=dtype))  # zero so alpha is inert at start
        self.store = store

    @property
    def proj_w(self) -> Tensor:
        return self.store["control.sketch_proj.w"].tensor

    @property
    def proj_b(self) -> Tensor:
        return self.store["control.sketch_proj.b"].tensor

    @property
    def w_res(self) -> Tensor:
        return self.store["control.w_res"].tensor


def sketch_patch_vectors(lineart: np.ndarray, mask: np.ndarray, P: int) -> np.ndarray:
    """Raw per-token vectors [masked line-art patch | mask patch] before projection."""
    la = np.asarray(lineart, dtype=np.float32)
    m = np.asarray(mask, dtype=np.float32)
    if la.ndim == m.ndim:  # missing trailing channel axis
        la = la[..., None]
    la = la * m[..., None]  # strokes under mask=0 are unspecified
    la_tok = patch_layout(la[..., None, :, :, :], P)          # (..., h*w, P*P)
    m_tok = patch_layout(m[..., None, :, :, None], P)
    return np.concatenate([la_tok, m_tok], axis=-1)


def encode_sketch(kf: SketchKeyframe, P: int, heads: ControlHeads) -> SketchTokens:
    """Project one keyframe to (h*w, D) tokens positioned at (kf.index, y, x)."""
    H, W = kf.mask.shape
    if H % P or W % P:
        raise DimensionError(f"sketch dims {H}x{W} not divisible by patch size {P}")
    raw = sketch_patch_vectors(kf.lineart, kf.mask, P)
    tokens = nx.matmul(nx.const(raw), heads.proj_w) + heads.proj_b
    return SketchTokens(kf.index, tokens, frame_positions(kf.index, H // P, W // P))


def encode_sketch_batch(index: int, lineart: np.ndarray, mask: np.ndarray, P: int,
                        heads: ControlHeads) -> SketchTokens:
    """Batched encode: (B,H,W,1)+(B,H,W) -> (B, h*w, D) tokens at shared index."""
    B, H, W = mask.shape
    raw = sketch_patch_vectors(lineart, mask, P)
    tokens = nx.matmul(nx.const(raw), heads.proj_w) + heads.proj_b
    return SketchTokens(index, tokens, frame_positions(index, H // P, W // P))


def assemble_sequence(video_tokens: Tensor, grid: tuple[int, int, int],
                      sketches: list[SketchTokens]) -> TokenSequence:
    """Concatenate video tokens with sketch blocks along the sequence dimension."""
    K, h, w = grid
    hw = h * w
    video_rows = K * hw
    if video_tokens.shape[-2] != video_rows:
        raise ContractError(f"video tokens rows {video_tokens.shape[-2]} != K*h*w = {video_rows}")
    indices = [s.index for s in sketches]
    if len(set(indices)) != len(indices):
        raise ContractError(f"duplicate sketch indices: {indices}")
    if any(not (0 <= j < K) for j in indices):
        raise ContractError(f"sketch index outside [0, {K}): {indices}")

    ordered = sorted(sketches, key=lambda s: s.index)
    parts = [video_tokens]
    for s in ordered:
        tok = s.tokens
        if tok.data.ndim == video_tokens.data.ndim - 1:
            if video_tokens.shape[0] != 1:
                raise ContractError("unbatched sketch tokens cannot join a batched video sequence")
            tok = nx.reshape(tok, (1,) + tuple(tok.shape))
        parts.append(tok)
    tokens = nx.concat(parts, axis=-2) if len(parts) > 1 else video_tokens
    positions = np.concatenate([video_positions(K, h, w)] + [s.positions for s in ordered], axis=0)
    kinds = np.concatenate([
        np.full(video_rows, KIND_VIDEO, dtype=np.uint8),
        np.full(len(ordered) * hw, KIND_SKETCH, dtype=np.uint8),
    ])
    spans = []
    cursor = video_rows
    for s in ordered:
        spans.append((s.index, cursor, cursor + hw))
        cursor += hw
    return TokenSequence(tokens, positions, kinds, (K + len(ordered), h, w), video_rows, spans)


def position_aware_residual(seq: TokenSequence, heads: ControlHeads, alpha: float) -> TokenSequence:
    """Add alpha-scaled projected sketch tokens onto the video tokens at the
    same temporal indices, aligned per (y, x). Sketch tokens are unchanged.
    """
    if alpha < 0:
        raise ContractError(f"control strength alpha must be non-negative, got {alpha}")
    if alpha == 0 or not seq.sketch_spans:
        return seq
    _, h, w = seq.layout
    hw = h * w
    tokens = seq.tokens
    for j, start, stop in seq.sketch_spans:
        block = nx.narrow(tokens, -2, start, stop - start)
        residual = nx.matmul(block, heads.w_res) * alpha
        tokens = nx.row_range_add(tokens, j * hw, (j + 1) * hw, residual)
    return TokenSequence(tokens, seq.positions, seq.kinds, seq.layout, seq.video_rows,
                         list(seq.sketch_spans))


def random_region_mask(H: int, W: int, rng: np.random.Generator) -> np.ndarray:
    """Union of 1-3 axis-aligned rectangles covering 10-60% of the area (zeros inside)."""
    for _ in range(64):
        zero = np.zeros((H, W), dtype=bool)
        for _ in range(int(rng.integers(1, 4))):
            rh = int(rng.integers(max(1, H // 5), max(2, (2 * H) // 3)))
            rw = int(rng.integers(max(1, W // 5), max(2, (2 * W) // 3)))
            y0 = int(rng.integers(0, H - rh + 1))
            x0 = int(rng.integers(0, W - rw + 1))
            zero[y0:y0 + rh, x0:x0 + rw] = True
        frac = zero.mean()
        if 0.10 <= frac <= 0.60:
            return (~zero).astype(np.float32)
    # fall back to a single centered rectangle at ~35% coverage
    rh, rw = int(H * 0.6), int(W * 0.6)
    y0, x0 = (H - rh) // 2, (W - rw) // 2
    mask = np.ones((H, W), dtype=np.float32)
    mask[y0:y0 + rh, x0:x0 + rw] = 0.0
    return mask


def apply_region_mask_training(kf: SketchKeyframe, rng: np.random.Generator,
                               p_mask: float = 0.5) -> SketchKeyframe:
    """Training-time augmentation: sometimes blank out rectangular regions."""
    if rng.random() >= p_mask:
        return kf
    H, W = kf.mask.shape
    mask = kf.mask * random_region_mask(H, W, rng)
    lineart = kf.lineart * mask[:, :, None]
    return SketchKeyframe(kf.index, lineart, mask, kf.style)
