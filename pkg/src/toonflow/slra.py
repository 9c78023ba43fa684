"""Low-rank adapters over a frozen backbone.

The spatial adapter projects block-input hiddens down to a small rank, runs
single-head attention within each frame slice independently (so information
never crosses the temporal axis), projects back up through a zero-initialized
matrix, and the result is added next to each block's self-attention output.
Variants swap the attention axis (temporal, joint, none) and a conventional
low-rank-delta baseline hooks the q/k/v/o projections instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

import toonflow.numerics as nx
from toonflow.backbone.dit import DiT
from toonflow.backbone.rope import RopeTable, build_axes_rope, frame_positions
from toonflow.errors import ContractError
from toonflow.numerics import Tensor

VARIANT_KINDS = ("slra", "temporal", "spatiotemporal", "linear", "lora")


@dataclass(frozen=True)
class AdapterVariantConfig:
    kind: str = "slra"
    rank: int = 8

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ContractError(f"unknown adapter kind {self.kind!r}, expected one of {VARIANT_KINDS}")
        if self.rank < 1:
            raise ContractError(f"adapter rank must be >= 1, got {self.rank}")


def slra_param_count(D: int, rank: int) -> int:
    """Per block: down D x r, up r x D, and three r x r attention matrices."""
    return 2 * D * rank + 3 * rank * rank


def linear_param_count(D: int, rank: int) -> int:
    return 2 * D * rank


def lora_param_count(D: int, rank: int) -> int:
    """Per block: rank-decomposed deltas on each of the q/k/v/o projections."""
    return 4 * 2 * D * rank


def param_match(D: int, blocks: int, slra_rank: int) -> int:
    """Largest delta-baseline rank whose total count stays within the spatial
    adapter's budget (counts are proportional to `blocks`, which cancels)."""
    budget = blocks * slra_param_count(D, slra_rank)
    r = budget // (blocks * 8 * D)
    return max(1, int(r))


def _split_two_axes(rank: int) -> tuple[int, int]:
    a = (rank // 2) // 2 * 2
    b = rank - a
    if a < 2 or b < 2 or b % 2:
        raise ContractError(f"adapter rank {rank} cannot carry two even rotary axes")
    return a, b


class LowRankAdapter:
    """One per-block adapter instance (any non-lora kind)."""

    def __init__(self, block: int, kind: str, D: int, rank: int, rope_base: float,
                 store, rng: np.random.Generator, dtype=np.float32):
        self.block = block
        self.kind = kind
        self.rank = rank
        p = f"adapter.block{block}"
        init = lambda *s: (rng.standard_normal(s) * 0.02).astype(dtype)
        self.w_down = store.add(f"{p}.down", init(D, rank))
        self.w_up = store.add(f"{p}.up", np.zeros((rank, D), dtype=dtype))  # zero start: adapter is inert
        if kind != "linear":
            self.w_q = store.add(f"{p}.wq", init(rank, rank))
            self.w_k = store.add(f"{p}.wk", init(rank, rank))
            self.w_v = store.add(f"{p}.wv", init(rank, rank))
        if kind == "slra":
            self.rope = build_axes_rope(_split_two_axes(rank), rope_base)   # (y, x) axes
        elif kind == "temporal":
            self.rope = build_axes_rope((rank,), rope_base)                 # t axis only
        elif kind == "spatiotemporal":
            t = (rank // 2) // 2 * 2
            y, x = _split_two_axes(rank - t)
            self.rope = build_axes_rope((t, y, x), rope_base)
        else:
            self.rope = None

    def __call__(self, h: Tensor, layout: tuple[int, int, int]) -> Tensor:
        """h (B, L, D) with L == frames*h*w -> residual (B, L, D)."""
        frames, gh, gw = layout
        hw = gh * gw
        B, L, D = h.shape
        if L != frames * hw:
            raise ContractError(f"adapter layout {layout} does not tile sequence length {L}")
        low = nx.matmul(h, self.w_down)
        if self.kind == "linear":
            return nx.matmul(low, self.w_up)

        scale = 1.0 / math.sqrt(self.rank)
        if self.kind == "slra":
            # frame slices attend internally; same spatial grid in every slice
            sliced = nx.reshape(low, (B, frames, hw, self.rank))
            pos = frame_positions(0, gh, gw)[:, 1:]          # (hw, 2) -> (y, x)
            cos, sin = self.rope.angles(pos)
            out = self._attend(sliced, cos, sin, scale)
            return nx.matmul(nx.reshape(out, (B, L, self.rank)), self.w_up)
        if self.kind == "temporal":
            # each spatial site attends across frames
            sliced = nx.transpose(nx.reshape(low, (B, frames, hw, self.rank)), (0, 2, 1, 3))
            tpos = np.arange(frames)[:, None]
            cos, sin = self.rope.angles(tpos)
            out = self._attend(sliced, cos, sin, scale)
            out = nx.transpose(out, (0, 2, 1, 3))
            return nx.matmul(nx.reshape(out, (B, L, self.rank)), self.w_up)
        # spatiotemporal: joint attention over the whole sequence
        pos = np.concatenate([frame_positions(f, gh, gw) for f in range(frames)], axis=0)
        cos, sin = self.rope.angles(pos)
        out = self._attend(low, cos, sin, scale)
        return nx.matmul(out, self.w_up)

    def _attend(self, x: Tensor, cos: np.ndarray, sin: np.ndarray, scale: float) -> Tensor:
        q = nx.rope_rotate(nx.matmul(x, self.w_q), cos, sin)
        k = nx.rope_rotate(nx.matmul(x, self.w_k), cos, sin)
        v = nx.matmul(x, self.w_v)
        return nx.attention(q, k, v, scale)


def attach_adapters(model: DiT, variant: AdapterVariantConfig, rng: np.random.Generator) -> None:
    """Register adapter parameters, freeze the base, hook the blocks.

    After attaching, the trainable set is exactly the adapter parameters plus
    the control heads (sketch projection and the position-aware residual).
    """
    if model.adapters is not None or model.lora is not None:
        raise ContractError("adapters already attached to this model")
    c = model.config
    if variant.kind == "lora":
        lora = {}
        for i in range(c.blocks):
            for which in ("q", "k", "v", "o"):
                a = model.store.add(f"adapter.block{i}.lora.{which}.down",
                                    (rng.standard_normal((c.D, variant.rank)) * 0.02).astype(model.dtype))
                b = model.store.add(f"adapter.block{i}.lora.{which}.up",
                                    np.zeros((variant.rank, c.D), dtype=model.dtype))
                lora[(i, which)] = (a, b)
        model.lora = lora
    else:
        model.adapters = [
            LowRankAdapter(i, variant.kind, c.D, variant.rank, c.rope_base, model.store, rng, model.dtype)
            for i in range(c.blocks)
        ]
    model.store.set_trainable(lambda name: name.startswith(("adapter.", "control.")))


def adapter_param_names(model: DiT) -> list[str]:
    return [n for n in model.store.names() if n.startswith("adapter.")]
