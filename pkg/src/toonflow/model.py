"""Full generator: backbone + control heads behind one forward surface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import toonflow.numerics as nx
from toonflow.backbone.config import DiTConfig
from toonflow.backbone.dit import DiT
from toonflow.backbone.patches import (
    ReferenceSet,
    patch_layout,
    reference_channels_batch,
    unpatch_layout,
)
from toonflow.control import (
    ControlHeads,
    SketchKeyframe,
    TokenSequence,
    assemble_sequence,
    encode_sketch_batch,
    position_aware_residual,
)
from toonflow.errors import ContractError
from toonflow.numerics import ParamStore, Tensor
from toonflow.rng import derive_rng


@dataclass
class LatentGrid:
    """Projected video tokens plus their recoverable grid dimensions."""

    tokens: Tensor                    # (B, K*h*w, D)
    grid: tuple[int, int, int]        # (K, h, w)


@dataclass
class Conditioning:
    """Batched generation/training conditions.

    Sketches are (index, lineart (B,H,W,1), mask (B,H,W)) with a shared index
    set across the batch; reference frames are dense with a presence mask.
    """

    ref_frames: np.ndarray            # (B, K, H, W, 3), zeros where absent
    ref_present: np.ndarray           # (B, K) in {0,1}
    sketches: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    prompt_ids: np.ndarray | None = None
    alpha: float = 1.0
    include_sketch_tokens: bool = True


def conditioning_from_inputs(refs: ReferenceSet, sketches: list[SketchKeyframe],
                             prompt_ids: np.ndarray, K: int, H: int, W: int,
                             alpha: float = 1.0, include_sketch_tokens: bool = True) -> Conditioning:
    """Single-sample conditioning (batch of one) from the user-facing types."""
    refs.validate_for(K, H, W)
    ref_frames = np.zeros((1, K, H, W, 3), dtype=np.float32)
    ref_present = np.zeros((1, K), dtype=np.float32)
    for i, frame in refs.entries:
        ref_frames[0, i] = frame
        ref_present[0, i] = 1.0
    sk = []
    for kf in sorted(sketches, key=lambda s: s.index):
        if not (0 <= kf.index < K):
            raise ContractError(f"sketch index {kf.index} outside [0, {K})")
        sk.append((kf.index, kf.lineart[None], kf.mask[None]))
    return Conditioning(ref_frames, ref_present, sk, np.asarray(prompt_ids)[None],
                        alpha, include_sketch_tokens)


class SketchVideoModel:
    """Owns the parameter store; every forward path starts here."""

    def __init__(self, config: DiTConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.store = ParamStore()
        rng = derive_rng(seed, "model-init")
        self.dit = DiT(config, self.store, rng, dtype)
        self.control = ControlHeads(self.store, config.P, config.D, rng, dtype)
        self.dtype = dtype
        self._init_sketch_head_from_patch_proj()

    def _init_sketch_head_from_patch_proj(self) -> None:
        """Start sketch tokens inside the embedding distribution the backbone knows.

        A sketch patch is mapped exactly as patch_proj would map a reference
        frame showing the line art (gray replicated to RGB) with its presence
        bit set to the mask mean, so the frozen base can read sketch tokens
        the way it reads reference conditioning from step one of adaptation.
        """
        c = self.config
        pp = self.store["backbone.patch_proj.w"].tensor.data
        n = c.P * c.P
        ref_rows = pp[3 * n: 6 * n]        # reference RGB rows, pixel-major
        presence_row = pp[6 * n]
        w = np.zeros((2 * n, c.D), dtype=self.dtype)
        for i in range(n):
            w[i] = ref_rows[3 * i] + ref_rows[3 * i + 1] + ref_rows[3 * i + 2]
        for j in range(n):
            w[n + j] = presence_row / n
        self.store["control.sketch_proj.w"].tensor.data = w
        self.store["control.sketch_proj.b"].tensor.data = \
            self.store["backbone.patch_proj.b"].tensor.data.copy()

    # -- embedding ---------------------------------------------------------

    def patchify(self, frames: np.ndarray, cond: Conditioning) -> LatentGrid:
        """Noisy frames (B,K,H,W,3) + channel conditioning -> projected tokens."""
        c = self.config
        raw = patch_layout(frames.astype(self.dtype, copy=False), c.P)
        refc = reference_channels_batch(cond.ref_frames, cond.ref_present, c.P)
        full = np.concatenate([raw, refc.astype(self.dtype, copy=False)], axis=-1)
        tokens = nx.matmul(nx.const(full), self.store["backbone.patch_proj.w"].tensor) \
            + self.store["backbone.patch_proj.b"].tensor
        return LatentGrid(tokens, (c.K, c.grid_h, c.grid_w))

    def token_sequence(self, frames: np.ndarray, cond: Conditioning) -> TokenSequence:
        """Assemble the full video+sketch sequence and apply the control residual."""
        grid = self.patchify(frames, cond)
        sketch_tokens = []
        if cond.include_sketch_tokens:
            for j, lineart, mask in cond.sketches:
                sketch_tokens.append(encode_sketch_batch(j, lineart, mask, self.config.P, self.control))
        seq = assemble_sequence(grid.tokens, grid.grid, sketch_tokens)
        return position_aware_residual(seq, self.control, cond.alpha)

    # -- forward -----------------------------------------------------------

    def dit_forward(self, seq: TokenSequence, t: np.ndarray, prompt_ids: np.ndarray,
                    attn_probs_sink: list | None = None) -> Tensor:
        """Velocity tokens (B, K*h*w, P*P*3) for the video positions of `seq`."""
        hidden = self.dit.forward_hidden(seq.tokens, seq.positions, t, prompt_ids,
                                         layout=seq.layout, attn_probs_sink=attn_probs_sink)
        return self.dit.velocity_head(hidden, seq.video_rows)

    def predict_velocity(self, frames: np.ndarray, t: np.ndarray, cond: Conditioning) -> np.ndarray:
        """(B,K,H,W,3) velocity field; runs untaped (no gradients recorded)."""
        c = self.config
        seq = self.token_sequence(frames, cond)
        vel = self.dit_forward(seq, t, cond.prompt_ids)
        return unpatch_layout(vel.numpy(), c.K, c.H, c.W, c.P)

    # -- persistence -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return self.store.state_arrays()

    def load_arrays(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        self.store.load_state(arrays, strict=strict)

    def param_hashes(self, prefix: str = "") -> dict[str, str]:
        import hashlib

        return {
            name: hashlib.sha256(p.tensor.data.tobytes()).hexdigest()
            for name, p in ((n, self.store[n]) for n in self.store.names())
            if name.startswith(prefix)
        }
