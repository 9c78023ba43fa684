"""Miniature image-to-video diffusion transformer.

Pre-norm blocks over the full (video + sketch) token sequence: rotary
self-attention, prompt cross-attention, gated MLP, with per-block
shift/scale/gate modulation derived from a sinusoidally embedded timestep.
Attention out-projections and MLP second layers start at zero, so a fresh
model is an identity map up to the final norm.
"""

from __future__ import annotations

import math

import numpy as np

import toonflow.numerics as nx
from toonflow.backbone.config import DiTConfig
from toonflow.backbone.rope import RopeTable, build_rope
from toonflow.errors import ContractError
from toonflow.numerics import ParamStore, Tensor

PAD_TOKEN = 0


def timestep_features(t: np.ndarray, dim: int, dtype) -> np.ndarray:
    """Sinusoidal features of t in [0,1], spread over [0,1000] phase range."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = (np.asarray(t, dtype=np.float64)[:, None] * 1000.0) * freqs[None, :]
    return np.concatenate([np.cos(ang), np.sin(ang)], axis=1).astype(dtype)


class DiT:
    """Backbone transformer; owns its parameters inside a shared ParamStore."""

    def __init__(self, config: DiTConfig, store: ParamStore, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.store = store
        self.dtype = dtype
        self.rope: RopeTable = build_rope(config)
        # Filled by the adapter module when a variant is attached.
        self.adapters = None          # list of per-block residual callables
        self.lora = None              # dict[(block, proj_name)] -> (A, B) tensors
        self._build(rng)

    def _build(self, rng: np.random.Generator) -> None:
        c = self.config
        std = 0.02

        def init(*shape):
            return (rng.standard_normal(shape) * std).astype(self.dtype)

        def zeros(*shape):
            return np.zeros(shape, dtype=self.dtype)

        add = self.store.add
        in_dim = 2 * c.patch_dim + 1  # noisy patch, reference patch, presence bit
        add("backbone.patch_proj.w", init(in_dim, c.D))
        add("backbone.patch_proj.b", zeros(c.D))
        add("backbone.t_embed.fc1.w", init(c.D, c.D))
        add("backbone.t_embed.fc1.b", zeros(c.D))
        add("backbone.t_embed.fc2.w", init(c.D, c.D))
        add("backbone.t_embed.fc2.b", zeros(c.D))
        add("backbone.prompt.table", init(c.vocab, c.D_text))
        for i in range(c.blocks):
            p = f"backbone.block{i}"
            add(f"{p}.attn.wq", init(c.D, c.D))
            add(f"{p}.attn.wk", init(c.D, c.D))
            add(f"{p}.attn.wv", init(c.D, c.D))
            add(f"{p}.attn.wo", zeros(c.D, c.D))
            add(f"{p}.cross.wq", init(c.D, c.D))
            add(f"{p}.cross.wk", init(c.D_text, c.D))
            add(f"{p}.cross.wv", init(c.D_text, c.D))
            add(f"{p}.cross.wo", zeros(c.D, c.D))
            add(f"{p}.mlp.fc1.w", init(c.D, c.mlp_ratio * c.D))
            add(f"{p}.mlp.fc1.b", zeros(c.mlp_ratio * c.D))
            add(f"{p}.mlp.fc2.w", zeros(c.mlp_ratio * c.D, c.D))
            add(f"{p}.mlp.fc2.b", zeros(c.D))
            add(f"{p}.mod.w", init(c.D, 6 * c.D))
            add(f"{p}.mod.b", zeros(6 * c.D))
        add("backbone.head.w", init(c.D, c.patch_dim))
        add("backbone.head.b", zeros(c.patch_dim))

    def _w(self, name: str) -> Tensor:
        return self.store[name].tensor

    def _proj(self, x: Tensor, block: int, which: str) -> Tensor:
        """Self-attention projection with optional low-rank delta on top."""
        out = nx.matmul(x, self._w(f"backbone.block{block}.attn.w{which}"))
        if self.lora is not None:
            a, b = self.lora[(block, which)]
            out = out + nx.matmul(nx.matmul(x, a), b)
        return out

    def _heads(self, x: Tensor, B: int, L: int) -> Tensor:
        c = self.config
        return nx.transpose(nx.reshape(x, (B, L, c.heads, c.head_dim)), (0, 2, 1, 3))

    def _unheads(self, x: Tensor, B: int, L: int) -> Tensor:
        return nx.reshape(nx.transpose(x, (0, 2, 1, 3)), (B, L, self.config.D))

    def timestep_vector(self, t: np.ndarray) -> Tensor:
        feats = nx.const(timestep_features(t, self.config.D, self.dtype))
        h = nx.silu(nx.matmul(feats, self._w("backbone.t_embed.fc1.w")) + self._w("backbone.t_embed.fc1.b"))
        return nx.matmul(h, self._w("backbone.t_embed.fc2.w")) + self._w("backbone.t_embed.fc2.b")

    def prompt_embedding(self, prompt_ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """(B, Tp) ids -> ((B, Tp, D_text) embeddings, (B, 1, 1, Tp) pad bias)."""
        if prompt_ids.ndim != 2 or prompt_ids.shape[1] != self.config.prompt_len:
            raise ContractError(f"prompt ids must be (B, {self.config.prompt_len}), got {prompt_ids.shape}")
        emb = nx.embedding(self._w("backbone.prompt.table"), prompt_ids)
        bias = np.where(prompt_ids == PAD_TOKEN, -1e9, 0.0).astype(self.dtype)
        return emb, bias[:, None, None, :]

    def forward_hidden(self, tokens: Tensor, positions: np.ndarray, t: np.ndarray,
                       prompt_ids: np.ndarray, layout: tuple[int, int, int] | None = None,
                       attn_probs_sink: list | None = None) -> Tensor:
        """Run all blocks and the final norm; returns (B, L, D) hiddens.

        `layout` is the (frames, h, w) frame-slice structure the adapters need;
        it must satisfy frames*h*w == L when adapters are attached.
        """
        c = self.config
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ContractError(f"timestep must lie in [0,1], got {t}")
        B, L, _ = tokens.shape
        scale = 1.0 / math.sqrt(c.head_dim)
        cos, sin = self.rope.angles(positions)

        t_vec = self.timestep_vector(t)                     # (B, D)
        t_act = nx.silu(t_vec)
        prompt_emb, prompt_bias = self.prompt_embedding(prompt_ids)

        x = tokens
        for i in range(c.blocks):
            p = f"backbone.block{i}"
            mod = nx.matmul(t_act, self._w(f"{p}.mod.w")) + self._w(f"{p}.mod.b")
            chunks = [nx.reshape(nx.narrow(mod, 1, j * c.D, c.D), (B, 1, c.D)) for j in range(6)]
            shift_a, scale_a, gate_a, shift_m, scale_m, gate_m = chunks

            # self-attention over the full sequence with rotary positions
            x_in = x
            h = nx.layernorm(x) * (scale_a + 1.0) + shift_a
            q = self._heads(self._proj(h, i, "q"), B, L)
            k = self._heads(self._proj(h, i, "k"), B, L)
            v = self._heads(self._proj(h, i, "v"), B, L)
            q = nx.rope_rotate(q, cos, sin)
            k = nx.rope_rotate(k, cos, sin)
            att = nx.attention(q, k, v, scale, probs_sink=attn_probs_sink)
            att = self._proj(self._unheads(att, B, L), i, "o")
            x = x + gate_a * att
            if self.adapters is not None:
                x = x + self.adapters[i](x_in, layout)

            # prompt cross-attention (all tokens query the caption)
            h = nx.layernorm(x)
            q = self._heads(nx.matmul(h, self._w(f"{p}.cross.wq")), B, L)
            Tp = prompt_emb.shape[1]
            kc = self._heads(nx.matmul(prompt_emb, self._w(f"{p}.cross.wk")), B, Tp)
            vc = self._heads(nx.matmul(prompt_emb, self._w(f"{p}.cross.wv")), B, Tp)
            catt = nx.attention(q, kc, vc, scale, bias=prompt_bias)
            x = x + nx.matmul(self._unheads(catt, B, L), self._w(f"{p}.cross.wo"))

            # gated MLP
            h = nx.layernorm(x) * (scale_m + 1.0) + shift_m
            h = nx.gelu(nx.matmul(h, self._w(f"{p}.mlp.fc1.w")) + self._w(f"{p}.mlp.fc1.b"))
            h = nx.matmul(h, self._w(f"{p}.mlp.fc2.w")) + self._w(f"{p}.mlp.fc2.b")
            x = x + gate_m * h

        return nx.layernorm(x)

    def velocity_head(self, hidden: Tensor, video_rows: int) -> Tensor:
        """Project the video-token prefix to per-patch pixel velocities."""
        vid = nx.narrow(hidden, 1, 0, video_rows)
        return nx.matmul(vid, self._w("backbone.head.w")) + self._w("backbone.head.b")
