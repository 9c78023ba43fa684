"""Rectified-flow objective and sampler.

Convention: z_t = (1-t) z0 + t eta with v_target = eta - z0, so the data lives
at t=0 and pure noise at t=1; sampling integrates z <- z - dt * v from t=1
down to 0. The path is a straight line, which the endpoint and one-step
oracle tests pin down exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import toonflow.numerics as nx
from toonflow.backbone.patches import ReferenceSet, VideoClip, patch_layout
from toonflow.control import SketchKeyframe
from toonflow.errors import ContractError, TrainingError
from toonflow.model import Conditioning, SketchVideoModel, conditioning_from_inputs
from toonflow.rng import derive_rng


class SamplingCancelled(Exception):
    """Raised when a step hook asks the sampler to stop."""


@dataclass
class FlowState:
    """One interpolation point of the straight-line flow."""

    t: np.ndarray          # (B,)
    z_t: np.ndarray        # (B, K, H, W, 3)
    eta: np.ndarray        # same shape, standard normal
    v_target: np.ndarray   # eta - z0


def sample_timestep(rng: np.random.Generator) -> float:
    """Logit-normal draw: sigmoid of a standard normal, always inside (0,1)."""
    return float(1.0 / (1.0 + np.exp(-rng.standard_normal())))


def make_flow_state(z0: np.ndarray, t: np.ndarray, rng: np.random.Generator) -> FlowState:
    t = np.asarray(t, dtype=np.float32).reshape(-1)
    eta = rng.standard_normal(z0.shape, dtype=np.float32)
    tb = t[:, None, None, None, None]
    z_t = (1.0 - tb) * z0 + tb * eta
    return FlowState(t, z_t, eta, eta - z0)


@dataclass
class SampleSpec:
    """Inputs of one generation run; at least one reference and one sketch."""

    refs: ReferenceSet
    sketches: list[SketchKeyframe]
    prompt_ids: np.ndarray
    steps: int = 20
    seed: int = 0
    alpha: float = 1.0
    include_sketch_tokens: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError(f"steps must be >= 1, got {self.steps}")
        if len(self.refs.entries) < 1 or len(self.sketches) < 1:
            raise ContractError("generation needs at least one reference frame and one sketch")


def training_step(model: SketchVideoModel, clips: np.ndarray, cond: Conditioning,
                  rng: np.random.Generator, compute_grads: bool = True,
                  state: FlowState | None = None) -> float:
    """One rectified-flow step: returns the velocity MSE over video-token pixels.

    With compute_grads, backward runs on a fresh tape and leaves gradients on
    every trainable parameter; alpha is expected to be 1 during training. A
    precomputed FlowState overrides the (t, eta) draws (oracle tests).
    """
    c = model.config
    B = clips.shape[0]
    if state is None:
        t = np.array([sample_timestep(rng) for _ in range(B)], dtype=np.float32)
        state = make_flow_state(clips.astype(np.float32, copy=False), t, rng)
    target = patch_layout(state.v_target, c.P).astype(model.dtype, copy=False)

    def forward() -> nx.Tensor:
        seq = model.token_sequence(state.z_t, cond)
        vel = model.dit_forward(seq, state.t, cond.prompt_ids)
        return nx.mse(vel, target)

    if compute_grads:
        with nx.Tape() as tape:
            loss = forward()
            tape.backward(loss)
    else:
        loss = forward()
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingError(f"non-finite loss {value} (t={t.tolist()})")
    return value


def euler_sample(model: SketchVideoModel, spec: SampleSpec,
                 velocity_fn=None, on_step=None) -> np.ndarray:
    """Integrate the flow from pure noise to frames with uniform Euler steps.

    velocity_fn(z, t) overrides the model prediction (oracle tests); on_step
    (i, steps) -> bool is polled after every step and False cancels the run.
    """
    c = model.config
    cond = conditioning_from_inputs(spec.refs, spec.sketches, spec.prompt_ids,
                                    c.K, c.H, c.W, spec.alpha, spec.include_sketch_tokens)
    rng = derive_rng(spec.seed, "euler-noise")
    # integrate in float64 so the straight-line path is step-count invariant
    z = rng.standard_normal((1, c.K, c.H, c.W, 3), dtype=np.float32).astype(np.float64)
    dt = 1.0 / spec.steps
    for i in range(spec.steps):
        t = 1.0 - i * dt
        zf = z.astype(np.float32)
        if velocity_fn is not None:
            v = velocity_fn(zf, t)
        else:
            v = model.predict_velocity(zf, np.array([t], dtype=np.float32), cond)
        z = z - dt * v.astype(np.float64)
        if on_step is not None and not on_step(i + 1, spec.steps):
            raise SamplingCancelled(f"cancelled after step {i + 1}/{spec.steps}")
    return np.clip(z[0], 0.0, 1.0).astype(np.float32)


def generate(model: SketchVideoModel, refs: ReferenceSet, sketches: list[SketchKeyframe],
             prompt_ids: np.ndarray, alpha: float = 1.0, steps: int = 20, seed: int = 0,
             include_sketch_tokens: bool = True, on_step=None) -> VideoClip:
    """Full post-keyframe generation: K frames from references + sketches."""
    spec = SampleSpec(refs, sketches, prompt_ids, steps=steps, seed=seed, alpha=alpha,
                      include_sketch_tokens=include_sketch_tokens)
    frames = euler_sample(model, spec, on_step=on_step)
    return VideoClip(frames)
