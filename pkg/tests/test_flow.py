"""Rectified flow: interpolation identities, sampler exactness, objective laws."""

import numpy as np
import pytest

from toonflow.backbone.config import DiTConfig
from toonflow.backbone.patches import ReferenceSet, patch_layout
from toonflow.control import SketchKeyframe, full_mask
from toonflow.errors import ContractError
from toonflow.flow import (
    FlowState,
    SampleSpec,
    SamplingCancelled,
    euler_sample,
    generate,
    make_flow_state,
    sample_timestep,
    training_step,
)
from toonflow.model import Conditioning, SketchVideoModel
from toonflow.numerics import AdamW
import toonflow.numerics as nx
from toonflow.rng import derive_rng

CFG = DiTConfig(K=2, H=8, W=8, P=4, D=16, heads=2, blocks=2, D_text=8, vocab=16,
                prompt_len=4, mlp_ratio=2)


class FixedNormal:
    """Stub generator exposing just standard_normal with canned values."""

    def __init__(self, value):
        self.value = value

    def standard_normal(self, *a, **k):
        return self.value


def tiny_batch(B=2, seed=0):
    rng = np.random.default_rng(seed)
    clips = rng.random((B, 2, 8, 8, 3), dtype=np.float32)
    refs = np.zeros_like(clips)
    refs[:, 0] = clips[:, 0]
    present = np.zeros((B, 2), dtype=np.float32)
    present[:, 0] = 1
    cond = Conditioning(refs, present, [], np.ones((B, 4), dtype=np.int64))
    return clips, cond


# --- timestep sampling ----------------------------------------------------------

def test_timestep_sigmoid_of_zero():
    assert sample_timestep(FixedNormal(0.0)) == 0.5


def test_timestep_monotone_bounded():
    assert sample_timestep(FixedNormal(40.0)) == pytest.approx(1.0, abs=1e-12)
    assert sample_timestep(FixedNormal(-40.0)) == pytest.approx(0.0, abs=1e-12)
    lo, hi = sample_timestep(FixedNormal(-1.0)), sample_timestep(FixedNormal(1.0))
    assert 0.0 < lo < 0.5 < hi < 1.0


def test_timestep_logit_normal_mean():
    rng = derive_rng(123, "logit-normal")
    draws = 1.0 / (1.0 + np.exp(-rng.standard_normal(100_000)))
    assert abs(draws.mean() - 0.5) < 0.01


# --- interpolation ----------------------------------------------------------------

def test_interpolation_endpoints_exact():
    rng = derive_rng(0, "endpoints")
    z0 = rng.random((1, 2, 4, 4, 3), dtype=np.float32)
    s0 = make_flow_state(z0, np.array([0.0]), derive_rng(1, "eta"))
    assert s0.z_t.tobytes() == z0.tobytes()
    s1 = make_flow_state(z0, np.array([1.0]), derive_rng(1, "eta"))
    assert s1.z_t.tobytes() == s1.eta.tobytes()


def test_velocity_consistency_identity():
    # z_t - t * v_target recovers z0 up to float32 rounding
    rng = derive_rng(2, "consistency")
    z0 = rng.random((3, 2, 4, 4, 3), dtype=np.float32)
    t = np.array([0.2, 0.5, 0.9], dtype=np.float32)
    s = make_flow_state(z0, t, derive_rng(3, "eta"))
    recovered = s.z_t - t[:, None, None, None, None] * s.v_target
    np.testing.assert_allclose(recovered, z0, atol=1e-6)


# --- training objective -------------------------------------------------------------

class OracleModel(SketchVideoModel):
    """Backbone stub whose velocity head emits a preset patch-token answer."""

    def __init__(self, config, answer):
        super().__init__(config, seed=0)
        self.answer = answer

    def dit_forward(self, seq, t, prompt_ids, attn_probs_sink=None):
        return nx.const(self.answer)


def test_training_step_zero_loss_with_oracle_output():
    clips, cond = tiny_batch()
    t = np.array([0.3, 0.7], dtype=np.float32)
    state = make_flow_state(clips, t, derive_rng(4, "eta"))
    answer = patch_layout(state.v_target, CFG.P)
    model = OracleModel(CFG, answer)
    loss = training_step(model, clips, cond, derive_rng(5, "unused"), compute_grads=False, state=state)
    assert loss == 0.0


def test_training_step_zero_output_closed_form():
    clips, cond = tiny_batch()
    t = np.array([0.3, 0.7], dtype=np.float32)
    state = make_flow_state(clips, t, derive_rng(6, "eta"))
    model = OracleModel(CFG, np.zeros_like(patch_layout(state.v_target, CFG.P)))
    loss = training_step(model, clips, cond, derive_rng(7, "unused"), compute_grads=False, state=state)
    assert loss == pytest.approx(float((state.v_target ** 2).mean()), rel=1e-5)


def test_training_step_deterministic():
    def run():
        model = SketchVideoModel(CFG, seed=3)
        clips, cond = tiny_batch()
        return training_step(model, clips, cond, derive_rng(8, "noise"), compute_grads=True)

    assert run() == run()


def test_training_step_populates_trainable_grads_only():
    model = SketchVideoModel(CFG, seed=3)
    model.store.set_trainable(lambda n: n.startswith("control."))
    clips, cond = tiny_batch()
    cond.sketches = [(1, np.random.default_rng(0).random((2, 8, 8, 1), dtype=np.float32),
                      np.ones((2, 8, 8), dtype=np.float32))]
    training_step(model, clips, cond, derive_rng(9, "noise"))
    for p in model.store:
        if p.trainable:
            assert p.tensor.grad is not None, p.name
        else:
            assert p.tensor.grad is None, p.name


def test_overfit_single_batch():
    # a fully fixed batch (clips, t, eta) must collapse under repeated steps
    model = SketchVideoModel(CFG, seed=1)
    clips, cond = tiny_batch(B=2, seed=11)
    cond.sketches = [(1, np.random.default_rng(1).random((2, 8, 8, 1), dtype=np.float32),
                      np.ones((2, 8, 8), dtype=np.float32))]
    state = make_flow_state(clips, np.array([0.3, 0.7], dtype=np.float32), derive_rng(12, "eta"))
    opt = AdamW(model.store.trainable(), lr=3e-3)
    losses = []
    for step in range(200):
        model.store.zero_grads()
        losses.append(training_step(model, clips, cond, derive_rng(12, "noise", step), state=state))
        opt.step()
    final = float(np.mean(losses[-10:]))
    initial = float(np.mean(losses[:10]))
    assert final < 0.1 * initial, (initial, final)


# --- Euler sampler ---------------------------------------------------------------

def sample_inputs():
    rng = derive_rng(13, "sample")
    ref = rng.random((8, 8, 3), dtype=np.float32)
    refs = ReferenceSet([(0, ref)])
    sketches = [SketchKeyframe(1, rng.random((8, 8, 1), dtype=np.float32), full_mask(8, 8))]
    return refs, sketches, np.ones(4, dtype=np.int64)


def test_one_step_oracle_recovers_data():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    z0 = derive_rng(14, "gt").random((1, 2, 8, 8, 3), dtype=np.float32)
    eta = derive_rng(77, "euler-noise").standard_normal((1, 2, 8, 8, 3), dtype=np.float32)
    spec = SampleSpec(refs, sketches, ids, steps=1, seed=77)
    out = euler_sample(model, spec, velocity_fn=lambda z, t: eta - z0)
    np.testing.assert_allclose(out, np.clip(z0[0], 0, 1), atol=1e-6)


def test_straight_path_step_count_invariance():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    z0 = derive_rng(15, "gt").random((1, 2, 8, 8, 3), dtype=np.float32)
    eta = derive_rng(78, "euler-noise").standard_normal((1, 2, 8, 8, 3), dtype=np.float32)
    oracle = lambda z, t: eta - z0
    a = euler_sample(model, SampleSpec(refs, sketches, ids, steps=20, seed=78), velocity_fn=oracle)
    b = euler_sample(model, SampleSpec(refs, sketches, ids, steps=40, seed=78), velocity_fn=oracle)
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_fixed_seed_bit_identical():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    spec = SampleSpec(refs, sketches, ids, steps=3, seed=5)
    assert euler_sample(model, spec).tobytes() == euler_sample(model, spec).tobytes()


def test_generate_returns_clip_in_range():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    clip = generate(model, refs, sketches, ids, steps=2, seed=1)
    assert clip.frames.shape == (2, 8, 8, 3)
    assert clip.frames.min() >= 0.0 and clip.frames.max() <= 1.0


def test_generate_alpha_zero_without_tokens_ignores_sketch_content():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    other = [SketchKeyframe(1, np.ones((8, 8, 1), dtype=np.float32), full_mask(8, 8))]
    a = generate(model, refs, sketches, ids, alpha=0.0, steps=2, seed=3, include_sketch_tokens=False)
    b = generate(model, refs, other, ids, alpha=0.0, steps=2, seed=3, include_sketch_tokens=False)
    assert a.frames.tobytes() == b.frames.tobytes()


def test_sample_spec_contracts():
    refs, sketches, ids = sample_inputs()
    with pytest.raises(ContractError, match="steps"):
        SampleSpec(refs, sketches, ids, steps=0)
    with pytest.raises(ContractError, match="at least one"):
        SampleSpec(refs, [], ids)


def test_sampler_cancellation_between_steps():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    seen = []

    def hook(i, steps):
        seen.append(i)
        return i < 2

    with pytest.raises(SamplingCancelled):
        euler_sample(model, SampleSpec(refs, sketches, ids, steps=6, seed=1), on_step=hook)
    assert seen == [1, 2]


def test_sampler_progress_monotone():
    refs, sketches, ids = sample_inputs()
    model = SketchVideoModel(CFG, seed=0)
    seen = []
    euler_sample(model, SampleSpec(refs, sketches, ids, steps=4, seed=1),
                 on_step=lambda i, n: seen.append((i, n)) or True)
    assert seen == [(1, 4), (2, 4), (3, 4), (4, 4)]
