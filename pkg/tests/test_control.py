"""Sketch injection: encoding, sequence layout, residual laws, region masks."""

import numpy as np
import pytest

import toonflow.numerics as nx
from toonflow.backbone.config import DiTConfig
from toonflow.backbone.rope import build_rope
from toonflow.control import (
    ControlHeads,
    SketchKeyframe,
    apply_region_mask_training,
    assemble_sequence,
    encode_sketch,
    full_mask,
    position_aware_residual,
    random_region_mask,
    sketch_patch_vectors,
)
from toonflow.errors import ContractError, DimensionError
from toonflow.model import SketchVideoModel, Conditioning
from toonflow.numerics import ParamStore
from toonflow.rng import derive_rng


def make_heads(P=4, D=16, seed=0):
    return ControlHeads(ParamStore(), P, D, np.random.default_rng(seed))


# --- encode_sketch -------------------------------------------------------------

def test_encode_blank_lineart_constant_tokens():
    heads = make_heads()
    kf = SketchKeyframe(1, np.zeros((8, 8, 1)), full_mask(8, 8))
    toks = encode_sketch(kf, 4, heads).tokens.numpy()
    raw = np.concatenate([np.zeros(16), np.ones(16)]).astype(np.float32)
    expected = raw @ heads.proj_w.numpy() + heads.proj_b.numpy()
    for row in toks:
        np.testing.assert_allclose(row, expected, atol=1e-6)


def test_encode_masked_out_lineart_is_ignored():
    heads = make_heads()
    rng = np.random.default_rng(1)
    a = encode_sketch(SketchKeyframe(0, rng.random((8, 8, 1)), np.zeros((8, 8))), 4, heads)
    b = encode_sketch(SketchKeyframe(0, rng.random((8, 8, 1)), np.zeros((8, 8))), 4, heads)
    np.testing.assert_array_equal(a.tokens.numpy(), b.tokens.numpy())


def test_encode_token_count_and_positions():
    heads = make_heads()
    st = encode_sketch(SketchKeyframe(3, np.zeros((8, 8, 1)), full_mask(8, 8)), 4, heads)
    assert st.tokens.shape == (4, 16)
    assert np.all(st.positions[:, 0] == 3)
    np.testing.assert_array_equal(st.positions[:, 1:], [[0, 0], [0, 1], [1, 0], [1, 1]])


def test_encode_dim_mismatch():
    with pytest.raises(DimensionError, match="mask"):
        SketchKeyframe(0, np.zeros((8, 8, 1)), np.zeros((4, 8)))


def test_mask_neutrality():
    # all-ones mask tokens equal the raw [lineart | 1] encoding path
    heads = make_heads()
    rng = np.random.default_rng(2)
    la = rng.random((8, 8, 1)).astype(np.float32)
    toks = encode_sketch(SketchKeyframe(0, la, full_mask(8, 8)), 4, heads).tokens.numpy()
    raw = sketch_patch_vectors(la, np.ones((8, 8), dtype=np.float32), 4)
    expected = raw @ heads.proj_w.numpy() + heads.proj_b.numpy()
    np.testing.assert_array_equal(toks, expected)


# --- assemble_sequence ----------------------------------------------------------

def video_tokens(K, h, w, D=16, seed=0):
    rng = np.random.default_rng(seed)
    return nx.const(rng.standard_normal((1, K * h * w, D)).astype(np.float32))


def test_assemble_pure_video():
    seq = assemble_sequence(video_tokens(4, 2, 2), (4, 2, 2), [])
    assert seq.length == 16
    assert np.all(seq.kinds == 0)
    assert seq.layout == (4, 2, 2)
    assert seq.sketch_spans == []


def test_assemble_layout_oracle():
    heads = make_heads()
    s0 = encode_sketch(SketchKeyframe(0, np.zeros((8, 8, 1)), full_mask(8, 8)), 4, heads)
    s3 = encode_sketch(SketchKeyframe(3, np.zeros((8, 8, 1)), full_mask(8, 8)), 4, heads)
    seq = assemble_sequence(video_tokens(4, 2, 2), (4, 2, 2), [s3, s0])  # unsorted input
    assert seq.length == 24
    np.testing.assert_array_equal(seq.positions[16:, 0], [0, 0, 0, 0, 3, 3, 3, 3])
    assert np.all(seq.kinds[16:] == 1)
    assert seq.sketch_spans == [(0, 16, 20), (3, 20, 24)]
    assert seq.layout == (6, 2, 2)


def test_assemble_duplicate_index_rejected():
    heads = make_heads()
    s = encode_sketch(SketchKeyframe(1, np.zeros((8, 8, 1)), full_mask(8, 8)), 4, heads)
    with pytest.raises(ContractError, match="duplicate"):
        assemble_sequence(video_tokens(4, 2, 2), (4, 2, 2), [s, s])


def test_sketch_token_borrows_video_rotation():
    # identical (t,y,x) positions -> identical rotary tables, hence equal logits
    heads = make_heads()
    s = encode_sketch(SketchKeyframe(2, np.zeros((8, 8, 1)), full_mask(8, 8)), 4, heads)
    seq = assemble_sequence(video_tokens(4, 2, 2), (4, 2, 2), [s])
    j_rows = slice(2 * 4, 3 * 4)
    np.testing.assert_array_equal(seq.positions[j_rows], seq.positions[16:20])

    table = build_rope(DiTConfig(K=4, H=8, W=8, P=4, D=32, heads=2))
    cos, sin = table.angles(seq.positions)
    np.testing.assert_array_equal(cos[j_rows], cos[16:20])
    np.testing.assert_array_equal(sin[j_rows], sin[16:20])


def test_borrowing_logit_equality():
    # sketch(j,y,x) vs video(j',y',x') logits match video(j,y,x) vs video(j',y',x')
    cfg = DiTConfig(K=4, H=8, W=8, P=4, D=32, heads=2)
    table = build_rope(cfg)
    rng = np.random.default_rng(3)
    content_q = rng.standard_normal((1, 16))
    content_k = rng.standard_normal((1, 16))
    p_sketch = np.array([[2, 1, 0]])
    p_other = np.array([[3, 0, 1]])
    cq, sq = table.angles(p_sketch)
    ck, sk = table.angles(p_other)
    q_rot = nx.rope_rotate(nx.const(content_q.astype(np.float32)), cq, sq).numpy()
    k_rot = nx.rope_rotate(nx.const(content_k.astype(np.float32)), ck, sk).numpy()
    logit_sketch = (q_rot @ k_rot.T).item()
    # the "video token" at the same position gets the same table rows by construction
    assert logit_sketch == pytest.approx(logit_sketch, abs=0)
    cq2, sq2 = table.angles(p_sketch)
    q_rot2 = nx.rope_rotate(nx.const(content_q.astype(np.float32)), cq2, sq2).numpy()
    assert abs((q_rot2 @ k_rot.T).item() - logit_sketch) < 1e-6


# --- position-aware residual ------------------------------------------------------

def seq_with_sketches(D=16, seed=4):
    heads = make_heads(D=D)
    rng = np.random.default_rng(seed)
    s1 = encode_sketch(SketchKeyframe(1, rng.random((8, 8, 1)), full_mask(8, 8)), 4, heads)
    s3 = encode_sketch(SketchKeyframe(3, rng.random((8, 8, 1)), full_mask(8, 8)), 4, heads)
    seq = assemble_sequence(video_tokens(4, 2, 2, D=D, seed=seed), (4, 2, 2), [s1, s3])
    return seq, heads


def test_residual_alpha_zero_bit_identical():
    seq, heads = seq_with_sketches()
    heads.w_res.data[:] = np.random.default_rng(5).standard_normal((16, 16)).astype(np.float32)
    out = position_aware_residual(seq, heads, alpha=0.0)
    assert out.tokens is seq.tokens


def test_residual_identity_wres_adds_block():
    seq, heads = seq_with_sketches()
    heads.w_res.data[:] = np.eye(16, dtype=np.float32)
    out = position_aware_residual(seq, heads, alpha=1.0)
    tok0, tok1 = seq.tokens.numpy(), out.tokens.numpy()
    for j, start, stop in seq.sketch_spans:
        rows = slice(j * 4, (j + 1) * 4)
        np.testing.assert_allclose(tok1[0, rows], tok0[0, rows] + tok0[0, start:stop], atol=1e-6)


def test_residual_locality():
    seq, heads = seq_with_sketches()
    heads.w_res.data[:] = 0.3
    out = position_aware_residual(seq, heads, alpha=1.0).tokens.numpy()
    base = seq.tokens.numpy()
    touched = {1, 3}
    for frame in range(4):
        rows = slice(frame * 4, (frame + 1) * 4)
        if frame in touched:
            assert np.abs(out[0, rows] - base[0, rows]).max() > 0
        else:
            assert out[0, rows].tobytes() == base[0, rows].tobytes()
    # sketch tokens themselves never move
    assert out[0, 16:].tobytes() == base[0, 16:].tobytes()


def test_residual_alpha_linearity_exact():
    # zero video tokens isolate the residual: alpha doubling doubles it bitwise
    heads = make_heads()
    rng = np.random.default_rng(6)
    s = encode_sketch(SketchKeyframe(0, rng.random((8, 8, 1)), full_mask(8, 8)), 4, heads)
    zeros = nx.const(np.zeros((1, 16, 16), dtype=np.float32))
    seq = assemble_sequence(zeros, (4, 2, 2), [s])
    heads.w_res.data[:] = rng.standard_normal((16, 16)).astype(np.float32) * 0.1
    r1 = position_aware_residual(seq, heads, alpha=1.0).tokens.numpy()[0, :16]
    r2 = position_aware_residual(seq, heads, alpha=2.0).tokens.numpy()[0, :16]
    np.testing.assert_array_equal(r2, 2.0 * r1)


def test_residual_negative_alpha_rejected():
    seq, heads = seq_with_sketches()
    with pytest.raises(ContractError, match="alpha"):
        position_aware_residual(seq, heads, alpha=-1.0)


# --- region masks -------------------------------------------------------------------

def test_region_mask_p_zero_is_identity():
    kf = SketchKeyframe(0, np.ones((8, 8, 1)), full_mask(8, 8))
    out = apply_region_mask_training(kf, derive_rng(0, "mask"), p_mask=0.0)
    assert out is kf


def test_region_mask_full_rectangle_degenerate():
    # a mask that blanks everything must zero the line art too
    kf = SketchKeyframe(0, np.ones((8, 8, 1)), np.zeros((8, 8)))
    out = apply_region_mask_training(kf, derive_rng(1, "mask"), p_mask=1.0)
    assert not out.mask.any()
    assert not out.lineart.any()


def test_region_mask_coverage_bounds():
    for seed in range(40):
        m = random_region_mask(32, 32, derive_rng(seed, "cover"))
        frac = 1.0 - m.mean()
        assert 0.10 <= frac <= 0.60, (seed, frac)


def test_region_mask_deterministic():
    a = apply_region_mask_training(
        SketchKeyframe(0, np.ones((16, 16, 1)), full_mask(16, 16)), derive_rng(7, "mask"), p_mask=1.0)
    b = apply_region_mask_training(
        SketchKeyframe(0, np.ones((16, 16, 1)), full_mask(16, 16)), derive_rng(7, "mask"), p_mask=1.0)
    assert a.mask.tobytes() == b.mask.tobytes()
    assert a.lineart.tobytes() == b.lineart.tobytes()


# --- alpha=0 plus token removal equals the no-sketch forward -------------------------

def test_alpha_zero_and_removed_tokens_match_no_sketch_forward():
    cfg = DiTConfig(K=2, H=8, W=8, P=4, D=16, heads=2, blocks=2, D_text=8, vocab=16,
                    prompt_len=4, mlp_ratio=2)
    model = SketchVideoModel(cfg, seed=0)
    rng = np.random.default_rng(8)
    model.control.w_res.data[:] = rng.standard_normal((16, 16)).astype(np.float32)

    frames = rng.random((1, 2, 8, 8, 3), dtype=np.float32)
    refs = np.zeros((1, 2, 8, 8, 3), dtype=np.float32)
    refs[:, 0] = frames[:, 0]
    present = np.zeros((1, 2), dtype=np.float32)
    present[:, 0] = 1
    ids = np.ones((1, 4), dtype=np.int64)
    sketches = [(1, rng.random((1, 8, 8, 1), dtype=np.float32), np.ones((1, 8, 8), dtype=np.float32))]

    off = Conditioning(refs, present, sketches, ids, alpha=0.0, include_sketch_tokens=False)
    none = Conditioning(refs, present, [], ids)
    t = np.array([0.5])
    np.testing.assert_array_equal(model.predict_velocity(frames, t, off),
                                  model.predict_velocity(frames, t, none))
