"""Harness: metrics oracles, phase contracts, freeze safety, resume, ablation."""

import json

import numpy as np
import pytest

from toonflow.backbone.config import DiTConfig
from toonflow.errors import ConfigError, ContractError, DimensionError
from toonflow.harness.ablate import format_table, run_ablation, write_report
from toonflow.harness.metrics import (
    MetricsReport,
    evaluate,
    frame_psnr,
    masked_region_psnr,
    psnr,
    shape_centroid,
    temporal_consistency,
)
from toonflow.harness.train import (
    TrainConfig,
    adapt_cartoon,
    build_batch,
    data_order_hash,
    load_model,
    pretrain_base,
    validation_loss,
)
from toonflow.model import SketchVideoModel
from toonflow.slra import AdapterVariantConfig
from toonflow.toydata.dataset import build_benchmark

TINY = DiTConfig(K=4, H=16, W=16, P=4, D=32, heads=2, blocks=2, D_text=16, vocab=16,
                 prompt_len=8, mlp_ratio=2)


def tiny_cfg(out, **over):
    base = dict(phase="base", dit=TINY, steps=8, batch_size=2, lr=1e-3, seed=0,
                data_size=60, out_dir=str(out))
    base.update(over)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def base_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("base")
    cfg = tiny_cfg(out, steps=12)
    return cfg, pretrain_base(cfg)


# --- psnr ------------------------------------------------------------------------

def test_psnr_identical_hits_sentinel():
    clip = np.random.default_rng(0).random((3, 8, 8, 3))
    assert psnr(clip, clip) == 99.0


def test_psnr_uniform_offset_closed_form():
    a = np.zeros((2, 8, 8, 3))
    assert psnr(a + 0.1, a) == pytest.approx(20.0, abs=1e-9)


def test_psnr_matches_brute_force_mse():
    rng = np.random.default_rng(1)
    a, b = rng.random((4, 8, 8, 3)), rng.random((4, 8, 8, 3))
    expected = np.mean([10 * np.log10(1.0 / np.mean((x - y) ** 2)) for x, y in zip(a, b)])
    assert psnr(a, b) == pytest.approx(expected, abs=1e-9)


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError, match="psnr"):
        psnr(np.zeros((2, 8, 8, 3)), np.zeros((2, 8, 4, 3)))


def test_masked_region_psnr_scope():
    gen = np.zeros((8, 8, 3))
    gt = np.zeros((8, 8, 3))
    gt[:4] = 0.1  # error only inside the hole
    region = np.ones((8, 8))
    region[:4] = 0  # hole on top half
    assert masked_region_psnr(gen, gt, region) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(DimensionError):
        masked_region_psnr(gen, gt, np.ones((8, 8)))


def test_temporal_consistency_zero_for_identical():
    clip = np.random.default_rng(2).random((4, 8, 8, 3))
    assert temporal_consistency(clip, clip) == 0.0


# --- evaluate with metric oracles ---------------------------------------------------

@pytest.fixture(scope="module")
def bench6():
    return build_benchmark(6, seed=7777, train_seeds={0}, config=TINY)


def test_evaluate_ground_truth_oracle(bench6):
    model = SketchVideoModel(TINY, seed=0)
    report, rows = evaluate(model, bench6, generate_fn=lambda b, s: b.sample.frames)
    assert report.psnr_db == 99.0
    assert report.ref_psnr_db == 99.0
    assert report.temporal_consistency == 0.0
    assert report.centroid_err_px == 0.0  # ground truth is exactly the target
    assert report.n_samples == 6


def test_evaluate_all_gray_closed_form(bench6):
    model = SketchVideoModel(TINY, seed=0)
    gray = 0.5
    report, rows = evaluate(model, bench6, generate_fn=lambda b, s: np.full_like(b.sample.frames, gray))
    expected = np.mean([
        np.mean([10 * np.log10(1.0 / np.mean((gray - f) ** 2)) for f in b.sample.frames])
        for b in bench6
    ])
    assert report.psnr_db == pytest.approx(float(expected), abs=1e-6)


def test_evaluate_deterministic(bench6):
    model = SketchVideoModel(TINY, seed=0)
    seeds = []
    evaluate(model, bench6, generate_fn=lambda b, s: seeds.append(s) or b.sample.frames)
    first = list(seeds)
    seeds.clear()
    evaluate(model, bench6, generate_fn=lambda b, s: seeds.append(s) or b.sample.frames)
    assert seeds == first


def test_shape_centroid_tracks_palette_color():
    from toonflow.toydata.scenes import COLOR_VALUES
    frame = np.full((16, 16, 3), 0.3)
    frame[4:7, 8:11] = COLOR_VALUES["blue"]
    cy, cx = shape_centroid(frame, "blue")
    assert (cy, cx) == (5.0, 9.0)


def test_metrics_report_requires_finite():
    with pytest.raises(DimensionError, match="finite"):
        MetricsReport(float("nan"), 0, 0, 0, 1)


# --- training phases -----------------------------------------------------------------

def test_pretrain_refuses_adapters(tmp_path):
    from toonflow.slra import attach_adapters
    model = SketchVideoModel(TINY, seed=0)
    attach_adapters(model.dit, AdapterVariantConfig("slra", 8), np.random.default_rng(0))
    with pytest.raises(ContractError, match="refuses"):
        pretrain_base(tiny_cfg(tmp_path), model=model)


def test_adapt_requires_base_checkpoint():
    with pytest.raises(ConfigError, match="base checkpoint"):
        TrainConfig(phase="adapt", dit=TINY, adapter=AdapterVariantConfig("slra", 8))


def test_phase_name_validated():
    with pytest.raises(ConfigError, match="phase"):
        TrainConfig(phase="warmup", dit=TINY)


def test_base_training_writes_trace_and_checkpoint(base_run):
    cfg, result = base_run
    assert result.checkpoint.exists()
    trace = [json.loads(l) for l in (result.checkpoint.parent / "trace-base.jsonl").read_text().splitlines()]
    assert [r["step"] for r in trace] == list(range(cfg.steps))
    assert all(np.isfinite(r["loss"]) for r in trace)


def test_resume_reproduces_unbroken_trace(tmp_path):
    cfg_a = tiny_cfg(tmp_path / "unbroken", steps=10)
    full = pretrain_base(cfg_a)

    cfg_b = tiny_cfg(tmp_path / "resumed", steps=10)
    pretrain_base(cfg_b, stop_after=4)
    resumed = pretrain_base(cfg_b)
    trace = [json.loads(l) for l in (tmp_path / "resumed" / "trace-base.jsonl").read_text().splitlines()]
    assert [r["step"] for r in trace] == list(range(10))
    np.testing.assert_array_equal(np.array([r["loss"] for r in trace], dtype=np.float64),
                                  np.array(full.losses, dtype=np.float64))
    assert resumed.losses == full.losses[4:]


def test_adapt_freezes_base_bitwise(base_run, tmp_path):
    cfg, base = base_run
    model_before = load_model(base.checkpoint)
    hashes_before = model_before.param_hashes("backbone.")
    acfg = tiny_cfg(tmp_path, phase="adapt", steps=6, base_checkpoint=str(base.checkpoint),
                    adapter=AdapterVariantConfig("slra", 8))
    result = adapt_cartoon(acfg)
    composed = load_model(base.checkpoint, result.checkpoint)
    assert composed.param_hashes("backbone.") == hashes_before
    trainable = {p.name for p in composed.store.trainable()}
    assert trainable == {n for n in composed.store.names() if n.startswith(("adapter.", "control."))}


def test_adapter_checkpoint_contains_only_trainables(base_run, tmp_path):
    from toonflow.numerics import load_checkpoint
    cfg, base = base_run
    acfg = tiny_cfg(tmp_path, phase="adapt", steps=3, base_checkpoint=str(base.checkpoint),
                    adapter=AdapterVariantConfig("lora", 2))
    result = adapt_cartoon(acfg)
    ck = load_checkpoint(result.checkpoint)
    assert ck.phase == "adapted"
    model_keys = [k for k in ck.arrays if not k.startswith("optim.")]
    assert all(k.startswith(("adapter.", "control.")) for k in model_keys)
    assert any(".lora." in k for k in model_keys)


def test_validation_loss_runs_and_is_deterministic(base_run):
    cfg, base = base_run
    model = load_model(base.checkpoint)
    a = validation_loss(model, cfg, "cartoon", with_sketches=False, batches=2)
    b = validation_loss(model, cfg, "cartoon", with_sketches=False, batches=2)
    assert a == b and np.isfinite(a)


def test_build_batch_shares_sketch_indices_across_elements(base_run):
    cfg, _ = base_run
    clips, cond = build_batch(cfg, step=3, mode="cartoon", with_sketches=True)
    assert clips.shape == (cfg.batch_size, TINY.K, TINY.H, TINY.W, 3)
    assert len(cond.sketches) >= 1
    for j, lineart, mask in cond.sketches:
        assert 1 <= j < TINY.K  # never the reference frame
        assert lineart.shape == (cfg.batch_size, TINY.H, TINY.W, 1)
        assert mask.shape == (cfg.batch_size, TINY.H, TINY.W)


def test_base_500step_loss_halves(tmp_path):
    # optimization-run oracle on the 2-block toy config
    cfg = tiny_cfg(tmp_path, steps=500, batch_size=4, lr=2e-3, data_size=400)
    result = pretrain_base(cfg)
    early = float(np.mean(result.losses[5:15]))
    late = float(np.mean(result.losses[-20:]))
    assert late < 0.5 * early, (early, late)


# --- ablation protocol ----------------------------------------------------------------

def test_ablation_protocol_identity(base_run, tmp_path):
    cfg, base = base_run
    acfg = tiny_cfg(tmp_path, phase="adapt", steps=4, base_checkpoint=str(base.checkpoint),
                    adapter=AdapterVariantConfig("slra", 8))
    rows, schedule = run_ablation(acfg, base.checkpoint, slra_rank=8)
    assert [r["variant"] for r in rows] == ["slra", "temporal", "spatiotemporal", "linear", "lora"]
    for r in rows:
        assert r["schedule"] == schedule.__dict__
        assert np.isfinite(r["val_loss"])
    lora = next(r for r in rows if r["variant"] == "lora")
    slra = next(r for r in rows if r["variant"] == "slra")
    assert lora["params"] <= slra["params"]
    out = write_report(rows, schedule, tmp_path / "report")
    assert out.exists()
    table = format_table(rows)
    assert "slra" in table and "lora" in table


def test_data_order_hash_depends_on_seed(base_run):
    cfg, _ = base_run
    other = tiny_cfg(cfg.out_dir, seed=1, steps=cfg.steps)
    assert data_order_hash(cfg) != data_order_hash(other)
    assert data_order_hash(cfg) == data_order_hash(cfg)
