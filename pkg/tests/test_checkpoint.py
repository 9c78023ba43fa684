"""Checkpoint container: round trip, header fields, corruption handling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toonflow.errors import CheckpointError
from toonflow.numerics import load_checkpoint, save_checkpoint


def test_round_trip(tmp_path):
    arrays = {
        "block0.w": np.arange(6, dtype=np.float32).reshape(2, 3),
        "block0.b": np.array([1.5], dtype=np.float32),
        "scalar": np.float32(2.0).reshape(()),
    }
    p = tmp_path / "model.tfck"
    save_checkpoint(p, arrays, config_hash="abc123", phase="base", extra={"step": 7})
    ck = load_checkpoint(p)
    assert ck.config_hash == "abc123"
    assert ck.phase == "base"
    assert ck.extra == {"step": 7}
    assert set(ck.arrays) == set(arrays)
    for name in arrays:
        np.testing.assert_array_equal(ck.arrays[name], arrays[name])
        assert ck.arrays[name].dtype == np.float32


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.integers(0, 2**31 - 1))
def test_round_trip_random_shapes(tmp_path_factory, shape, seed):
    rng = np.random.default_rng(seed)
    arr = rng.standard_normal(shape).astype(np.float32)
    p = tmp_path_factory.mktemp("ck") / "x.tfck"
    save_checkpoint(p, {"x": arr}, config_hash="h", phase="adapted")
    np.testing.assert_array_equal(load_checkpoint(p).arrays["x"], arr)


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.tfck")


def test_bad_magic_raises(tmp_path):
    p = tmp_path / "bad.tfck"
    p.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(p)


def test_bad_phase_rejected(tmp_path):
    with pytest.raises(CheckpointError, match="phase"):
        save_checkpoint(tmp_path / "x.tfck", {}, config_hash="h", phase="warmup")


def test_truncated_payload_raises(tmp_path):
    p = tmp_path / "t.tfck"
    save_checkpoint(p, {"x": np.ones(8, dtype=np.float32)}, config_hash="h", phase="base")
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(p)
