"""Versioned binary checkpoint container.

Layout: magic ``TFCK`` | u32 version | u32 header length | UTF-8 JSON header |
concatenated little-endian float32 payloads. The header carries the config
hash, a phase tag ("base" or "adapted"), per-entry name/shape/offset, and an
optional free-form ``extra`` dict (step counters, rng provenance).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from toonflow.errors import CheckpointError

MAGIC = b"TFCK"
VERSION = 1


@dataclass
class Checkpoint:
    config_hash: str
    phase: str
    arrays: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], config_hash: str,
                    phase: str, extra: dict | None = None) -> None:
    if phase not in ("base", "adapted"):
        raise CheckpointError(f"phase must be 'base' or 'adapted', got {phase!r}")
    entries = []
    offset = 0
    payloads = []
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(data.tobytes())
        offset += data.size * 4
    header = {
        "config_hash": config_hash,
        "phase": phase,
        "entries": entries,
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for p in payloads:
            f.write(p)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic in {path}")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    body = raw[12 + hlen:]
    arrays: dict[str, np.ndarray] = {}
    for e in header["entries"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = e["offset"]
        if start + count * 4 > len(body):
            raise CheckpointError(f"truncated payload for {e['name']} in {path}")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=start)
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return Checkpoint(header["config_hash"], header["phase"], arrays, header.get("extra", {}))
