"""Closed caption vocabulary and the deterministic scene caption template."""

from __future__ import annotations

import numpy as np

from toonflow.errors import ContractError

PAD = "<pad>"
WORDS = [
    PAD,
    "red", "green", "blue", "yellow", "magenta", "cyan",
    "square", "circle", "triangle",
    "moves", "then",
    "right", "left", "up", "down",
]
WORD_TO_ID = {w: i for i, w in enumerate(WORDS)}
VOCAB_SIZE = len(WORDS)


def tokenize(caption: str, length: int) -> np.ndarray:
    words = caption.split()
    if len(words) > length:
        raise ContractError(f"caption longer than prompt length {length}: {caption!r}")
    ids = [WORD_TO_ID[w] for w in words]
    ids += [WORD_TO_ID[PAD]] * (length - len(ids))
    return np.array(ids, dtype=np.int64)


def detokenize(ids) -> str:
    return " ".join(WORDS[int(i)] for i in ids if int(i) != WORD_TO_ID[PAD])


def direction_word(vy: float, vx: float) -> str:
    if abs(vx) >= abs(vy):
        return "right" if vx >= 0 else "left"
    return "down" if vy >= 0 else "up"


def scene_caption(color: str, shape: str, legs: list[tuple[float, float]]) -> str:
    """'<color> <shape> moves <dir> [then <dir>]' from per-leg (vy, vx) velocities."""
    dirs = [direction_word(vy, vx) for vy, vx in legs]
    out = [color, shape, "moves", dirs[0]]
    if len(dirs) > 1 and dirs[1] != dirs[0]:
        out += ["then", dirs[1]]
    return " ".join(out)
