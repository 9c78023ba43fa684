"""Synthetic line-art extraction in five styles.

The base sketch marks color-region boundaries (4-neighborhood label changes)
on the non-background side; styles then thicken, displace, or drop strokes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from toonflow.rng import derive_rng

STYLE_TAGS = ("thin", "thick", "dilated", "jitter", "dropout")


@dataclass(frozen=True)
class SketchStyle:
    tag: str = "thin"
    stroke_width: int = 1      # extra dilation rounds for thick/dilated
    jitter_sigma: float = 1.0
    dropout_rate: float = 0.35
    seed: int = 0


def style_named(tag: str, seed: int = 0) -> SketchStyle:
    if tag == "thick":
        return SketchStyle(tag, stroke_width=1, seed=seed)
    if tag == "dilated":
        return SketchStyle(tag, stroke_width=2, seed=seed)
    return SketchStyle(tag, seed=seed)


def _labels(frame: np.ndarray) -> np.ndarray:
    q = np.round(np.asarray(frame, dtype=np.float64) * 32.0).astype(np.int64)
    return q[..., 0] * 33 * 33 + q[..., 1] * 33 + q[..., 2]


def _boundary(labels: np.ndarray) -> np.ndarray:
    b = np.zeros(labels.shape, dtype=bool)
    b[:-1] |= labels[:-1] != labels[1:]
    b[1:] |= labels[1:] != labels[:-1]
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return b


def _dilate(mask: np.ndarray, rounds: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(rounds):
        grown = out.copy()
        grown[:-1] |= out[1:]
        grown[1:] |= out[:-1]
        grown[:, :-1] |= out[:, 1:]
        grown[:, 1:] |= out[:, :-1]
        out = grown
    return out


def extract_sketch(frame: np.ndarray, style: SketchStyle) -> np.ndarray:
    """(H,W,3) frame in [0,1] -> (H,W,1) line art in [0,1]."""
    labels = _labels(frame)
    values, counts = np.unique(labels, return_counts=True)
    background = values[np.argmax(counts)]
    strokes = _boundary(labels) & (labels != background)

    if style.tag in ("thick", "dilated"):
        strokes = _dilate(strokes, style.stroke_width)
    elif style.tag == "jitter":
        rng = derive_rng(style.seed, "sketch-jitter")
        ys, xs = np.nonzero(strokes)
        if ys.size:
            dy = np.rint(rng.normal(0, style.jitter_sigma, size=ys.size)).astype(int)
            dx = np.rint(rng.normal(0, style.jitter_sigma, size=xs.size)).astype(int)
            H, W = strokes.shape
            strokes = np.zeros_like(strokes)
            strokes[np.clip(ys + dy, 0, H - 1), np.clip(xs + dx, 0, W - 1)] = True
    elif style.tag == "dropout":
        rng = derive_rng(style.seed, "sketch-dropout")
        keep = rng.random(strokes.shape) >= style.dropout_rate
        strokes = strokes & keep

    return strokes.astype(np.float32)[:, :, None]
