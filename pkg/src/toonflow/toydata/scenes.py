"""Procedural animation scenes: moving primitive shapes over simple backgrounds.

Everything is a pure function of the spec, which is itself a pure function of
(domain seed, sample index), so clips regenerate on demand instead of being
stored. Cartoon mode renders flat fills with a dark outline; natural mode
renders smooth radial shading with no outline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from toonflow.errors import ContractError
from toonflow.rng import derive_rng
from toonflow.toydata.captions import scene_caption

SHAPE_KINDS = ("square", "circle", "triangle")
TRAJECTORY_KINDS = ("linear", "parabolic", "turn")
BACKGROUND_KINDS = ("gradient", "flat", "two-tone")

COLOR_VALUES = {
    "red": (0.85, 0.13, 0.13),
    "green": (0.15, 0.72, 0.22),
    "blue": (0.16, 0.33, 0.85),
    "yellow": (0.88, 0.82, 0.14),
    "magenta": (0.80, 0.16, 0.74),
    "cyan": (0.15, 0.75, 0.78),
}
OUTLINE_VALUE = 0.08


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    color: str
    size: float                      # half extent in pixels
    start: tuple[float, float]       # (y, x) at frame 0
    trajectory: str
    velocity: tuple[float, float]    # (vy, vx) px/frame, first leg
    velocity2: tuple[float, float] = (0.0, 0.0)   # second leg (turn) or accel (parabolic)


@dataclass(frozen=True)
class SceneSpec:
    background: str
    bg_colors: tuple
    shapes: tuple
    seed: int
    index: int


def shape_position(shape: ShapeSpec, k: int, K: int) -> tuple[float, float]:
    """Analytic (y, x) center of a shape at frame k."""
    y0, x0 = shape.start
    vy, vx = shape.velocity
    if shape.trajectory == "linear":
        return y0 + vy * k, x0 + vx * k
    if shape.trajectory == "parabolic":
        ay, ax = shape.velocity2
        return y0 + vy * k + 0.5 * ay * k * k, x0 + vx * k + 0.5 * ax * k * k
    if shape.trajectory == "turn":
        mid = K // 2
        k1 = min(k, mid)
        k2 = max(0, k - mid)
        wy, wx = shape.velocity2
        return y0 + vy * k1 + wy * k2, x0 + vx * k1 + wx * k2
    raise ContractError(f"unknown trajectory {shape.trajectory!r}")


def turn_frame(K: int) -> int:
    return K // 2


def _check_bounds(shape: ShapeSpec, K: int, H: int, W: int) -> bool:
    m = shape.size
    for k in range(K):
        y, x = shape_position(shape, k, K)
        if not (m <= y <= H - 1 - m and m <= x <= W - 1 - m):
            return False
    return True


def _sample_shape(rng: np.random.Generator, kind: str, trajectory: str, color: str,
                  K: int, H: int, W: int) -> ShapeSpec:
    """Rejection-sample start/velocity until the whole path stays in frame."""
    side = min(H, W)
    for _ in range(256):
        size = float(rng.uniform(max(1.2, 0.07 * side), max(1.8, 0.11 * side)))
        m = size + 1.0
        p0 = (float(rng.uniform(m, H - 1 - m)), float(rng.uniform(m, W - 1 - m)))
        p_end = (float(rng.uniform(m, H - 1 - m)), float(rng.uniform(m, W - 1 - m)))
        if trajectory == "linear":
            v = ((p_end[0] - p0[0]) / (K - 1), (p_end[1] - p0[1]) / (K - 1))
            cand = ShapeSpec(kind, color, size, p0, trajectory, v)
        elif trajectory == "turn":
            mid = turn_frame(K)
            p_mid = (float(rng.uniform(m, H - 1 - m)), float(rng.uniform(m, W - 1 - m)))
            v1 = ((p_mid[0] - p0[0]) / mid, (p_mid[1] - p0[1]) / mid)
            v2 = ((p_end[0] - p_mid[0]) / (K - 1 - mid), (p_end[1] - p_mid[1]) / (K - 1 - mid))
            cand = ShapeSpec(kind, color, size, p0, trajectory, v1, v2)
        else:  # parabolic: fit a quadratic through start, a control point, and end
            p_mid = (float(rng.uniform(m, H - 1 - m)), float(rng.uniform(m, W - 1 - m)))
            km = (K - 1) / 2.0
            acc, vel = [], []
            for axis in range(2):
                a = 2 * (p_end[axis] - 2 * p_mid[axis] + p0[axis]) / ((K - 1) * (K - 1) / 2.0)
                v0 = (p_mid[axis] - p0[axis]) / km - 0.5 * a * km
                acc.append(a)
                vel.append(v0)
            cand = ShapeSpec(kind, color, size, p0, trajectory, (vel[0], vel[1]), (acc[0], acc[1]))
        # require visible motion so sketches carry real information
        box = max(0.5, side - 1 - 2 * m)
        need = min(0.15 * side, 0.5 * box)
        total = np.hypot(*(np.subtract(shape_position(cand, K - 1, K), p0)))
        if total >= need and _check_bounds(cand, K, H, W):
            return cand
    raise ContractError(f"could not place a {kind} with in-bounds {trajectory} motion")


def make_scene(domain_seed: int, index: int, K: int, H: int, W: int,
               n_shapes: int | None = None) -> SceneSpec:
    """Deterministic scene: kinds round-robin over the index, details from rng.

    The round robin guarantees every shape kind, trajectory kind, and
    background kind appears within any window of 27 consecutive indices.
    """
    rng = derive_rng(domain_seed, "scene", index)
    shape_kind = SHAPE_KINDS[index % 3]
    trajectory = TRAJECTORY_KINDS[(index // 3) % 3]
    if trajectory == "turn" and K - 1 - turn_frame(K) < 1:
        trajectory = "linear"  # a turn needs at least one frame after the midpoint
    background = BACKGROUND_KINDS[(index // 9) % 3]
    if n_shapes is None:
        n_shapes = 1 + (index // 27) % 3
    color_names = list(COLOR_VALUES)
    picked = [color_names[i] for i in rng.choice(len(color_names), size=n_shapes, replace=False)]
    shapes = [_sample_shape(rng, shape_kind, trajectory, picked[0], K, H, W)]
    for extra in range(1, n_shapes):
        kind = SHAPE_KINDS[int(rng.integers(0, 3))]
        shapes.append(_sample_shape(rng, kind, "linear", picked[extra], K, H, W))
    g = rng.uniform(0.25, 0.75, size=4)
    return SceneSpec(background, (float(g[0]), float(g[1]), float(g[2]), float(g[3])),
                     tuple(shapes), domain_seed, index)


def caption_of(spec: SceneSpec) -> str:
    s = spec.shapes[0]
    legs = [s.velocity]
    if s.trajectory == "turn":
        legs.append(s.velocity2)
    elif s.trajectory == "parabolic":
        ay, ax = s.velocity2
        K_proxy = 8
        legs.append((s.velocity[0] + ay * K_proxy, s.velocity[1] + ax * K_proxy))
    return scene_caption(s.color, s.kind, legs)


def _shape_mask(shape: ShapeSpec, cy: float, cx: float, H: int, W: int) -> np.ndarray:
    yy, xx = np.mgrid[0:H, 0:W]
    dy, dx = yy - cy, xx - cx
    s = shape.size
    if shape.kind == "square":
        return (np.abs(dy) <= s) & (np.abs(dx) <= s)
    if shape.kind == "circle":
        return dy * dy + dx * dx <= s * s
    # triangle, apex up: width grows linearly from apex to base
    return (np.abs(dy) <= s) & (np.abs(dx) <= (dy + s) / 2.0)


def _background(spec: SceneSpec, H: int, W: int, mode: str) -> np.ndarray:
    a, b, c, d = spec.bg_colors
    yy = np.linspace(0.0, 1.0, H)[:, None, None]
    if spec.background == "flat":
        base = np.full((H, W, 3), 0.0) + np.array([a, b, c])
    elif spec.background == "gradient":
        top = np.array([a, b, c])
        bottom = np.array([b, c, d])
        base = top * (1 - yy) + bottom * yy
    else:  # two-tone split
        base = np.where(yy < 0.5, np.full((H, W, 3), a), np.full((H, W, 3), d))
        base = base * np.array([1.0, 0.95, 0.9])
    if mode == "natural":
        # strong directional light plus vignette: clearly not flat-filled
        xx = np.linspace(0.0, 1.0, W)[None, :, None]
        light = 0.55 + 0.6 * xx * (1 - yy)
        r2 = (np.linspace(-1, 1, H)[:, None, None]) ** 2 + (np.linspace(-1, 1, W)[None, :, None]) ** 2
        base = base * light * (1.0 - 0.25 * r2)
    return np.ascontiguousarray(np.broadcast_to(np.clip(base, 0.0, 1.0), (H, W, 3)))


def render_clip(spec: SceneSpec, K: int, H: int, W: int, mode: str = "cartoon") -> np.ndarray:
    """Rasterize all K frames; raises if any shape leaves the frame."""
    if mode not in ("cartoon", "natural"):
        raise ContractError(f"render mode must be cartoon or natural, got {mode!r}")
    for sh in spec.shapes:
        if not _check_bounds(sh, K, H, W):
            raise ContractError(f"trajectory leaves the frame for shape {sh.kind} in scene {spec.index}")
    frames = np.empty((K, H, W, 3), dtype=np.float32)
    bg = _background(spec, H, W, mode)
    yy, xx = np.mgrid[0:H, 0:W]
    for k in range(K):
        img = bg.copy()
        for sh in spec.shapes:
            cy, cx = shape_position(sh, k, K)
            mask = _shape_mask(sh, cy, cx, H, W)
            color = np.array(COLOR_VALUES[sh.color])
            if mode == "cartoon":
                img[mask] = color
                interior = mask & _shape_mask(
                    ShapeSpec(sh.kind, sh.color, sh.size - 1.2, sh.start, sh.trajectory,
                              sh.velocity, sh.velocity2), cy, cx, H, W)
                img[mask & ~interior] = OUTLINE_VALUE
            else:
                r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / max(sh.size, 1e-6)
                shade = np.clip(1.15 - 0.85 * r, 0.15, 1.0)[:, :, None]
                img = np.where(mask[:, :, None], color * shade, img)
        frames[k] = np.clip(img, 0.0, 1.0)
    return frames
