"""Image and mask serialization: PNG, base64, run-length masks, GIF previews."""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image

from toonflow.errors import ContractError


def frame_to_png_bytes(frame: np.ndarray) -> bytes:
    """Float array in [0,1] -> PNG bytes. (H,W,3) becomes RGB, (H,W[,1]) grayscale."""
    arr = np.asarray(frame)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[:, :, 0]
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(data, mode="RGB" if data.ndim == 3 else "L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_frame(blob: bytes, channels: int) -> np.ndarray:
    """PNG bytes -> float array in [0,1] with 1 or 3 channels."""
    img = Image.open(io.BytesIO(blob))
    img = img.convert("RGB" if channels == 3 else "L")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if channels == 1:
        arr = arr[:, :, None]
    return arr


def frame_to_b64(frame: np.ndarray) -> str:
    return base64.b64encode(frame_to_png_bytes(frame)).decode("ascii")


def b64_to_frame(text: str, channels: int) -> np.ndarray:
    try:
        blob = base64.b64decode(text, validate=True)
    except Exception as e:
        raise ContractError(f"invalid base64 image payload: {e}") from e
    return png_bytes_to_frame(blob, channels)


def mask_to_rle(mask: np.ndarray) -> str:
    """Binary (H,W) -> 'W,H:run,run,...', runs alternating 0/1 starting with 0."""
    H, W = mask.shape
    flat = (np.asarray(mask) > 0.5).astype(np.uint8).ravel()
    runs = []
    current, count = 0, 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current, count = v, 1
    runs.append(count)
    return f"{W},{H}:" + ",".join(str(r) for r in runs)


def rle_to_mask(text: str) -> np.ndarray:
    try:
        dims, runs_text = text.split(":", 1)
        w_s, h_s = dims.split(",")
        W, H = int(w_s), int(h_s)
        runs = [int(r) for r in runs_text.split(",")] if runs_text else []
    except ValueError as e:
        raise ContractError(f"malformed mask RLE: {e}") from e
    if any(r < 0 for r in runs) or sum(runs) != W * H:
        raise ContractError(f"mask RLE runs sum to {sum(runs)}, expected {W * H}")
    flat = np.zeros(W * H, dtype=np.float32)
    pos, value = 0, 0
    for r in runs:
        if value:
            flat[pos:pos + r] = 1.0
        pos += r
        value ^= 1
    return flat.reshape(H, W)


def save_clip_pngs(frames: np.ndarray, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, frame in enumerate(frames):
        p = out_dir / f"frame_{k:03d}.png"
        p.write_bytes(frame_to_png_bytes(frame))
        paths.append(p)
    return paths


def save_gif(frames: np.ndarray, path: str | Path, fps: float = 8.0) -> None:
    imgs = [Image.fromarray(np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8)) for f in frames]
    imgs[0].save(path, save_all=True, append_images=imgs[1:], duration=int(1000 / fps), loop=0)
