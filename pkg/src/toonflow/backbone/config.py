"""Model configuration: sizes, patching, rotary axis allocation, config files."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from toonflow.errors import ConfigError


def split_head_axes(head_dim: int) -> tuple[int, int, int]:
    """Allocate a head's subdimensions to the (t, y, x) rotary axes.

    Temporal gets the even half (longest range at toy scale), the spatial axes
    split the remainder evenly. All three allocations must be even and >= 2.
    """
    t = (head_dim // 2) // 2 * 2
    rest = head_dim - t
    y = (rest // 2) // 2 * 2
    x = rest - y
    if min(t, y, x) < 2 or x % 2 != 0:
        raise ConfigError(f"head dim {head_dim} cannot be split into three even rotary axes")
    return t, y, x


@dataclass(frozen=True)
class DiTConfig:
    """Shape of the miniature image-to-video diffusion transformer."""

    K: int = 8            # frames
    H: int = 32
    W: int = 32
    P: int = 4            # patch size
    D: int = 64           # model width
    heads: int = 4
    blocks: int = 4
    D_text: int = 32      # prompt embedding width
    rope_base: float = 10000.0
    vocab: int = 64       # closed caption vocabulary
    prompt_len: int = 8
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.H % self.P != 0 or self.W % self.P != 0:
            raise ConfigError(f"H={self.H}, W={self.W} must be divisible by patch size P={self.P}")
        if self.D % self.heads != 0:
            raise ConfigError(f"D={self.D} must be divisible by heads={self.heads}")
        split_head_axes(self.head_dim)

    @property
    def head_dim(self) -> int:
        return self.D // self.heads

    @property
    def grid_h(self) -> int:
        return self.H // self.P

    @property
    def grid_w(self) -> int:
        return self.W // self.P

    @property
    def tokens_per_frame(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def video_tokens(self) -> int:
        return self.K * self.tokens_per_frame

    @property
    def patch_dim(self) -> int:
        return self.P * self.P * 3

    @property
    def axis_alloc(self) -> tuple[int, int, int]:
        return split_head_axes(self.head_dim)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def save_config(config: DiTConfig, path: str | Path) -> None:
    """Write as `key = value` lines, one per field."""
    lines = [f"{k} = {v}" for k, v in asdict(config).items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path: str | Path) -> DiTConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in DiTConfig.__dataclass_fields__:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        typ = DiTConfig.__dataclass_fields__[key].type
        values[key] = float(raw) if "float" in str(typ) else int(raw)
    return DiTConfig(**values)
