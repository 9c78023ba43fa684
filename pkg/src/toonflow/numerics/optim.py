"""AdamW with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from toonflow.errors import ContractError
from toonflow.numerics.params import Parameter


class AdamW:
    """Standard AdamW over a fixed parameter list.

    Frozen parameters are skipped entirely: their buffers stay bit-identical
    even if a gradient was (spuriously) attached to them.
    """

    def __init__(self, params: list[Parameter], lr: float, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.tensor.data) for p in self.params if p.trainable}
        self._v = {p.name: np.zeros_like(p.tensor.data) for p in self.params if p.trainable}

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            if not p.trainable:
                continue
            g = p.tensor.grad
            if g is None:
                raise ContractError(f"missing gradient for trainable parameter {p.name}")
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.tensor.data
            p.tensor.data -= (self.lr * update).astype(p.tensor.data.dtype, copy=False)

    # Moment buffers + step count, keyed for the checkpoint container.
    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name in self._m:
            out[f"optim.m.{name}"] = self._m[name]
            out[f"optim.v.{name}"] = self._v[name]
        return out

    def load_state(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for name in self._m:
            mk, vk = f"optim.m.{name}", f"optim.v.{name}"
            if mk not in arrays or vk not in arrays:
                raise ContractError(f"optimizer state missing for {name}")
            self._m[name] = np.ascontiguousarray(arrays[mk], dtype=self._m[name].dtype)
            self._v[name] = np.ascontiguousarray(arrays[vk], dtype=self._v[name].dtype)
        self.step_count = step_count
