"""Named parameter registry with freeze flags."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from toonflow.errors import ContractError
from toonflow.numerics.tensor import Tensor


@dataclass
class Parameter:
    """One named weight. trainable=False parameters must never receive updates."""

    name: str
    tensor: Tensor
    trainable: bool = True

    def sync_grad_flag(self) -> None:
        self.tensor.requires_grad = self.trainable


@dataclass
class ParamStore:
    """Ordered, uniquely named parameter collection for one model."""

    _params: dict[str, Parameter] = field(default_factory=dict)

    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name: {name}")
        t = Tensor(np.ascontiguousarray(data), requires_grad=trainable)
        self._params[name] = Parameter(name, t, trainable)
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params.keys())

    def trainable(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def set_trainable(self, predicate) -> None:
        """Mark trainable exactly where predicate(name) is true; sync grad flags."""
        for p in self._params.values():
            p.trainable = bool(predicate(p.name))
            p.sync_grad_flag()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.tensor.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.tensor.data for name, p in self._params.items()}

    def load_state(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        for name, p in self._params.items():
            if name not in arrays:
                if strict:
                    raise ContractError(f"missing parameter in state: {name}")
                continue
            src = arrays[name]
            if tuple(src.shape) != p.tensor.data.shape:
                raise ContractError(f"shape mismatch for {name}: {src.shape} vs {p.tensor.data.shape}")
            p.tensor.data = np.ascontiguousarray(src, dtype=p.tensor.data.dtype)
