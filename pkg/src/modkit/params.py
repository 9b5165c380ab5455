"""Named parameter collections: registration, freezing, hashing, checkpoints."""

from __future__ import annotations

import hashlib

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered name -> Tensor registry for one trainable component."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def count(self) -> int:
        return sum(t.size for t in self._params.values())

    def set_trainable(self, flag: bool) -> None:
        for t in self._params.values():
            t.requires_grad = flag
            if not flag:
                t.grad = None

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads_all_none(self) -> bool:
        return all(t.grad is None for t in self._params.values())

    # ---- serialization ------------------------------------------------------

    def state_arrays(self, prefix: str = "") -> dict:
        return {prefix + name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, sections: dict, prefix: str = "") -> None:
        for name, t in self._params.items():
            arr = sections.get(prefix + name)
            if arr is None:
                raise KeyError(f"checkpoint missing parameter {prefix + name!r}")
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"{prefix + name}: checkpoint shape {arr.shape} != {t.data.shape}"
                )
            t.data = np.asarray(arr, dtype=np.float64).copy()

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, t in self._params.items():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()
