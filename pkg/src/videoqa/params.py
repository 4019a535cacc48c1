"""Named parameter storage with freezing support.

All learnable weights live in one ``ParamStore``, addressable by dotted name
(e.g. ``"text.layer0.head1.wq"``). The first name segment groups parameters
for per-module counting. Insertion order is preserved and is the canonical
order for checkpoint serialization.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), the init used for every map."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._frozen: set[str] = set()

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def add_linear(self, rng: np.random.Generator, name: str, fan_in: int,
                   fan_out: int, bias: bool = True) -> None:
        """Register weight (and optionally bias) for one linear map."""
        self.add(name + ".w", uniform_init(rng, (fan_in, fan_out), fan_in))
        if bias:
            self.add(name + ".b", uniform_init(rng, (fan_out,), fan_in))

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def freeze(self, prefix: str) -> int:
        """Freeze every parameter whose name starts with `prefix`. Returns count."""
        hit = [n for n in self._params if n.startswith(prefix)]
        self._frozen.update(hit)
        return len(hit)

    def unfreeze_all(self) -> None:
        self._frozen.clear()

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    @property
    def frozen_names(self) -> set[str]:
        return set(self._frozen)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Name -> gradient array; parameters untouched by backward get zeros."""
        out = {}
        for name, t in self._params.items():
            out[name] = np.zeros_like(t.data) if t.grad is None else t.grad
        return out

    def count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def count_by_group(self) -> dict[str, int]:
        """Parameter counts keyed by the first dotted-name segment."""
        groups: dict[str, int] = {}
        for name, t in self._params.items():
            group = name.split(".", 1)[0]
            groups[group] = groups.get(group, 0) + t.data.size
        return groups
