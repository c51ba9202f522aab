"""Named parameters and the small neural building blocks used by the model.

Weights are initialized uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from a
seeded generator; biases start at zero.  Construction order is fixed by the
model-building code, so a given seed always produces bitwise-identical values.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor


class Parameter:
    """A named leaf tensor. Names are dotted paths, unique within a model."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, values: np.ndarray):
        self.name = name
        self.tensor = Tensor(values)

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class ParamRegistry:
    """Creates and tracks every parameter of a model, keyed by unique name."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.params: dict[str, Parameter] = {}

    def _register(self, name: str, values: np.ndarray) -> Parameter:
        if name in self.params:
            raise ContractError(f"duplicate parameter name: {name}")
        p = Parameter(name, values)
        self.params[name] = p
        return p

    def weight(self, name: str, fan_in: int, fan_out: int) -> Parameter:
        bound = 1.0 / np.sqrt(fan_in)
        return self._register(name, self._rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def bias(self, name: str, size: int) -> Parameter:
        return self._register(name, np.zeros(size))

    def all(self) -> list[Parameter]:
        return list(self.params.values())

    def named_values(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(values)
        if missing:
            raise ContractError(f"missing values for parameters: {sorted(missing)[:3]}...")
        for name, p in self.params.items():
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ContractError(
                    f"shape mismatch loading {name}: {arr.shape} vs {p.values.shape}"
                )
            p.tensor.values = arr.copy()
            p.tensor.grad = None

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.tensor.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.tensor.grad is not None:
                total += float((p.tensor.grad**2).sum())
        return float(np.sqrt(total))

    def value_norm(self) -> float:
        return float(np.sqrt(np.sum([float((p.values**2).sum()) for p in self.params.values()])))


class Linear:
    def __init__(self, reg: ParamRegistry, prefix: str, d_in: int, d_out: int, bias: bool = True):
        self.w = reg.weight(f"{prefix}.w", d_in, d_out)
        self.b = reg.bias(f"{prefix}.b", d_out) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if self.b is None:
            return ad.matmul(x, self.w.tensor)
        return ad.affine(x, self.w.tensor, self.b.tensor)


class MLP2:
    """Two-layer perceptron: linear, ReLU, linear (final layer stays linear)."""

    def __init__(self, reg: ParamRegistry, prefix: str, d_in: int, d_hidden: int, d_out: int):
        self.l1 = Linear(reg, f"{prefix}.l1", d_in, d_hidden)
        self.l2 = Linear(reg, f"{prefix}.l2", d_hidden, d_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.l2(ad.relu(self.l1(x)))


class GRUCell:
    """Gated recurrent unit over row-wise states.

    Gates read concat(state, input); the update gate z blends candidate and
    previous state as h' = (1 - z) * h + z * tanh-candidate.  A negative
    ``update_bias`` starts z small, so fresh states initially stay close to
    the previous state and updates phase in as training opens the gate.
    """

    def __init__(self, reg: ParamRegistry, prefix: str, d_state: int, d_input: int,
                 update_bias: float = 0.0):
        d_cat = d_state + d_input
        self.wz = reg.weight(f"{prefix}.wz", d_cat, d_state)
        self.bz = reg.bias(f"{prefix}.bz", d_state)
        if update_bias:
            self.bz.tensor.values += update_bias
        self.wr = reg.weight(f"{prefix}.wr", d_cat, d_state)
        self.br = reg.bias(f"{prefix}.br", d_state)
        self.wh = reg.weight(f"{prefix}.wh", d_cat, d_state)
        self.bh = reg.bias(f"{prefix}.bh", d_state)

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        hx = ad.concat([h, x], axis=1)
        z = ad.sigmoid(ad.affine(hx, self.wz.tensor, self.bz.tensor))
        r = ad.sigmoid(ad.affine(hx, self.wr.tensor, self.br.tensor))
        rhx = ad.concat([ad.mul(r, h), x], axis=1)
        cand = ad.tanh(ad.affine(rhx, self.wh.tensor, self.bh.tensor))
        return ad.add(ad.mul(ad.sub(1.0, z), h), ad.mul(z, cand))

    def param_names(self) -> list[str]:
        return [p.name for p in (self.wz, self.bz, self.wr, self.br, self.wh, self.bh)]


class GateUnit:
    """Small scalar-gate network: linear, ReLU, linear, sigmoid; one gate per row."""

    def __init__(self, reg: ParamRegistry, prefix: str, d_in: int, d_hidden: int):
        self.l1 = Linear(reg, f"{prefix}.l1", d_in, d_hidden)
        self.l2 = Linear(reg, f"{prefix}.l2", d_hidden, 1)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.sigmoid(self.l2(ad.relu(self.l1(x))))
