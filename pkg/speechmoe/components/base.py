from abc import ABC, abstractmethod
from typing import Iterator

import numpy as np
from pydantic import BaseModel
from typing_extensions import override

from speechmoe.errors import ShapeError
from speechmoe.logger import get_logger
from speechmoe.tensor import Parameter, RngStream, Tensor, linear

_logger = get_logger()


class Module(ABC):
    """
    Abstract base class for every trainable building block.

    A module owns a pydantic config plus Parameters and child modules stored as attributes
    (directly or in lists). Parameter names follow the attribute path, e.g.
    `experts.2.fc1.weight`, and are what the tensor container stores.
    """

    def __init__(self, config: BaseModel | None = None):
        self.config = config

    @abstractmethod
    def forward(self, *args, **kwargs) -> Tensor:
        """Compute the module output from tensors."""
        raise NotImplementedError("Subclasses must implement this method")

    def __call__(self, *args, **kwargs) -> Tensor:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        """Yield (dotted name, parameter) in attribute definition order, each parameter once."""
        seen: set[int] = set()
        for name, param in self._walk(prefix):
            if id(param) in seen:
                continue
            seen.add(id(param))
            yield name, param

    def _walk(self, prefix: str) -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_") or attr == "config":
                continue
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{path}.{i}", item
                    elif isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        """Shape-walking count of trainable scalars."""
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def name_parameters(self, prefix: str = "") -> "Module":
        """Write the dotted attribute path into each Parameter's `name`."""
        for name, p in self.named_parameters(prefix):
            p.name = name
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> "Module":
        """
        Overwrite parameters from `state`.

        Raises:
            ShapeError: a stored array has the wrong shape (names both shapes)
            KeyError: a parameter is missing from `state` while `strict`
        """
        for name, p in self.named_parameters():
            if name not in state:
                if strict:
                    raise KeyError(name)
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(
                    f"parameter {name!r}: expected shape {p.shape}, found {value.shape}"
                )
            p.assign(value)
        return self


def glorot_uniform(shape: tuple[int, ...], rng: RngStream, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_tensor(shape: tuple[int, ...], rng: RngStream) -> np.ndarray:
    """Glorot-uniform for an n-way weight: fan_in = product of all but the last axis."""
    fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else 1
    return glorot_uniform(shape, rng, fan_in, shape[-1])


class Linear(Module):
    """Affine layer with (in, out) weight and zero-initialized bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: RngStream, bias: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(glorot_uniform((in_dim, out_dim), rng, in_dim, out_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    @override
    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)
