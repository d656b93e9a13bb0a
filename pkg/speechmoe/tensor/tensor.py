from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from speechmoe.errors import ShapeError
from speechmoe.logger import get_logger

_logger = get_logger()

# grad_fn maps the output gradient to one gradient (or None) per parent
GradFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_TAPE_ENABLED = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable taping inside the block (evaluation passes)."""
    global _TAPE_ENABLED
    previous = _TAPE_ENABLED
    _TAPE_ENABLED = False
    try:
        yield
    finally:
        _TAPE_ENABLED = previous


def is_taping() -> bool:
    return _TAPE_ENABLED


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    Dense float64 array that records the operations producing it.

    A tensor is a value: ops return new tensors and never mutate their inputs. Only
    `Parameter` leaves collect gradients; intermediate gradients live in `backward` alone,
    so repeated `backward` calls accumulate into parameters exactly once per call.
    """

    __array_priority__ = 100

    def __init__(
        self,
        data,
        parents: tuple["Tensor", ...] = (),
        grad_fn: GradFn | None = None,
        op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        taped = _TAPE_ENABLED and grad_fn is not None and any(p.requires_grad for p in parents)
        self._parents = parents if taped else ()
        self._grad_fn = grad_fn if taped else None
        self._op = op
        self.requires_grad = taped

    # ----- introspection -----

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r})"

    def __len__(self) -> int:
        return self.shape[0]

    # ----- arithmetic -----

    def __add__(self, other) -> "Tensor":
        other = _wrap(other)
        a_shape, b_shape = self.shape, other.shape

        def grad_fn(g):
            return unbroadcast(g, a_shape), unbroadcast(g, b_shape)

        return Tensor(self.data + other.data, (self, other), grad_fn, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other) -> "Tensor":
        return self + (-_wrap(other))

    def __rsub__(self, other) -> "Tensor":
        return _wrap(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _wrap(other)
        a, b = self.data, other.data

        def grad_fn(g):
            return unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)

        return Tensor(a * b, (self, other), grad_fn, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _wrap(other)
        a, b = self.data, other.data

        def grad_fn(g):
            return unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)

        return Tensor(a / b, (self, other), grad_fn, "div")

    def __rtruediv__(self, other) -> "Tensor":
        return _wrap(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("only scalar exponents are supported")
        a = self.data

        def grad_fn(g):
            return (g * exponent * a ** (exponent - 1),)

        return Tensor(a**exponent, (self,), grad_fn, "pow")

    def __matmul__(self, other) -> "Tensor":
        other = _wrap(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def grad_fn(g):
            return g @ b.T, a.T @ g

        return Tensor(a @ b, (self, other), grad_fn, "matmul")

    # ----- elementwise -----

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        a = self.data
        return Tensor(np.log(a), (self,), lambda g: (g / a,), "log")

    def abs(self) -> "Tensor":
        a = self.data
        return Tensor(np.abs(a), (self,), lambda g: (g * np.sign(a),), "abs")

    # ----- reductions and shape -----

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), grad_fn, "sum")

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        count = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(original),), "reshape"
        )

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose"
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape
        parts = index if isinstance(index, tuple) else (index,)
        basic = all(isinstance(p, (slice, int)) or p is None or p is Ellipsis for p in parts)

        def grad_fn(g):
            full = np.zeros(shape, dtype=np.float64)
            if basic:
                full[index] = g
            else:
                # fancy indices may repeat
                np.add.at(full, index, g)
            return (full,)

        return Tensor(self.data[index], (self,), grad_fn, "getitem")

    # ----- gradient -----

    def backward(self) -> None:
        """Fill `grad` of every Parameter this scalar depends on."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        if not self.requires_grad:
            return

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if isinstance(node, Parameter):
                node.grad += g
            if node._grad_fn is None:
                continue
            for parent, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


class Parameter(Tensor):
    """Trainable leaf: a named value with an accumulating gradient of the same shape."""

    def __init__(self, value, name: str = ""):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.requires_grad = True

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ShapeError(
                f"parameter {self.name!r}: expected shape {self.data.shape}, found {value.shape}"
            )
        self.data = value.copy()

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; encoder graphs are deep enough to hit the recursion limit
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def tensor(data) -> Tensor:
    return Tensor(data)
