"""
Reverse-mode automatic differentiation over small dense float64 tensors.

The tape is rebuilt on every forward pass (define-by-run). Each operation
returns a new ``Tensor`` that remembers its parents and a closure that pushes
the upstream gradient back into them. ``backward`` walks the graph in reverse
topological order starting from a scalar root.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]


class Tensor:
    """A float64 array that records how it was computed."""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        op: str = "leaf",
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.op = op
        self.name = name
        self._backward: Optional[Callable[[], None]] = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data.copy(), requires_grad=False, op="detach", name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad

    def backward(self) -> None:
        backward(self)

    # Operator sugar so model code reads like the math
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(as_tensor(other), self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(as_tensor(other), self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return self.__mul__(other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data, name: Optional[str] = None) -> Tensor:
    """A trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _node(data: np.ndarray, parents: Tuple[Tensor, ...], op: str) -> Tensor:
    return Tensor(data, requires_grad=any(p.requires_grad for p in parents), parents=parents, op=op)


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    """Equal shapes, a scalar operand, or a row vector against a matrix."""
    if a.shape == b.shape or a.size == 1 and a.data.ndim <= 1 or b.size == 1 and b.data.ndim <= 1:
        return
    if b.data.ndim == 1 and a.data.ndim == 2 and a.shape[1] == b.shape[0]:
        return
    if a.data.ndim == 1 and b.data.ndim == 2 and b.shape[1] == a.shape[0]:
        return
    raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0 or int(np.prod(shape)) == 1:
        return np.asarray(grad.sum()).reshape(shape)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise binary ops
# ---------------------------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)
    out = _node(a.data + b.data, (a, b), "add")

    def _backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(out.grad, b.shape))

    out._backward = _backward
    return out


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)
    out = _node(a.data - b.data, (a, b), "sub")

    def _backward():
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(-out.grad, b.shape))

    out._backward = _backward
    return out


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)
    out = _node(a.data * b.data, (a, b), "mul")

    def _backward():
        a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

    out._backward = _backward
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = _node(a.data * factor, (a,), "scale")

    def _backward():
        a._accumulate(out.grad * factor)

    out._backward = _backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    out = _node(a.data @ b.data, (a, b), "matmul")

    def _backward():
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Elementwise unary ops
# ---------------------------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    value = np.exp(a.data)
    out = _node(value, (a,), "exp")

    def _backward():
        a._accumulate(out.grad * value)

    out._backward = _backward
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError(f"log: non-positive input (min {a.data.min():.3g})")
    out = _node(np.log(a.data), (a,), "log")

    def _backward():
        a._accumulate(out.grad / a.data)

    out._backward = _backward
    return out


def square(a: Tensor) -> Tensor:
    out = _node(a.data * a.data, (a,), "square")

    def _backward():
        a._accumulate(out.grad * 2.0 * a.data)

    out._backward = _backward
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    """a ** exponent for strictly positive a."""
    if np.any(a.data <= 0):
        raise ValueError("power: base must be strictly positive")
    value = np.power(a.data, exponent)
    out = _node(value, (a,), "power")

    def _backward():
        a._accumulate(out.grad * exponent * value / a.data)

    out._backward = _backward
    return out


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    out = _node(value, (a,), "tanh")

    def _backward():
        a._accumulate(out.grad * (1.0 - value * value))

    out._backward = _backward
    return out


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    pos = x >= 0
    ex = np.exp(-np.abs(x))
    return np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def sigmoid(a: Tensor) -> Tensor:
    value = _stable_sigmoid(a.data)
    out = _node(value, (a,), "sigmoid")

    def _backward():
        a._accumulate(out.grad * value * (1.0 - value))

    out._backward = _backward
    return out


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(a)) without forming sigmoid(a)."""
    x = a.data
    value = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    out = _node(value, (a,), "log_sigmoid")

    def _backward():
        a._accumulate(out.grad * (1.0 - _stable_sigmoid(x)))

    out._backward = _backward
    return out


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = _node(np.where(mask, a.data, 0.0), (a,), "relu")

    def _backward():
        a._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    out = _node(np.where(mask, a.data, slope * a.data), (a,), "leaky_relu")

    def _backward():
        a._accumulate(out.grad * np.where(mask, 1.0, slope))

    out._backward = _backward
    return out


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; gradient passes only where the input was inside the range."""
    inside = (a.data >= low) & (a.data <= high)
    out = _node(np.clip(a.data, low, high), (a,), "clip")

    def _backward():
        a._accumulate(out.grad * inside)

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Reductions and structure
# ---------------------------------------------------------------------------


def sum(a: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    out = _node(np.asarray(a.data.sum(axis=axis)), (a,), "sum")

    def _backward():
        grad = out.grad if axis is None else np.expand_dims(out.grad, axis)
        a._accumulate(np.broadcast_to(grad, a.shape).copy())

    out._backward = _backward
    return out


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {a.shape}")
    return scale(sum(a, axis), 1.0 / count)


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    """log Σ exp(a) along ``axis`` with max subtraction; -inf entries contribute nothing."""
    peak = np.max(a.data, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    shifted = np.exp(a.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    value = np.squeeze(np.log(total) + peak, axis=axis)
    out = _node(value, (a,), "logsumexp")

    def _backward():
        weights = shifted / total
        a._accumulate(np.expand_dims(out.grad, axis) * weights)

    out._backward = _backward
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    out = _node(a.data.T.copy(), (a,), "transpose")

    def _backward():
        a._accumulate(out.grad.T)

    out._backward = _backward
    return out


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        value = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}") from exc
    out = _node(value.copy(), (a,), "reshape")

    def _backward():
        a._accumulate(out.grad.reshape(a.shape))

    out._backward = _backward
    return out


def take(a: Tensor, index) -> Tensor:
    """Basic slicing (``a[index]``) with a scatter-add backward."""
    value = np.array(a.data[index], dtype=np.float64)
    out = _node(value, (a,), "slice")

    def _backward():
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, out.grad)
        a._accumulate(grad)

    out._backward = _backward
    return out


def diagonal(a: Tensor) -> Tensor:
    if a.data.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"diagonal: expected a square matrix, got shape {a.shape}")
    idx = np.arange(a.shape[0])
    return take(a, (idx, idx))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    out = _node(value, tuple(tensors), "concat")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward():
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            t._accumulate(np.take(out.grad, np.arange(lo, hi), axis=axis))

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every leaf that requires grad."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


# ---------------------------------------------------------------------------
# Finite-difference gradient check
# ---------------------------------------------------------------------------


@dataclass
class GradcheckResult:
    """Outcome of comparing analytic and central-difference gradients."""

    ok: bool
    max_abs_error: float
    worst_parameter: Optional[str] = None
    checked: int = 0
    failures: List[str] = field(default_factory=list)


def gradcheck(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
) -> GradcheckResult:
    """
    Compare backward() against central differences for every element of ``params``.

    ``fn`` must rebuild the graph from scratch on each call and be deterministic
    (fix any sampled noise outside of it).
    """
    for p in params:
        p.zero_grad()
    backward(fn())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    result = GradcheckResult(ok=True, max_abs_error=0.0)
    for index, (p, grad) in enumerate(zip(params, analytic)):
        label = p.name or f"param[{index}]"
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = fn().item()
            flat[i] = original - h
            lower = fn().item()
            flat[i] = original
            numeric = (upper - lower) / (2.0 * h)
            got = grad.reshape(-1)[i]
            error = abs(got - numeric)
            result.checked += 1
            if error > result.max_abs_error:
                result.max_abs_error = error
                result.worst_parameter = label
            if not math.isfinite(got) or error > atol + rtol * abs(numeric):
                result.ok = False
                result.failures.append(f"{label}[{i}]: analytic={got:.10g} numeric={numeric:.10g}")
    return result
