"""Minimal reverse-mode differentiation over a recorded tape of numpy ops.

Only the primitives needed by the reconstruction loss are provided. Every
op returns a new :class:`Tensor` that remembers its parents and a closure
mapping the upstream gradient to parent gradients. :func:`backward` walks
the graph in reverse topological order.

Elementwise ops require identical shapes; use :func:`broadcast_to` to
expand a tensor explicitly.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Parameter",
    "constant",
    "matmul",
    "transpose",
    "mul",
    "add",
    "sub",
    "neg",
    "scale",
    "square",
    "exp",
    "div",
    "softmax",
    "row_softmax",
    "col_softmax",
    "l2norm",
    "sum",
    "reshape",
    "broadcast_to",
    "backward",
    "zero_grad",
    "finite_difference_check",
]

MAX_RANK = 4


class ShapeError(ValueError):
    """Raised when an op receives operands of incompatible shapes."""


def _check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        shp = ", ".join(str(tuple(s)) for s in shapes)
        raise ShapeError(f"{op}: incompatible shapes {shp}")


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode."""

    __slots__ = ("value", "grad", "_parents", "_vjp", "requires_grad", "name")

    def __init__(self, value, parents: Sequence["Tensor"] = (), vjp: Callable | None = None,
                 name: str | None = None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds {MAX_RANK}")
        self.value = arr
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._vjp = vjp
        self.requires_grad = any(p.requires_grad for p in self._parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar, restricted to the kernel's op set
    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    def __radd__(self, other):
        return add(_lift(other, self.shape), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.shape))

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """A named leaf tensor whose gradient is accumulated by :func:`backward`."""

    __slots__ = ()

    def __init__(self, value, name: str):
        super().__init__(value, name=name)
        self.requires_grad = True
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def constant(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _lift(x, shape) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.broadcast_to(np.asarray(x, dtype=np.float64), shape))


def _node(value, parents, vjp) -> Tensor:
    return Tensor(value, parents, vjp)


# --------------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading batch axes must match."""
    a, b = constant(a), constant(b)
    _check(a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2]
           and a.shape[:-2] == b.shape[:-2], "matmul", a.shape, b.shape)
    out = a.value @ b.value

    def vjp(g):
        ga = g @ np.swapaxes(b.value, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.value, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    a = constant(a)
    _check(a.ndim >= 2, "transpose", a.shape)
    return _node(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    _check(a.shape == b.shape, "mul", a.shape, b.shape)
    return _node(a.value * b.value, (a, b),
                 lambda g: (g * b.value if a.requires_grad else None,
                            g * a.value if b.requires_grad else None))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    _check(a.shape == b.shape, "add", a.shape, b.shape)
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = constant(a), constant(b)
    _check(a.shape == b.shape, "sub", a.shape, b.shape)
    return _node(a.value - b.value, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    a = constant(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    a = constant(a)
    c = float(c)
    return _node(a.value * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    a = constant(a)
    return _node(a.value ** 2, (a,), lambda g: (2.0 * a.value * g,))


def exp(a: Tensor) -> Tensor:
    a = constant(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def div(a: Tensor, s) -> Tensor:
    """Divide ``a`` by a positive scalar (float or 0-d tensor)."""
    a, s = constant(a), constant(s)
    _check(s.ndim == 0, "div", a.shape, s.shape)
    if not s.value > 0:
        raise ValueError(f"div: divisor must be positive, got {float(s.value)}")
    sv = float(s.value)
    out = a.value / sv

    def vjp(g):
        return g / sv, np.asarray(-(g * a.value).sum() / sv ** 2)

    return _node(out, (a, s), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    a = constant(a)
    _check(a.ndim >= 1 and a.shape[axis] > 0, "softmax", a.shape)
    out = a.value - a.value.max(axis=axis, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), vjp)


def row_softmax(a: Tensor) -> Tensor:
    return softmax(a, axis=-1)


def col_softmax(a: Tensor) -> Tensor:
    return softmax(a, axis=-2)


def l2norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as 0."""
    a = constant(a)
    n = np.sqrt((a.value ** 2).sum(axis=axis))

    def vjp(g):
        nk = np.expand_dims(n, axis)
        safe = np.where(nk > 0, nk, 1.0)
        return (np.where(nk > 0, a.value / safe, 0.0) * np.expand_dims(g, axis),)

    return _node(n, (a,), vjp)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = constant(a)
    out = a.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(out, (a,), vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = constant(a)
    try:
        out = a.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc
    return _node(out, (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Expand ``a`` by prepending axes and stretching size-1 axes."""
    a = constant(a)
    shape = tuple(shape)
    lead = len(shape) - a.ndim
    _check(lead >= 0 and all(s == t or s == 1 for s, t in zip(a.shape, shape[lead:])),
           "broadcast_to", a.shape, shape)
    out = np.broadcast_to(a.value, shape)
    stretched = tuple(lead + i for i, s in enumerate(a.shape) if s == 1 and shape[lead + i] != 1)

    def vjp(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        if stretched:
            g = g.sum(axis=tuple(i - lead for i in stretched), keepdims=True)
        return (g,)

    return _node(out, (a,), vjp)


# --------------------------------------------------------------- gradients


def _toposort(root: Tensor) -> list[Tensor]:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every reachable :class:`Parameter`."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor produced by a forward pass")
    if loss.ndim != 0:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("backward: no recorded forward pass reaches a Parameter")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            # vjps may return None for inputs that need no gradient
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_check(build_loss: Callable[[], Tensor], params: Sequence[Parameter],
                            h: float | None = None) -> dict[str, np.ndarray]:
    """Compare analytic gradients against central differences.

    ``build_loss`` must rebuild the graph from the current parameter values.
    Returns, per parameter name, the entrywise relative error
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``. When ``h`` is
    None the step is ``1e-4 * max(1, |value|)`` per entry.
    """
    first = build_loss().item()
    if build_loss().item() != first:
        raise RuntimeError("finite_difference_check: loss builder is not deterministic")
    zero_grad(params)
    backward(build_loss())
    report = {}
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            step = h if h is not None else 1e-4 * max(1.0, abs(orig))
            flat[k] = orig + step
            up = build_loss().item()
            flat[k] = orig - step
            down = build_loss().item()
            flat[k] = orig
            numeric.reshape(-1)[k] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        report[p.name] = np.abs(analytic - numeric) / denom
    zero_grad(params)
    return report
