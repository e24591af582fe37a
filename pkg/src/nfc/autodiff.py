"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Graph` is a tape: every differentiable operation appends one node,
so the node list is already in topological order and :meth:`Graph.backward`
is a single reverse sweep. Graphs are cheap and meant to be rebuilt for every
training step.

Tensors that do not belong to a graph are constants; operations whose inputs
are all constants are evaluated eagerly and return constants.

    >>> g = Graph()
    >>> x = g.leaf(np.array(3.0))
    >>> loss = x * x
    >>> g.backward(loss)[x.node]
    array(6.)
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ShapeError",
    "DomainError",
    "Graph",
    "Tensor",
    "constant",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "sigmoid",
    "softplus",
    "exp",
    "log",
    "tsum",
    "mean",
    "broadcast_to",
    "concat",
    "reshape",
    "cumsum",
    "clamp_max",
    "clamp_min",
    "grad_check",
]


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class _Node:
    __slots__ = ("op", "parents", "vjp", "value")

    def __init__(self, op, parents, vjp, value):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.value = value


class Graph:
    """Tape of recorded operations."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> "Tensor":
        """Register ``value`` as a differentiable input (parameter)."""
        data = np.array(value, dtype=np.float64)
        self.nodes.append(_Node("leaf", (), None, data))
        return Tensor(data, self, len(self.nodes) - 1)

    def _record(self, op, parents, data, vjp) -> "Tensor":
        ids = tuple(p.node if p.graph is self else None for p in parents)
        self.nodes.append(_Node(op, ids, vjp, data))
        return Tensor(data, self, len(self.nodes) - 1)

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.op == "leaf"]

    def backward(self, loss: "Tensor") -> dict[int, np.ndarray]:
        """Gradient of scalar ``loss`` with respect to every leaf of the graph.

        Leaves the loss does not depend on get zero arrays.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        out = {i: np.zeros_like(self.nodes[i].value) for i in self.leaves()}
        if loss.graph is not self:
            return out
        pending: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
        for nid in range(loss.node, -1, -1):
            g = pending.pop(nid, None)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.vjp is None:
                out[nid] = g
                continue
            for pid, pg in zip(node.parents, node.vjp(g)):
                if pid is None or pg is None:
                    continue
                prev = pending.get(pid)
                pending[pid] = pg if prev is None else prev + pg
        return out

    def first_nonfinite(self) -> Optional[tuple[int, str, tuple]]:
        """(node id, op, shape) of the earliest node holding NaN/Inf, if any."""
        for i, n in enumerate(self.nodes):
            if not np.all(np.isfinite(n.value)):
                return i, n.op, n.value.shape
        return None


class Tensor:
    """A float64 array, optionally tied to a node of a :class:`Graph`."""

    __slots__ = ("data", "graph", "node")
    __array_priority__ = 100

    def __init__(self, data, graph: Optional[Graph] = None, node: Optional[int] = None):
        self.data = data if isinstance(data, np.ndarray) and data.dtype == np.float64 else np.asarray(data, dtype=np.float64)
        self.graph = graph
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        tag = "const" if self.graph is None else f"node={self.node}"
        return f"Tensor(shape={self.shape}, {tag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _graph_of(tensors: Sequence[Tensor]) -> Optional[Graph]:
    graph = None
    for t in tensors:
        if t.graph is not None:
            if graph is not None and t.graph is not graph:
                raise ValueError("tensors belong to different graphs")
            graph = t.graph
    return graph


def _apply(op: str, inputs: Sequence[Tensor], data: np.ndarray, vjp: Callable) -> Tensor:
    graph = _graph_of(inputs)
    if graph is None:
        return Tensor(data)
    return graph._record(op, inputs, data, vjp)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _bshape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- binary ---------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    A, B = a.data, b.data
    need_a, need_b = a.graph is not None, b.graph is not None
    return _apply(
        "matmul", (a, b), A @ B,
        lambda g: (g @ B.T if need_a else None, A.T @ g if need_b else None),
    )


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _bshape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _apply("add", (a, b), a.data + b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _bshape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _apply("sub", (a, b), a.data - b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _bshape(a, b, "mul")
    A, B = a.data, b.data
    need_a, need_b = a.graph is not None, b.graph is not None
    return _apply(
        "mul", (a, b), A * B,
        lambda g: (_unbroadcast(g * B, A.shape) if need_a else None,
                   _unbroadcast(g * A, B.shape) if need_b else None),
    )


# -- unary ----------------------------------------------------------------


def neg(a) -> Tensor:
    a = constant(a)
    return _apply("neg", (a,), -a.data, lambda g: (-g,))


def relu(a) -> Tensor:
    a = constant(a)
    on = a.data > 0
    return _apply("relu", (a,), np.maximum(a.data, 0.0), lambda g: (g * on,))


def sigmoid(a) -> Tensor:
    a = constant(a)
    s = expit(a.data)
    return _apply("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def softplus(a) -> Tensor:
    a = constant(a)
    x = a.data
    return _apply("softplus", (a,), np.logaddexp(0.0, x), lambda g: (g * expit(x),))


def exp(a) -> Tensor:
    a = constant(a)
    e = np.exp(a.data)
    return _apply("exp", (a,), e, lambda g: (g * e,))


def log(a) -> Tensor:
    a = constant(a)
    x = a.data
    if np.any(~(x > 0)):
        bad = x[~(x > 0)].flat[0]
        raise DomainError(f"log of non-positive value {bad!r} (missing clamp upstream?)")
    return _apply("log", (a,), np.log(x), lambda g: (g / x,))


def clamp_max(a, bound: float) -> Tensor:
    """min(a, bound); zero gradient where the bound is active (ties included)."""
    a = constant(a)
    inside = a.data < bound
    return _apply("clamp_max", (a,), np.minimum(a.data, bound), lambda g: (g * inside,))


def clamp_min(a, bound: float) -> Tensor:
    """max(a, bound); zero gradient where the bound is active (ties included)."""
    a = constant(a)
    inside = a.data > bound
    return _apply("clamp_min", (a,), np.maximum(a.data, bound), lambda g: (g * inside,))


# -- reductions and shape -------------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = constant(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _apply("sum", (a,), np.asarray(out, dtype=np.float64), vjp)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = constant(a)
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def broadcast_to(a, shape) -> Tensor:
    a = constant(a)
    src = a.shape
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {src} to {tuple(shape)}") from None
    return _apply("broadcast", (a,), out.copy(), lambda g: (_unbroadcast(g, src),))


def reshape(a, shape) -> Tensor:
    a = constant(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return _apply("reshape", (a,), out, lambda g: (g.reshape(src),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [constant(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _apply("concat", ts, out, lambda g: tuple(np.split(g, sizes, axis=axis)))


def cumsum(a, axis: int = -1, exclusive: bool = False) -> Tensor:
    """Running sum along ``axis``; ``exclusive`` shifts it so element i sums k < i."""
    a = constant(a)
    x = a.data
    axis = axis % x.ndim
    if exclusive:
        # shift instead of subtracting x: x may hold huge values (1e10 deltas)
        head = np.zeros_like(np.take(x, [0], axis=axis))
        c = np.concatenate([head, np.cumsum(np.delete(x, -1, axis=axis), axis=axis)], axis=axis)
    else:
        c = np.cumsum(x, axis=axis)

    def vjp(g):
        # adjoint of a prefix sum is a suffix sum
        r = np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis)
        if exclusive:
            r = np.concatenate([np.delete(r, 0, axis=axis), np.zeros_like(np.take(r, [0], axis=axis))], axis=axis)
        return (r,)

    return _apply("cumsum", (a,), c, vjp)


# -- checking -------------------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], point, h: float = 1e-6) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    x0 = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    g = Graph()
    x = g.leaf(x0)
    analytic = g.backward(f(x))[x.node]

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += h
        xm[i] -= h
        fp = float(f(Tensor(xp.reshape(x0.shape))).data)
        fm = float(f(Tensor(xm.reshape(x0.shape))).data)
        flat[i] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
