"""Static computation graphs with reverse-mode differentiation.

A :class:`GraphBuilder` records primitive operations on symbolic node ids and
produces an immutable :class:`Graph`.  Evaluation is split into two pure
functions, :func:`forward` and :func:`backward`, that keep all intermediate
values in per-call dictionaries, so one graph can be evaluated concurrently
with different bindings.

Tensors are plain ``float64`` :class:`numpy.ndarray` objects (row-major).
Leaf shapes may contain ``None`` for a free batch dimension.

Example::

    b = GraphBuilder()
    x = b.input("x", (None, 3))
    w = b.param("w", (3, 1))
    y = b.sum(b.sigmoid(b.matmul(x, w)))
    g = b.build()
    vals = forward(g, {"x": np.ones((2, 3)), "w": np.zeros((3, 1))})
    grads = backward(g, vals, seed=y, wrt=["w"])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import ShapeError

__all__ = [
    "Graph",
    "GraphBuilder",
    "Node",
    "as_tensor",
    "backward",
    "forward",
]


def as_tensor(data) -> np.ndarray:
    """Return ``data`` as a C-contiguous float64 array (copying only if needed)."""
    return np.ascontiguousarray(data, dtype=np.float64)


def _sigmoid(a):
    return expit(a)  # overflow-safe for large |a|


def _softmax(a):
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(a):
    z = a - a.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# primitive forward / backward rules
#
# forward(name, inputs, attrs) -> output
# backward(g, inputs, output, attrs) -> tuple of input gradients


def _fwd_add(name, ins, attrs):
    a, b = ins
    if a.shape == b.shape:
        return a + b
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return a + b
    raise ShapeError(name, f"add of {a.shape} and {b.shape} (only equal shapes or bias-add allowed)")


def _bwd_add(g, ins, out, attrs):
    a, b = ins
    if a.shape == b.shape:
        return g, g
    return g, g.reshape(-1, b.shape[0]).sum(axis=0)


def _fwd_mul(name, ins, attrs):
    a, b = ins
    if a.shape != b.shape:
        raise ShapeError(name, f"elementwise mul of {a.shape} and {b.shape}")
    return a * b


def _bwd_mul(g, ins, out, attrs):
    a, b = ins
    return g * b, g * a


def _fwd_matmul(name, ins, attrs):
    a, b = ins
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(name, f"matmul of {a.shape} and {b.shape}")
    return a @ b


def _bwd_matmul(g, ins, out, attrs):
    a, b = ins
    return g @ b.T, a.T @ g


def _fwd_sigmoid(name, ins, attrs):
    return _sigmoid(ins[0])


def _bwd_sigmoid(g, ins, out, attrs):
    return (g * out * (1.0 - out),)


def _fwd_tanh(name, ins, attrs):
    return np.tanh(ins[0])


def _bwd_tanh(g, ins, out, attrs):
    return (g * (1.0 - out * out),)


def _fwd_softmax(name, ins, attrs):
    return _softmax(ins[0])


def _bwd_softmax(g, ins, out, attrs):
    return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


def _fwd_log_softmax(name, ins, attrs):
    return _log_softmax(ins[0])


def _bwd_log_softmax(g, ins, out, attrs):
    return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)


def _slice_index(ndim, axis, start, stop, squeeze):
    idx = [slice(None)] * ndim
    idx[axis] = start if squeeze else slice(start, stop)
    return tuple(idx)


def _fwd_slice(name, ins, attrs):
    (a,) = ins
    axis, start, stop, squeeze = attrs["axis"], attrs["start"], attrs["stop"], attrs["squeeze"]
    if axis >= a.ndim or stop > a.shape[axis]:
        raise ShapeError(name, f"slice [{start}:{stop}] on axis {axis} of shape {a.shape}")
    return a[_slice_index(a.ndim, axis, start, stop, squeeze)]


def _bwd_slice(g, ins, out, attrs):
    (a,) = ins
    ga = np.zeros_like(a)
    ga[_slice_index(a.ndim, attrs["axis"], attrs["start"], attrs["stop"], attrs["squeeze"])] = g
    return (ga,)


def _fwd_concat(name, ins, attrs):
    axis = attrs["axis"]
    try:
        return np.concatenate(ins, axis=axis)
    except ValueError as exc:
        raise ShapeError(name, f"concat of {[x.shape for x in ins]} on axis {axis}") from exc


def _bwd_concat(g, ins, out, attrs):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in ins])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _fwd_sum(name, ins, attrs):
    return np.asarray(ins[0].sum(axis=attrs["axis"]), dtype=np.float64)


def _bwd_sum(g, ins, out, attrs):
    (a,) = ins
    axis = attrs["axis"]
    if axis is None:
        return (np.full_like(a, g),)
    return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)


def _fwd_scale(name, ins, attrs):
    return ins[0] * attrs["c"]


def _bwd_scale(g, ins, out, attrs):
    return (g * attrs["c"],)


_RULES: dict[str, tuple[Callable, Callable]] = {
    "add": (_fwd_add, _bwd_add),
    "mul": (_fwd_mul, _bwd_mul),
    "matmul": (_fwd_matmul, _bwd_matmul),
    "sigmoid": (_fwd_sigmoid, _bwd_sigmoid),
    "tanh": (_fwd_tanh, _bwd_tanh),
    "softmax": (_fwd_softmax, _bwd_softmax),
    "log_softmax": (_fwd_log_softmax, _bwd_log_softmax),
    "slice": (_fwd_slice, _bwd_slice),
    "concat": (_fwd_concat, _bwd_concat),
    "sum": (_fwd_sum, _bwd_sum),
    "scale": (_fwd_scale, _bwd_scale),
}

LEAF_KINDS = ("input", "param")


@dataclass(frozen=True)
class Node:
    op: str
    name: str
    inputs: tuple[int, ...] = ()
    attrs: Mapping = field(default_factory=dict)
    shape: tuple | None = None  # declared shape, leaves only

    @property
    def is_leaf(self) -> bool:
        return self.op in LEAF_KINDS


@dataclass(frozen=True)
class Graph:
    """Immutable, topologically ordered list of nodes."""

    nodes: tuple[Node, ...]
    leaves: Mapping[str, int]
    outputs: Mapping[str, int]

    def __len__(self):
        return len(self.nodes)

    def leaf(self, name: str) -> int:
        return self.leaves[name]

    def ancestors(self, targets: Iterable[int]) -> list[int]:
        """Sorted ids of every node that ``targets`` depend on (inclusive)."""
        need = set()
        stack = list(targets)
        while stack:
            i = stack.pop()
            if i in need:
                continue
            need.add(i)
            stack.extend(self.nodes[i].inputs)
        return sorted(need)


class GraphBuilder:
    """Records operations; ``build()`` freezes them into a :class:`Graph`."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._leaves: dict[str, int] = {}

    def _push(self, op, inputs=(), name=None, shape=None, **attrs) -> int:
        for i in inputs:
            if not 0 <= i < len(self._nodes):
                raise ValueError(f"unknown node id {i}")
        idx = len(self._nodes)
        self._nodes.append(Node(op, name or f"{op}_{idx}", tuple(inputs), attrs, shape))
        return idx

    def _leaf(self, kind, name, shape):
        if name in self._leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        idx = self._push(kind, name=name, shape=tuple(shape))
        self._leaves[name] = idx
        return idx

    def input(self, name: str, shape: Sequence[int | None]) -> int:
        return self._leaf("input", name, shape)

    def param(self, name: str, shape: Sequence[int | None]) -> int:
        return self._leaf("param", name, shape)

    def add(self, a, b, name=None):
        return self._push("add", (a, b), name)

    def mul(self, a, b, name=None):
        return self._push("mul", (a, b), name)

    def matmul(self, a, b, name=None):
        return self._push("matmul", (a, b), name)

    def sigmoid(self, a, name=None):
        return self._push("sigmoid", (a,), name)

    def tanh(self, a, name=None):
        return self._push("tanh", (a,), name)

    def softmax(self, a, name=None):
        return self._push("softmax", (a,), name)

    def log_softmax(self, a, name=None):
        return self._push("log_softmax", (a,), name)

    def slice(self, a, axis: int, start: int, stop: int | None = None, squeeze=False, name=None):
        """``a[..., start:stop, ...]`` along ``axis``; ``squeeze`` selects index ``start`` and drops the axis."""
        if squeeze:
            stop = start + 1
        if stop is None or stop <= start or start < 0:
            raise ValueError(f"bad slice bounds [{start}:{stop}]")
        return self._push("slice", (a,), name, axis=axis, start=start, stop=stop, squeeze=squeeze)

    def concat(self, parts: Sequence[int], axis: int, name=None):
        return self._push("concat", tuple(parts), name, axis=axis)

    def sum(self, a, axis: int | None = None, name=None):
        return self._push("sum", (a,), name, axis=axis)

    def scale(self, a, c: float, name=None):
        return self._push("scale", (a,), name, c=float(c))

    def build(self, outputs: Mapping[str, int] | None = None) -> Graph:
        return Graph(tuple(self._nodes), dict(self._leaves), dict(outputs or {}))


def _check_leaf(node: Node, value: np.ndarray):
    decl = node.shape
    if decl is None:
        return
    if len(decl) != value.ndim or any(d is not None and d != s for d, s in zip(decl, value.shape)):
        raise ShapeError(node.name, f"bound shape {value.shape} does not match declared {decl}")


def forward(
    graph: Graph,
    bindings: Mapping[str, np.ndarray],
    outputs: Iterable[int] | None = None,
) -> dict[int, np.ndarray]:
    """Evaluate ``graph``; returns a dict node id -> value.

    If ``outputs`` is given, only their ancestors are evaluated and only the
    leaves among them need to be bound.
    """
    order = range(len(graph.nodes)) if outputs is None else graph.ancestors(outputs)
    values: dict[int, np.ndarray] = {}
    for i in order:
        node = graph.nodes[i]
        if node.is_leaf:
            if node.name not in bindings:
                raise ShapeError(node.name, "leaf is not bound")
            v = as_tensor(bindings[node.name])
            _check_leaf(node, v)
            values[i] = v
            continue
        fwd = _RULES[node.op][0]
        values[i] = fwd(node.name, [values[j] for j in node.inputs], node.attrs)
    return values


def backward(
    graph: Graph,
    values: Mapping[int, np.ndarray],
    seed: int,
    wrt: Iterable[str],
) -> dict[str, np.ndarray]:
    """Gradients of the scalar node ``seed`` with respect to the named leaves.

    ``values`` must come from :func:`forward` and include every ancestor of
    ``seed``.  Gradients from multiple consumers of a node are summed.
    """
    wrt = list(wrt)
    if values[seed].size != 1:
        raise ShapeError(graph.nodes[seed].name, f"seed must be scalar, got shape {values[seed].shape}")
    order = graph.ancestors([seed])
    grads: dict[int, np.ndarray] = {seed: np.ones_like(values[seed])}
    for i in reversed(order):
        node = graph.nodes[i]
        g = grads.get(i)
        if g is None or node.is_leaf:
            continue
        bwd = _RULES[node.op][1]
        in_grads = bwd(g, [values[j] for j in node.inputs], values[i], node.attrs)
        for j, gj in zip(node.inputs, in_grads):
            if j in grads:
                grads[j] = grads[j] + gj
            else:
                grads[j] = gj
    out = {}
    for name in wrt:
        idx = graph.leaves[name]
        g = grads.get(idx)
        if g is None:
            if idx not in values:
                raise ValueError(f"leaf {name!r} was not evaluated by forward()")
            g = np.zeros_like(values[idx])
        out[name] = np.asarray(g, dtype=np.float64)
    return out
