#!/usr/bin/env python3
"""
Diffcore - tape-based reverse-mode differentiation over numpy arrays
Every primitive has a forward function and a vector-Jacobian product,
kept side by side in PRIMITIVES like a Wengert-list function library.
"""
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .errors import ConfigurationError, ContractError, NumericError, ShapeError
except ImportError:
    # When running as a script
    from errors import ConfigurationError, ContractError, NumericError, ShapeError

Array = np.ndarray
DEFAULT_MAX_NORM = 2.0


class Node:
    """One value on the tape"""
    __slots__ = ("value", "op", "parents", "attrs", "grad", "name")

    def __init__(self, value: Array, op: str, parents: Tuple["Node", ...] = (),
                 attrs: Optional[Dict[str, Any]] = None, name: Optional[str] = None):
        self.value = value
        self.op = op
        self.parents = parents
        self.attrs = attrs or {}
        self.grad: Optional[Array] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Node({self.op}{label}, shape={self.shape})"


@dataclass
class RowGrad:
    """Sparse gradient contribution: rows of a table"""
    ids: np.ndarray
    rows: Array


# --- forward / vjp library ------------------------------------------------

def _unbroadcast(grad: Array, shape: Tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(tag: str, a: Array, b: Array):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(tag, [a.shape, b.shape])


def _matmul_fwd(attrs, a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape], "inner dimensions must agree")
    return a @ b


def _matmul_vjp(g, out, attrs, a, b):
    return [g @ b.T, a.T @ g]


def _add_fwd(attrs, a, b):
    _check_broadcast("add", a, b)
    return a + b


def _add_vjp(g, out, attrs, a, b):
    return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]


def _mul_fwd(attrs, a, b):
    _check_broadcast("mul", a, b)
    return a * b


def _mul_vjp(g, out, attrs, a, b):
    return [_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)]


def _tanh_fwd(attrs, x):
    return np.tanh(x)


def _tanh_vjp(g, out, attrs, x):
    return [g * (1.0 - out * out)]


def _sigmoid_fwd(attrs, x):
    # tanh form stays finite for +-inf inputs
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_vjp(g, out, attrs, x):
    return [g * out * (1.0 - out)]


def _softmax_fwd(attrs, x):
    if x.ndim == 0:
        raise ShapeError("softmax", [x.shape], "needs at least one axis")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _softmax_vjp(g, out, attrs, x):
    return [out * (g - np.sum(g * out, axis=-1, keepdims=True))]


def _concat_fwd(attrs, *xs):
    axis = attrs["axis"]
    try:
        return np.concatenate(xs, axis=axis)
    except ValueError:
        raise ShapeError("concat", [x.shape for x in xs], f"axis {axis}")


def _concat_vjp(g, out, attrs, *xs):
    axis = attrs["axis"]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return list(np.split(g, bounds, axis=axis))


def _embed_fwd(attrs, table):
    ids = attrs["ids"]
    if table.ndim != 2:
        raise ShapeError("embed", [table.shape], "table must be 2-d")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("embed", [table.shape], f"row ids {ids.tolist()} out of range")
    return table[ids]


def _embed_vjp(g, out, attrs, table):
    return [RowGrad(attrs["ids"], g)]


def _log_fwd(attrs, x):
    return np.log(x)


def _log_vjp(g, out, attrs, x):
    return [g / x]


def _neg_fwd(attrs, x):
    return -x


def _neg_vjp(g, out, attrs, x):
    return [-g]


def _sum_fwd(attrs, x):
    return np.asarray(np.sum(x))


def _sum_vjp(g, out, attrs, x):
    return [np.broadcast_to(g, x.shape).copy()]


def _scale_fwd(attrs, x):
    return x * attrs["factor"]


def _scale_vjp(g, out, attrs, x):
    return [g * attrs["factor"]]


def _transpose_fwd(attrs, x):
    if x.ndim != 2:
        raise ShapeError("transpose", [x.shape], "needs a 2-d array")
    return x.T.copy()


def _transpose_vjp(g, out, attrs, x):
    return [g.T]


def _slice_fwd(attrs, x):
    axis, start, stop = attrs["axis"], attrs["start"], attrs["stop"]
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError("slice", [x.shape], f"[{start}:{stop}] on axis {axis}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    return x[tuple(index)].copy()


def _slice_vjp(g, out, attrs, x):
    full = np.zeros_like(x)
    index = [slice(None)] * x.ndim
    index[attrs["axis"]] = slice(attrs["start"], attrs["stop"])
    full[tuple(index)] = g
    return [full]


def _pick_fwd(attrs, x):
    index = attrs["index"]
    if len(index) != x.ndim or any(not 0 <= i < n for i, n in zip(index, x.shape)):
        raise ShapeError("pick", [x.shape], f"index {index}")
    return np.asarray(x[index])


def _pick_vjp(g, out, attrs, x):
    full = np.zeros_like(x)
    full[attrs["index"]] = g
    return [full]


Forward = Callable[..., Array]
Vjp = Callable[..., List[Any]]

PRIMITIVES: Dict[str, Tuple[Forward, Vjp]] = {
    "matmul": (_matmul_fwd, _matmul_vjp),
    "add": (_add_fwd, _add_vjp),
    "mul": (_mul_fwd, _mul_vjp),
    "tanh": (_tanh_fwd, _tanh_vjp),
    "sigmoid": (_sigmoid_fwd, _sigmoid_vjp),
    "softmax": (_softmax_fwd, _softmax_vjp),
    "concat": (_concat_fwd, _concat_vjp),
    "embed": (_embed_fwd, _embed_vjp),
    "log": (_log_fwd, _log_vjp),
    "neg": (_neg_fwd, _neg_vjp),
    "sum": (_sum_fwd, _sum_vjp),
    "scale": (_scale_fwd, _scale_vjp),
    "transpose": (_transpose_fwd, _transpose_vjp),
    "slice": (_slice_fwd, _slice_vjp),
    "pick": (_pick_fwd, _pick_vjp),
}


class Tape:
    """Creation-ordered node list for one forward pass

    A non-recording tape computes values only; its nodes keep no parents,
    which is what inference wants.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: List[Node] = []
        self.params: Dict[str, Node] = {}

    def param(self, name: str, value: Array) -> Node:
        """Leaf for a named parameter; one node per name per tape"""
        node = self.params.get(name)
        if node is None:
            node = Node(np.asarray(value, dtype=np.float64), "param", name=name)
            self.params[name] = node
            if self.record:
                self.nodes.append(node)
        return node

    def const(self, value) -> Node:
        return Node(np.asarray(value, dtype=np.float64), "const")

    def primitive(self, tag: str, inputs: Sequence[Node], **attrs) -> Node:
        if tag not in PRIMITIVES:
            raise ContractError(f"unknown primitive {tag!r}")
        forward, _ = PRIMITIVES[tag]
        value = forward(attrs, *(n.value for n in inputs))
        if not self.record:
            return Node(value, tag)
        node = Node(value, tag, tuple(inputs), attrs)
        self.nodes.append(node)
        return node

    # Convenience wrappers, one per primitive
    def matmul(self, a, b): return self.primitive("matmul", [a, b])
    def add(self, a, b): return self.primitive("add", [a, b])
    def mul(self, a, b): return self.primitive("mul", [a, b])
    def tanh(self, x): return self.primitive("tanh", [x])
    def sigmoid(self, x): return self.primitive("sigmoid", [x])
    def softmax(self, x): return self.primitive("softmax", [x])
    def concat(self, xs, axis=-1): return self.primitive("concat", list(xs), axis=axis)
    def log(self, x): return self.primitive("log", [x])
    def neg(self, x): return self.primitive("neg", [x])
    def sum(self, x): return self.primitive("sum", [x])
    def scale(self, x, factor): return self.primitive("scale", [x], factor=float(factor))
    def transpose(self, x): return self.primitive("transpose", [x])

    def embed(self, table: Node, ids: Sequence[int]) -> Node:
        return self.primitive("embed", [table], ids=np.asarray(ids, dtype=np.int64))

    def slice(self, x: Node, start: int, stop: int, axis: int = -1) -> Node:
        axis = axis % x.value.ndim
        return self.primitive("slice", [x], axis=axis, start=start, stop=stop)

    def pick(self, x: Node, index: Tuple[int, ...]) -> Node:
        return self.primitive("pick", [x], index=tuple(int(i) for i in index))


def _accumulate(node: Node, contribution):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    if isinstance(contribution, RowGrad):
        np.add.at(node.grad, contribution.ids, contribution.rows)
    else:
        node.grad += contribution


def backward(tape: Tape, root: Node) -> Dict[str, Array]:
    """Gradients of a scalar root for every parameter on the tape"""
    if not tape.record:
        raise ContractError("backward needs a recording tape")
    if root.value.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")

    # Only nodes the root depends on take part
    reachable = {id(root)}
    for node in reversed(tape.nodes):
        if id(node) in reachable:
            node.grad = None
            reachable.update(id(p) for p in node.parents)
    for node in tape.params.values():
        node.grad = None

    root.grad = np.ones_like(root.value)
    for node in reversed(tape.nodes):
        if id(node) not in reachable or node.grad is None or not node.parents:
            continue
        _, vjp = PRIMITIVES[node.op]
        contributions = vjp(node.grad, node.value, node.attrs, *(p.value for p in node.parents))
        for parent, contribution in zip(node.parents, contributions):
            if parent.op == "const":
                continue
            _accumulate(parent, contribution)

    return {
        name: node.grad if node.grad is not None else np.zeros_like(node.value)
        for name, node in tape.params.items()
    }


def global_norm(grads: Dict[str, Array]) -> float:
    # fixed summation order, independent of dict insertion order
    return math.sqrt(sum(float(np.sum(grads[name] * grads[name])) for name in sorted(grads)))


def clip_gradients(grads: Dict[str, Array], max_norm: float = DEFAULT_MAX_NORM) -> Dict[str, Array]:
    """Scale all gradients by max_norm / g when the global L2 norm g exceeds max_norm"""
    if not max_norm > 0:
        raise ConfigurationError(f"max_norm must be positive, got {max_norm}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient entry in {name}")

    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}
