"""Reverse-mode automatic differentiation over dense float64 arrays.

Operations are recorded on the fly into a graph of :class:`Node` objects.
Every node keeps enough information to be re-evaluated (``forward``) from the
current leaf values, which is what finite-difference checks rely on, and to
propagate adjoints in reverse topological order (``backward``).

Broadcasting is limited to what numpy does for arrays of rank <= 2.
"""

from __future__ import annotations

import enum
from typing import Callable, Iterable, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for tape errors."""


class ShapeError(AutodiffError):
    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op = op
        self.shapes = (a, b)


class DomainError(AutodiffError):
    pass


class Op(enum.Enum):
    LEAF = "leaf"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    MATMUL = "matmul"
    EXP = "exp"
    LOG = "log"
    SQUARE = "square"
    SQRT = "sqrt"
    ABS2_PAIRS = "abs2_pairs"
    SUM = "sum"
    MEAN = "mean"
    BROADCAST = "broadcast"
    RELU = "relu"
    SOFTMAX_XENT = "softmax_xent"


class Tensor:
    """Dense float64 array with a shape and row-major flat storage."""

    __slots__ = ("array",)

    def __init__(self, data, shape: Sequence[int] | None = None):
        arr = np.array(data, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if int(np.prod(shape)) != arr.size:
                raise ShapeError("tensor", shape, arr.shape)
            arr = arr.reshape(shape)
        self.array = arr

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        return self.array.reshape(-1)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.array.tolist()})"


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.array
    return np.asarray(x, dtype=np.float64)


class Node:
    """One vertex of the tape.

    ``value`` is cached from the last forward evaluation; ``grad`` holds the
    adjoint after ``backward``.
    """

    __slots__ = ("op", "inputs", "attrs", "value", "grad", "trainable", "name")

    def __init__(self, op: Op, inputs: tuple = (), value=None, attrs=None,
                 trainable: bool = False, name: str | None = None):
        self.op = op
        self.inputs = inputs
        self.attrs = attrs
        self.value = value
        self.grad = None
        self.trainable = trainable
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        label = self.name or self.op.value
        return f"Node({label}, shape={self.shape})"

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(value, trainable: bool = False, name: str | None = None) -> Node:
    arr = np.array(_as_array(value), dtype=np.float64)
    return Node(Op.LEAF, (), arr, trainable=trainable, name=name)


def constant(value) -> Node:
    return leaf(value, trainable=False)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


# ---------------------------------------------------------------------------
# forward rules


def _check_rank(shape: tuple, op: str):
    if len(shape) > 2:
        raise ShapeError(op, shape, ("rank <= 2",))


def _broadcast_shape(op: Op, a: tuple, b: tuple) -> tuple:
    _check_rank(a, op.value)
    _check_rank(b, op.value)
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(op.value, a, b) from None


def _fwd_binary(op: Op, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim > 2 or b.ndim > 2:
        _broadcast_shape(op, a.shape, b.shape)
    try:
        if op is Op.ADD:
            return a + b
        if op is Op.SUB:
            return a - b
        if op is Op.MUL:
            return a * b
        if np.any(b == 0.0):
            raise DomainError("div: division by zero")
        return a / b
    except ValueError:
        raise ShapeError(op.value, a.shape, b.shape) from None


def _fwd_log(a):
    if np.any(a <= 0.0):
        raise DomainError(f"log: non-positive input (min {a.min():.3g})")
    return np.log(a)


def _fwd_sqrt(a):
    if np.any(a <= 0.0):
        raise DomainError(f"sqrt: non-positive input (min {a.min():.3g})")
    return np.sqrt(a)


def _fwd_matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return a @ b


def _fwd_abs2_pairs(a):
    if a.shape[-1] % 2:
        raise ShapeError("abs2_pairs", a.shape, ("even last dim",))
    sq = a * a
    return sq[..., 0::2] + sq[..., 1::2]


def _fwd_reduce(op, a, axis):
    if op is Op.SUM:
        return np.sum(a, axis=axis)
    return np.mean(a, axis=axis)


def _fwd_broadcast(a, shape):
    try:
        return np.array(np.broadcast_to(a, shape))
    except ValueError:
        raise ShapeError("broadcast", a.shape, shape) from None


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _fwd_xent(node, z, t):
    if z.shape != t.shape or z.ndim != 2:
        raise ShapeError("softmax_xent", z.shape, t.shape)
    logp = _log_softmax(z)
    node.attrs = logp  # reused by the adjoint
    return np.asarray(-np.sum(t * logp) / z.shape[0])


def _evaluate(node: Node) -> np.ndarray:
    op = node.op
    vals = [i.value for i in node.inputs]
    if op in (Op.ADD, Op.SUB, Op.MUL, Op.DIV):
        return _fwd_binary(op, vals[0], vals[1])
    if op is Op.NEG:
        return -vals[0]
    if op is Op.MATMUL:
        return _fwd_matmul(vals[0], vals[1])
    if op is Op.EXP:
        return np.exp(vals[0])
    if op is Op.LOG:
        return _fwd_log(vals[0])
    if op is Op.SQUARE:
        return vals[0] * vals[0]
    if op is Op.SQRT:
        return _fwd_sqrt(vals[0])
    if op is Op.ABS2_PAIRS:
        return _fwd_abs2_pairs(vals[0])
    if op in (Op.SUM, Op.MEAN):
        return np.asarray(_fwd_reduce(op, vals[0], node.attrs))
    if op is Op.BROADCAST:
        return _fwd_broadcast(vals[0], node.attrs)
    if op is Op.RELU:
        return np.maximum(vals[0], 0.0)
    if op is Op.SOFTMAX_XENT:
        return _fwd_xent(node, vals[0], vals[1])
    raise AutodiffError(f"no forward rule for {op}")


def _record(op: Op, inputs: Iterable, attrs=None) -> Node:
    node = Node(op, tuple(_lift(i) for i in inputs), attrs=attrs)
    node.value = _evaluate(node)
    return node


# ---------------------------------------------------------------------------
# public op constructors


def add(a, b) -> Node:
    return _record(Op.ADD, (a, b))


def sub(a, b) -> Node:
    return _record(Op.SUB, (a, b))


def mul(a, b) -> Node:
    return _record(Op.MUL, (a, b))


def div(a, b) -> Node:
    return _record(Op.DIV, (a, b))


def neg(a) -> Node:
    return _record(Op.NEG, (a,))


def matmul(a, b) -> Node:
    return _record(Op.MATMUL, (a, b))


def exp(a) -> Node:
    return _record(Op.EXP, (a,))


def log(a) -> Node:
    return _record(Op.LOG, (a,))


def square(a) -> Node:
    return _record(Op.SQUARE, (a,))


def sqrt(a) -> Node:
    return _record(Op.SQRT, (a,))


def abs2_pairs(a) -> Node:
    """x**2 + y**2 over consecutive (x, y) pairs of the last axis."""
    return _record(Op.ABS2_PAIRS, (a,))


def reduce_sum(a, axis: int | None = None) -> Node:
    return _record(Op.SUM, (a,), attrs=axis)


def reduce_mean(a, axis: int | None = None) -> Node:
    return _record(Op.MEAN, (a,), attrs=axis)


def broadcast(a, shape: Sequence[int]) -> Node:
    return _record(Op.BROADCAST, (a,), attrs=tuple(shape))


def relu(a) -> Node:
    return _record(Op.RELU, (a,))


def softmax_cross_entropy(logits, targets) -> Node:
    """Mean over rows of -sum(t * log_softmax(z)); targets get no gradient."""
    return _record(Op.SOFTMAX_XENT, (logits, targets))


def softmax(z) -> np.ndarray:
    """Row softmax of a value (not recorded on the tape)."""
    return np.exp(_log_softmax(_as_array(z)))


# ---------------------------------------------------------------------------
# backward rules


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _vjp(node: Node, g: np.ndarray) -> list:
    op = node.op
    ins = node.inputs
    v = [i.value for i in ins]
    if op is Op.ADD:
        return [_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)]
    if op is Op.SUB:
        return [_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)]
    if op is Op.MUL:
        return [_unbroadcast(g * v[1], v[0].shape), _unbroadcast(g * v[0], v[1].shape)]
    if op is Op.DIV:
        ga = g / v[1]
        return [_unbroadcast(ga, v[0].shape), _unbroadcast(-ga * node.value, v[1].shape)]
    if op is Op.NEG:
        return [-g]
    if op is Op.MATMUL:
        return [g @ v[1].T, v[0].T @ g]
    if op is Op.EXP:
        return [g * node.value]
    if op is Op.LOG:
        return [g / v[0]]
    if op is Op.SQUARE:
        return [2.0 * g * v[0]]
    if op is Op.SQRT:
        return [g * 0.5 / node.value]
    if op is Op.ABS2_PAIRS:
        gx = np.empty_like(v[0])
        gx[..., 0::2] = 2.0 * g * v[0][..., 0::2]
        gx[..., 1::2] = 2.0 * g * v[0][..., 1::2]
        return [gx]
    if op in (Op.SUM, Op.MEAN):
        shape = v[0].shape
        axis = node.attrs
        if axis is None:
            scale = 1.0 if op is Op.SUM else 1.0 / v[0].size
            return [np.full(shape, float(g) * scale)]
        scale = 1.0 if op is Op.SUM else 1.0 / shape[axis]
        return [np.broadcast_to(np.expand_dims(g, axis), shape) * scale]
    if op is Op.BROADCAST:
        return [_unbroadcast(g, v[0].shape)]
    if op is Op.RELU:
        return [g * (v[0] > 0.0)]
    if op is Op.SOFTMAX_XENT:
        z, t = v
        p = np.exp(node.attrs)
        rowsum = t.sum(axis=-1, keepdims=True)
        return [float(g) * (p * rowsum - t) / z.shape[0], None]
    raise AutodiffError(f"no adjoint rule for {op}")


def topological_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.inputs:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def forward(root: Node) -> np.ndarray:
    """Re-evaluate every node under ``root`` from the current leaf values."""
    for node in topological_order(root):
        if node.op is not Op.LEAF:
            node.value = _evaluate(node)
    return root.value


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Adjoints of the scalar ``root`` w.r.t. every trainable leaf."""
    if root.value.size != 1:
        raise AutodiffError(f"backward needs a scalar root, got shape {root.value.shape}")
    order = topological_order(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    grads = {}
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node.op is Op.LEAF:
            if node.trainable:
                grads[node] = g
            continue
        for parent, pg in zip(node.inputs, _vjp(node, g)):
            if pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
    for node in order:
        if node.op is Op.LEAF and node.trainable and node not in grads:
            grads[node] = np.zeros_like(node.value)
            node.grad = grads[node]
    return grads


def check_gradients(root: Node, leaves: Sequence[Node] | None = None,
                    step: float = 1e-6, extended: bool = True) -> float:
    """Largest relative error between tape and central-difference gradients.

    Relative error per entry is |a - n| / max(|a|, |n|, 1e-3 * scale), where
    scale is the largest gradient magnitude of that leaf. With ``extended``
    the differences are taken with every leaf promoted to ``np.longdouble``
    (80-bit on x86-64), which keeps rounding noise in the forward pass well
    below the step's truncation error; the step stays small so it does not
    straddle ReLU kinks.
    """
    forward(root)
    grads = backward(root)
    if leaves is None:
        leaves = list(grads)
    all_leaves = [n for n in topological_order(root) if n.op is Op.LEAF]
    saved = {id(n): n.value for n in all_leaves}
    if extended:
        for n in all_leaves:
            n.value = np.array(n.value, dtype=np.longdouble)
    worst = 0.0
    try:
        for node in leaves:
            analytic = grads[node]
            numeric = np.zeros(node.value.shape)
            flat = node.value.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                fp = forward(root)[()]
                flat[k] = orig - step
                fm = forward(root)[()]
                flat[k] = orig
                numeric.reshape(-1)[k] = float((fp - fm) / (2 * step))
            scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-300)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    finally:
        for n in all_leaves:
            n.value = saved[id(n)]
        forward(root)
    return worst


def numeric_gradient(fn: Callable[[], float], array: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar callable w.r.t. ``array`` (mutated in place)."""
    out = np.zeros_like(array)
    flat, gflat = array.reshape(-1), out.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = fn()
        flat[k] = orig - step
        fm = fn()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * step)
    return out
