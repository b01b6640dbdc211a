"""Reverse-mode automatic differentiation over dense float64 arrays of rank 0-2.

Every operation on a :class:`Value` records its parents together with a closure
that maps the output cotangent to the parent's cotangent.  Calling
:func:`backward` on a scalar walks the graph in reverse topological order.

Plain ``numpy`` inputs are accepted everywhere; the module-level functions
(:func:`exp`, :func:`relu`, ...) fall through to numpy when no operand is a
``Value``, so the same model code runs with or without a tape.

Example::

    >>> x = Value(3.0, requires_grad=True)
    >>> backward(x * x)
    >>> float(x.grad)
    6.0
"""
from __future__ import annotations

import heapq
import itertools

import numpy as np

__all__ = [
    "Value",
    "Tape",
    "backward",
    "zero_grads",
    "exp",
    "log",
    "relu",
    "abs_",
    "sigmoid",
    "tanh",
    "hardtanh",
    "clamp_min",
    "sum_",
    "mean",
    "stack",
]


_counter = itertools.count()


def _as_array(x):
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    # only scalar broadcasting is supported, so reduction is all-or-nothing
    if g.shape == shape:
        return g
    if shape == ():
        return np.sum(g)
    raise ValueError(f"cannot reduce gradient of shape {g.shape} to {shape}")


def _check_elementwise(a, b, op):
    sa, sb = np.shape(a), np.shape(b)
    if sa != sb and sa != () and sb != ():
        raise ValueError(f"shape mismatch in {op}: {sa} vs {sb}")


class Value:
    """A node of the differentiation graph.

    ``data`` is always a float64 ndarray; ``grad`` stays ``None`` until a
    backward pass reaches the node.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "op", "_order")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, data, requires_grad=False, _parents=(), op=""):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self.op = op
        # creation counter: parents always carry a smaller value
        self._order = next(_counter)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _make(data, parents, op):
        # keep only edges to nodes that need a gradient; constants and frozen
        # random draws drop out of the tape here
        live = []
        for edge in parents:
            p = edge[0]
            if p.__class__ is Value and p.requires_grad:
                live.append(edge)
        return Value(data, requires_grad=bool(live), _parents=live, op=op)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        return f"Value({self.data!r}, op={self.op!r})"

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other):
        o = _data(other)
        _check_elementwise(self.data, o, "add")
        sh, osh = self.data.shape, np.shape(o)
        return Value._make(
            self.data + o,
            ((self, lambda g: _unbroadcast(g, sh)), (other, lambda g: _unbroadcast(g, osh))),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        o = _data(other)
        _check_elementwise(self.data, o, "sub")
        sh, osh = self.data.shape, np.shape(o)
        return Value._make(
            self.data - o,
            ((self, lambda g: _unbroadcast(g, sh)), (other, lambda g: _unbroadcast(-g, osh))),
            "sub",
        )

    def __rsub__(self, other):
        return _lift(other) - self

    def __neg__(self):
        return Value._make(-self.data, ((self, lambda g: -g),), "neg")

    def __mul__(self, other):
        a, b = self.data, _data(other)
        _check_elementwise(a, b, "mul")
        sh, osh = a.shape, np.shape(b)
        return Value._make(
            a * b,
            ((self, lambda g: _unbroadcast(g * b, sh)), (other, lambda g: _unbroadcast(g * a, osh))),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        a, b = self.data, _data(other)
        _check_elementwise(a, b, "div")
        sh, osh = a.shape, np.shape(b)
        out = a / b
        return Value._make(
            out,
            (
                (self, lambda g: _unbroadcast(g / b, sh)),
                (other, lambda g: _unbroadcast(-g * out / b, osh)),
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return _lift(other) / self

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(_lift(other), self)

    # -- linear algebra --------------------------------------------------------

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_lift(other), self)

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ValueError(f"transpose needs a matrix, got shape {self.data.shape}")
        return Value._make(self.data.T, ((self, lambda g: g.T),), "transpose")

    def __getitem__(self, idx):
        sh = self.data.shape

        def grad_fn(g):
            out = np.zeros(sh)
            out[idx] = g
            return out

        return Value._make(self.data[idx], ((self, grad_fn),), "index")

    def sum(self):
        return sum_(self)

    def mean(self):
        return mean(self)


def _data(x):
    return x.data if isinstance(x, Value) else _as_array(x)


def _lift(x):
    return x if isinstance(x, Value) else Value(x)


def _any_value(*xs):
    return any(isinstance(x, Value) for x in xs)


# -- elementwise functions -------------------------------------------------------


def power(base, exponent):
    """Elementwise ``base ** exponent``; either side may be a scalar.

    The derivative with respect to the exponent is ``out * ln(base)`` and is
    only defined for positive bases.
    """
    if not _any_value(base, exponent):
        return np.power(_as_array(base), exponent)
    a, b = _data(base), _data(exponent)
    _check_elementwise(a, b, "pow")
    out = np.power(a, b)
    sh, bsh = a.shape, b.shape

    def grad_base(g):
        return _unbroadcast(g * b * np.power(a, b - 1.0), sh)

    def grad_exp(g):
        if np.any(a <= 0):
            raise ValueError("exponent gradient needs a strictly positive base")
        return _unbroadcast(g * out * np.log(a), bsh)

    return Value._make(out, ((base, grad_base), (exponent, grad_exp)), "pow")


def exp(x):
    if not isinstance(x, Value):
        return np.exp(x)
    out = np.exp(x.data)
    return Value._make(out, ((x, lambda g: g * out),), "exp")


def log(x):
    if not isinstance(x, Value):
        return np.log(x)
    a = x.data
    return Value._make(np.log(a), ((x, lambda g: g / a),), "log")


def relu(x):
    if not isinstance(x, Value):
        return np.maximum(x, 0.0)
    mask = x.data > 0
    return Value._make(np.where(mask, x.data, 0.0), ((x, lambda g: g * mask),), "relu")


def abs_(x):
    # np.sign(0) == 0 gives the minimum-norm subgradient at the kink
    if not isinstance(x, Value):
        return np.abs(x)
    s = np.sign(x.data)
    return Value._make(np.abs(x.data), ((x, lambda g: g * s),), "abs")


def sigmoid(x):
    if not isinstance(x, Value):
        return _sigmoid(_as_array(x))
    out = _sigmoid(x.data)
    return Value._make(out, ((x, lambda g: g * out * (1.0 - out)),), "sigmoid")


def _sigmoid(a):
    # exp(-log(1 + e^-a)) never overflows and keeps full relative precision
    return np.exp(-np.logaddexp(0.0, -a))


def tanh(x):
    if not isinstance(x, Value):
        return np.tanh(x)
    out = np.tanh(x.data)
    return Value._make(out, ((x, lambda g: g * (1.0 - out * out)),), "tanh")


def hardtanh(x, lo=-1.0, hi=1.0):
    if not isinstance(x, Value):
        return np.clip(x, lo, hi)
    mask = (x.data > lo) & (x.data < hi)
    return Value._make(np.clip(x.data, lo, hi), ((x, lambda g: g * mask),), "hardtanh")


def clamp_min(x, floor):
    """``max(x, floor)`` elementwise; gradient passes only where ``x > floor``."""
    if not isinstance(x, Value):
        return np.maximum(x, floor)
    mask = x.data > floor
    return Value._make(np.where(mask, x.data, floor), ((x, lambda g: g * mask),), "clamp_min")


# -- reductions and assembly -----------------------------------------------------


def sum_(x):
    if not isinstance(x, Value):
        return np.sum(x)
    sh = x.data.shape
    return Value._make(np.sum(x.data), ((x, lambda g: np.broadcast_to(g, sh).copy()),), "sum")


def mean(x):
    if not isinstance(x, Value):
        return np.mean(x)
    sh, n = x.data.shape, x.data.size
    return Value._make(np.mean(x.data), ((x, lambda g: np.full(sh, g / n)),), "mean")


def matmul(a, b):
    """Matrix-vector, vector-matrix, vector-vector or matrix-matrix product."""
    if not _any_value(a, b):
        return _as_array(a) @ _as_array(b)
    A, B = _data(a), _data(b)
    if A.ndim == 0 or B.ndim == 0 or A.shape[-1] != B.shape[0]:
        raise ValueError(f"shape mismatch in matmul: {A.shape} vs {B.shape}")

    def grad_a(g):
        if A.ndim == 1 and B.ndim == 1:
            return g * B
        if A.ndim == 2 and B.ndim == 1:
            return np.outer(g, B)
        if A.ndim == 1:
            return B @ g
        return g @ B.T

    def grad_b(g):
        if A.ndim == 1 and B.ndim == 1:
            return g * A
        if A.ndim == 2 and B.ndim == 1:
            return A.T @ g
        if A.ndim == 1:
            return np.outer(A, g)
        return A.T @ g

    return Value._make(A @ B, ((a, grad_a), (b, grad_b)), "matmul")


def stack(items):
    """Assemble scalars (or equal-shaped arrays) into one array along a new axis."""
    datas = [_data(v) for v in items]
    shapes = {d.shape for d in datas}
    if len(shapes) != 1:
        raise ValueError(f"cannot stack shapes {sorted(shapes)}")
    if not _any_value(*items):
        return np.stack(datas)
    parents = tuple((v, (lambda k: lambda g: g[k])(k)) for k, v in enumerate(items))
    return Value._make(np.stack(datas), parents, "stack")


# -- backward pass ---------------------------------------------------------------


class Tape:
    """Nodes reachable from one root, in creation (topological) order."""

    def __init__(self, root):
        self.root = root
        seen, todo = {root._order: root}, [root]
        while todo:
            for parent, _ in todo.pop()._parents:
                if parent._order not in seen:
                    seen[parent._order] = parent
                    todo.append(parent)
        self.nodes = [seen[k] for k in sorted(seen)]

    def reverse(self):
        return reversed(self.nodes)


def backward(root):
    """Accumulate ``d root / d node`` into ``node.grad`` for every node that
    requires a gradient.  ``root`` must be a scalar."""
    if not isinstance(root, Value) or root.data.ndim != 0:
        shape = root.data.shape if isinstance(root, Value) else np.shape(root)
        raise ValueError(f"backward needs a scalar root, got shape {shape}")
    if not root.requires_grad:
        return
    # popping the newest pending node first is a valid reverse topological
    # order because every node is created after its parents.  Cotangents of
    # this pass live in ``cot``, so grads left over from an earlier pass are
    # never propagated twice.
    cot = {root._order: np.ones(())}
    heap = [(-root._order, root)]
    while heap:
        _, node = heapq.heappop(heap)
        g = cot.pop(node._order)
        node.grad = g if node.grad is None else node.grad + g
        for parent, fn in node._parents:
            pg = fn(g)
            key = parent._order
            if key in cot:
                cot[key] = cot[key] + pg
            else:
                cot[key] = pg
                heapq.heappush(heap, (-key, parent))


def zero_grads(values):
    for v in values:
        if v.grad is not None:
            v.grad = np.zeros_like(v.data)
