"""Reverse-mode computation graph with forward-propagated input jets.

Values are float64 numpy arrays; a scalar is a 0-d array.  A fresh graph is
built on every training step (tape style) from persistent parameter leaves,
so intermediate nodes are garbage-collected between steps.

Jets carry, alongside each value, its first derivatives and *diagonal*
second derivatives with respect to the network input coordinates.  Mixed
second derivatives are not tracked: the supported PDE residuals only need
the Laplacian, which is the sum of the diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import GraphError


class Node:
    """One value in the computation graph.

    ``adjoint`` is ``None`` until a backward pass reaches the node; use
    :meth:`grad` to read it as an array.
    """

    __slots__ = ("value", "op", "parents", "adjoint", "trainable", "_push")

    def __init__(self, value, op="leaf", parents=(), push=None, trainable=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents = parents
        self.adjoint = None
        self.trainable = trainable
        self._push = push

    def grad(self) -> np.ndarray:
        """Adjoint accumulated by the last backward pass (zeros if unreached)."""
        if self.adjoint is None:
            return np.zeros_like(self.value)
        return self.adjoint

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, trainable={self.trainable})"

    # operator sugar; scalars and arrays are lifted to constant leaves
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


def constant(value) -> Node:
    return Node(value, op="const")


def parameter(value) -> Node:
    """Trainable leaf; its array is updated in place by the optimizer."""
    return Node(np.array(value, dtype=np.float64), op="param", trainable=True)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _needs(node: Node) -> bool:
    """Whether gradients flow past this node (constant leaves absorb them)."""
    return node.trainable or bool(node.parents)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient ``g`` back down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    na, nb = _needs(a), _needs(b)

    def push(g):
        return (
            _unbroadcast(g, a.value.shape) if na else None,
            _unbroadcast(g, b.value.shape) if nb else None,
        )

    return Node(a.value + b.value, "add", (a, b), push)


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    na, nb = _needs(a), _needs(b)

    def push(g):
        return (
            _unbroadcast(g, a.value.shape) if na else None,
            _unbroadcast(-g, b.value.shape) if nb else None,
        )

    return Node(a.value - b.value, "sub", (a, b), push)


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    na, nb = _needs(a), _needs(b)

    def push(g):
        return (
            _unbroadcast(g * b.value, a.value.shape) if na else None,
            _unbroadcast(g * a.value, b.value.shape) if nb else None,
        )

    return Node(a.value * b.value, "mul", (a, b), push)


def div(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    na, nb = _needs(a), _needs(b)
    inv = 1.0 / b.value

    def push(g):
        return (
            _unbroadcast(g * inv, a.value.shape) if na else None,
            _unbroadcast(-g * a.value * inv * inv, b.value.shape) if nb else None,
        )

    return Node(a.value * inv, "div", (a, b), push)


def neg(x) -> Node:
    x = _lift(x)

    def push(g):
        return (-g,)

    return Node(-x.value, "neg", (x,), push)


def square(x) -> Node:
    x = _lift(x)

    def push(g):
        return (g * (2.0 * x.value),)

    return Node(x.value * x.value, "square", (x,), push)


def absolute(x) -> Node:
    """|x| with subgradient 0 at x = 0."""
    x = _lift(x)
    s = np.sign(x.value)

    def push(g):
        return (g * s,)

    return Node(np.abs(x.value), "abs", (x,), push)


def log(x) -> Node:
    x = _lift(x)

    def push(g):
        return (g / x.value,)

    return Node(np.log(x.value), "log", (x,), push)


def exp(x) -> Node:
    x = _lift(x)
    e = np.exp(x.value)

    def push(g):
        return (g * e,)

    return Node(e, "exp", (x,), push)


def sin(x) -> Node:
    x = _lift(x)

    def push(g):
        return (g * np.cos(x.value),)

    return Node(np.sin(x.value), "sin", (x,), push)


def cos(x) -> Node:
    x = _lift(x)

    def push(g):
        return (-g * np.sin(x.value),)

    return Node(np.cos(x.value), "cos", (x,), push)


def tanh(x) -> Node:
    x = _lift(x)
    t = np.tanh(x.value)

    def push(g):
        return (g * (1.0 - t * t),)

    return Node(t, "tanh", (x,), push)


def softplus(x) -> Node:
    """log(1 + exp(x)), computed stably for large |x|."""
    x = _lift(x)

    def push(g):
        return (g * special.expit(x.value),)

    return Node(np.logaddexp(0.0, x.value), "softplus", (x,), push)


def lgamma(x) -> Node:
    """log Gamma(x) for x > 0; derivative is the digamma function."""
    x = _lift(x)

    def push(g):
        return (g * special.digamma(x.value),)

    return Node(special.gammaln(x.value), "lgamma", (x,), push)


def sum_(x) -> Node:
    x = _lift(x)
    shape = x.value.shape

    def push(g):
        return (np.broadcast_to(g, shape),)

    return Node(x.value.sum(), "sum", (x,), push)


def mean_(x) -> Node:
    x = _lift(x)
    if x.value.size == 0:
        raise GraphError("mean over an empty batch")
    shape, n = x.value.shape, x.value.size

    def push(g):
        return (np.broadcast_to(g / n, shape),)

    return Node(x.value.mean(), "mean", (x,), push)


# ---------------------------------------------------------------------------
# dense-layer ops
# ---------------------------------------------------------------------------

def affine(x, w, b) -> Node:
    """x @ w + b for x (N, din), w (din, dout), b (dout,)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    nx = _needs(x)

    def push(g):
        return g @ w.value.T if nx else None, x.value.T @ g, g.sum(axis=0)

    return Node(x.value @ w.value + b.value, "affine", (x, w, b), push)


def linear(x, w) -> Node:
    """x @ w without bias (used for jet derivative channels)."""
    x, w = _lift(x), _lift(w)
    nx = _needs(x)

    def push(g):
        return g @ w.value.T if nx else None, x.value.T @ g

    return Node(x.value @ w.value, "linear", (x, w), push)


def dense(x, w, b=None) -> Node:
    """Single-output head: x (N, din) @ w (din,) [+ b ()] -> (N,)."""
    x, w = _lift(x), _lift(w)
    nx = _needs(x)
    if b is None:
        def push(g):
            return np.outer(g, w.value) if nx else None, x.value.T @ g

        return Node(x.value @ w.value, "dense", (x, w), push)
    b = _lift(b)

    def push(g):
        return np.outer(g, w.value) if nx else None, x.value.T @ g, g.sum()

    return Node(x.value @ w.value + b.value, "dense", (x, w, b), push)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Populate adjoints of everything reachable from a scalar ``root``.

    Returns the gradient map restricted to trainable leaves.  Leaves that do
    not feed into ``root`` keep a ``None`` adjoint (read as zeros via
    :meth:`Node.grad`).
    """
    if root.value.shape != ():
        raise GraphError(f"backward needs a scalar root, got shape {root.value.shape}")
    order = _toposort(root)
    for node in order:
        node.adjoint = None
    root.adjoint = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._push is None or node.adjoint is None:
            continue
        for parent, g in zip(node.parents, node._push(node.adjoint)):
            if g is None:
                continue
            parent.adjoint = g if parent.adjoint is None else parent.adjoint + g
    return {n: n.adjoint for n in order if n.trainable}


def reset_adjoints(nodes) -> None:
    """Clear adjoints on persistent leaves before building the next graph."""
    for n in nodes:
        n.adjoint = None


# ---------------------------------------------------------------------------
# jets: value + first + diagonal second input-derivatives
# ---------------------------------------------------------------------------

@dataclass
class Jet:
    """A graph value bundled with d/dx_i and d^2/dx_i^2 channels.

    Every channel is itself a Node, so backward passes through any jet
    component yield weight gradients of that derivative.
    """

    value: Node
    grad: tuple[Node, ...]
    diag2: tuple[Node, ...]

    @property
    def dim(self) -> int:
        return len(self.grad)

    def __post_init__(self):
        if len(self.diag2) != len(self.grad):
            raise GraphError("jet grad and diag2 must have the same length")


def seed_jet(x: np.ndarray) -> Jet:
    """Seed a jet at coordinates ``x`` of shape (N, d).

    value = x, grad[i] = i-th unit basis row, diag2[i] = 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise GraphError(f"seed_jet expects (N, d) coordinates, got shape {x.shape}")
    n, d = x.shape
    grad, diag2 = [], []
    for i in range(d):
        e = np.zeros((n, d))
        e[:, i] = 1.0
        grad.append(constant(e))
        diag2.append(constant(np.zeros((n, d))))
    return Jet(constant(x), tuple(grad), tuple(diag2))


def _check_dims(jets: tuple[Jet, ...]) -> int:
    dims = {j.dim for j in jets}
    if len(dims) != 1:
        raise GraphError(f"jet inputs disagree on coordinate dimension: {sorted(dims)}")
    return dims.pop()


def jet_add(a: Jet, b: Jet) -> Jet:
    _check_dims((a, b))
    return Jet(
        add(a.value, b.value),
        tuple(add(ga, gb) for ga, gb in zip(a.grad, b.grad)),
        tuple(add(da, db) for da, db in zip(a.diag2, b.diag2)),
    )


def jet_mul(a: Jet, b: Jet) -> Jet:
    # (fg)'' = f''g + 2 f'g' + fg'' per coordinate
    _check_dims((a, b))
    grad = tuple(add(mul(ga, b.value), mul(a.value, gb)) for ga, gb in zip(a.grad, b.grad))
    diag2 = tuple(
        add(add(mul(da, b.value), mul(constant(2.0), mul(ga, gb))), mul(a.value, db))
        for ga, gb, da, db in zip(a.grad, b.grad, a.diag2, b.diag2)
    )
    return Jet(mul(a.value, b.value), grad, diag2)


def _jet_unary(j: Jet, value: Node, d1: Node, d2: Node) -> Jet:
    # chain rule: u' = h'(f) f',  u'' = h''(f) (f')^2 + h'(f) f''
    grad = tuple(mul(d1, g) for g in j.grad)
    diag2 = tuple(add(mul(d2, square(g)), mul(d1, d)) for g, d in zip(j.grad, j.diag2))
    return Jet(value, grad, diag2)


def jet_tanh(j: Jet) -> Jet:
    t = tanh(j.value)
    d1 = sub(1.0, square(t))          # 1 - t^2
    d2 = mul(-2.0, mul(t, d1))        # -2 t (1 - t^2)
    return _jet_unary(j, t, d1, d2)


def jet_sin(j: Jet) -> Jet:
    return _jet_unary(j, sin(j.value), cos(j.value), neg(sin(j.value)))


def jet_square(j: Jet) -> Jet:
    return _jet_unary(j, square(j.value), mul(2.0, j.value), constant(2.0))


def jet_affine(j: Jet, w: Node, b: Node) -> Jet:
    # affine maps commute with differentiation: derivative channels skip the bias
    return Jet(
        affine(j.value, w, b),
        tuple(linear(g, w) for g in j.grad),
        tuple(linear(d, w) for d in j.diag2),
    )


def jet_dense(j: Jet, w: Node, b: Node) -> Jet:
    return Jet(
        dense(j.value, w, b),
        tuple(dense(g, w) for g in j.grad),
        tuple(dense(d, w) for d in j.diag2),
    )


_JET_OPS = {
    "add": jet_add,
    "mul": jet_mul,
    "tanh": jet_tanh,
    "sin": jet_sin,
    "square": jet_square,
    "affine": jet_affine,
}


def jet_apply(op: str, *inputs, **params) -> Jet:
    """Apply a named elementwise/affine op to jets with full chain rule."""
    if op not in _JET_OPS:
        raise GraphError(f"unsupported jet op {op!r}; known: {sorted(_JET_OPS)}")
    _check_dims(tuple(j for j in inputs if isinstance(j, Jet)))
    return _JET_OPS[op](*inputs, **params)
