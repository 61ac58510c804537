"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every primitive applied to :class:`Var` nodes in
evaluation order. Each node keeps its parents together with a function that
maps the upstream gradient to the parent's contribution (a vector-Jacobian
product). The reverse sweep walks the record backwards once.

Values are float64 arrays. Broadcasting follows numpy; gradients are summed
back to the operand shape.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import GradientError

LEAKY_SLOPE = 0.01


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Ordered record of primitive operations.

    Nodes are appended as they are created, so the list order is a valid
    topological order and the backward pass is a single reversed loop.
    """

    def __init__(self):
        self.nodes = []
        self.params = []

    def __len__(self):
        return len(self.nodes)

    def param(self, value, name=None):
        """Register a trainable slot and return its leaf node."""
        var = self._record(np.array(value, dtype=np.float64), ())
        var.name = name
        self.params.append(var)
        return var

    def constant(self, value):
        return self._record(np.asarray(value, dtype=np.float64), ())

    def _record(self, value, parents):
        return Var(value, self, parents)

    def backward(self, output, seed=None):
        """Return per-node gradients of ``output`` (``None`` where unreached)."""
        if output.tape is not self:
            raise GradientError("output was recorded on a different tape")
        grads = [None] * (output.index + 1)
        if seed is None:
            seed = np.ones_like(output.value)
        grads[output.index] = np.asarray(seed, dtype=np.float64)
        nodes = self.nodes
        for i in range(output.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            for parent, vjp in nodes[i].parents:
                contrib = vjp(g)
                j = parent.index
                if grads[j] is None:
                    grads[j] = contrib
                else:
                    grads[j] = grads[j] + contrib
        return grads


def _split(x):
    """(raw value, node or None) for a Var or a constant operand."""
    if isinstance(x, Var):
        return x.value, x
    return np.asarray(x, dtype=np.float64), None


def _tape_of(*nodes):
    tape = None
    for n in nodes:
        if n is None:
            continue
        if tape is None:
            tape = n.tape
        elif n.tape is not tape:
            raise GradientError("operands belong to different tapes")
    return tape


class Var:
    """A node on a :class:`Tape` holding a float64 array."""

    # make numpy defer to our reflected operators instead of building object arrays
    __array_ufunc__ = None

    __slots__ = ("value", "tape", "index", "parents", "name")

    def __init__(self, value, tape=None, parents=()):
        self.tape = tape if tape is not None else Tape()
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.name = None
        self.index = len(self.tape.nodes)
        self.tape.nodes.append(self)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, index={self.index})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        b, bn = _split(other)
        a = self.value
        out = a + b
        parents = [(self, lambda g: _unbroadcast(g, a.shape))]
        if bn is not None:
            _tape_of(self, bn)
            parents.append((bn, lambda g: _unbroadcast(g, b.shape)))
        return self.tape._record(out, tuple(parents))

    __radd__ = __add__

    def __neg__(self):
        return self.tape._record(-self.value, ((self, lambda g: -g),))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        b, bn = _split(other)
        a = self.value
        parents = [(self, lambda g: _unbroadcast(g * b, a.shape))]
        if bn is not None:
            _tape_of(self, bn)
            parents.append((bn, lambda g: _unbroadcast(g * a, b.shape)))
        return self.tape._record(a * b, tuple(parents))

    __rmul__ = __mul__

    def __truediv__(self, other):
        b, bn = _split(other)
        a = self.value
        out = a / b
        parents = [(self, lambda g: _unbroadcast(g / b, a.shape))]
        if bn is not None:
            _tape_of(self, bn)
            parents.append((bn, lambda g: _unbroadcast(-g * out / b, b.shape)))
        return self.tape._record(out, tuple(parents))

    def __rtruediv__(self, other):
        a = np.asarray(other, dtype=np.float64)
        b = self.value
        out = a / b
        return self.tape._record(out, ((self, lambda g: _unbroadcast(-g * out / b, b.shape)),))

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        a = self.value
        k = float(exponent)
        if k == 2.0:
            return self * self
        return self.tape._record(a**k, ((self, lambda g: g * k * a ** (k - 1.0)),))

    def __matmul__(self, other):
        b, bn = _split(other)
        a = self.value
        parents = [(self, lambda g: _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape))]
        if bn is not None:
            _tape_of(self, bn)
            parents.append((bn, lambda g: _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)))
        return self.tape._record(a @ b, tuple(parents))

    def __rmatmul__(self, other):
        a = np.asarray(other, dtype=np.float64)
        b = self.value
        return self.tape._record(
            a @ b, ((self, lambda g: _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)),)
        )

    def __getitem__(self, key):
        shape = self.value.shape
        parts = key if isinstance(key, tuple) else (key,)
        basic = all(isinstance(k, (int, slice, type(Ellipsis))) for k in parts)

        def vjp(g):
            full = np.zeros(shape)
            if basic:
                full[key] = g
            else:
                np.add.at(full, key, g)
            return full

        return self.tape._record(self.value[key], ((self, vjp),))

    # -- reductions and reshaping ----------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.value.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return self.tape._record(self.value.sum(axis=axis, keepdims=keepdims), ((self, vjp),))

    def mean(self, axis=None, keepdims=False):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        old = self.value.shape
        return self.tape._record(self.value.reshape(*shape), ((self, lambda g: g.reshape(old)),))

    # -- elementwise functions -------------------------------------------

    def exp(self):
        out = np.exp(self.value)
        return self.tape._record(out, ((self, lambda g: g * out),))

    def log(self):
        a = self.value
        return self.tape._record(np.log(a), ((self, lambda g: g / a),))

    def sqrt(self):
        out = np.sqrt(self.value)
        return self.tape._record(out, ((self, lambda g: 0.5 * g / out),))

    def sin(self):
        a = self.value
        return self.tape._record(np.sin(a), ((self, lambda g: g * np.cos(a)),))

    def cos(self):
        a = self.value
        return self.tape._record(np.cos(a), ((self, lambda g: -g * np.sin(a)),))

    def abs(self):
        a = self.value
        return self.tape._record(np.abs(a), ((self, lambda g: g * np.sign(a)),))

    def softplus(self):
        a = self.value
        return self.tape._record(np.logaddexp(0.0, a), ((self, lambda g: g * expit(a)),))

    def sigmoid(self):
        out = expit(self.value)
        return self.tape._record(out, ((self, lambda g: g * out * (1.0 - out)),))

    def relu(self):
        mask = (self.value > 0).astype(np.float64)
        return self.tape._record(self.value * mask, ((self, lambda g: g * mask),))

    def leaky_relu(self, slope=LEAKY_SLOPE):
        scale = np.where(self.value > 0, 1.0, slope)
        return self.tape._record(self.value * scale, ((self, lambda g: g * scale),))


def where(cond, a, b):
    """Select elementwise; the condition is treated as a constant."""
    cond = np.asarray(cond, dtype=bool)
    av, an = _split(a)
    bv, bn = _split(b)
    tape = _tape_of(an, bn)
    out = np.where(cond, av, bv)
    if tape is None:
        return out
    parents = []
    if an is not None:
        parents.append((an, lambda g: _unbroadcast(np.where(cond, g, 0.0), av.shape)))
    if bn is not None:
        parents.append((bn, lambda g: _unbroadcast(np.where(cond, 0.0, g), bv.shape)))
    return tape._record(out, tuple(parents))


def stack(items, axis=-1):
    """Stack Vars and/or arrays along a new axis."""
    vals = [_split(x) for x in items]
    tape = _tape_of(*(n for _, n in vals))
    out = np.stack([v for v, _ in vals], axis=axis)
    if tape is None:
        return out
    parents = []
    for k, (v, n) in enumerate(vals):
        if n is not None:
            parents.append((n, lambda g, k=k, shape=v.shape: _unbroadcast(np.take(g, k, axis=axis), shape)))
    return tape._record(out, tuple(parents))


def concatenate(items, axis=-1):
    vals = [_split(x) for x in items]
    tape = _tape_of(*(n for _, n in vals))
    out = np.concatenate([v for v, _ in vals], axis=axis)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v, _ in vals])
    parents = []
    for k, (v, n) in enumerate(vals):
        if n is not None:
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(bounds[k], bounds[k + 1])
            parents.append((n, lambda g, sl=tuple(sl): g[sl]))
    return tape._record(out, tuple(parents))
