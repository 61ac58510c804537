"""Forward-mode tangents along the two axes of the parameter domain.

A :class:`Dual2` carries a value and its derivatives along ``u`` and ``v``.
The three components may be floats, numpy arrays or taped :class:`Var`
nodes. In the last case the tangents themselves live on the tape, so a loss
built from input-Jacobians can be differentiated with respect to network
parameters by an ordinary reverse sweep.

The functions at the bottom (``exp``, ``softplus``...) dispatch on the
argument type so the same model code runs on plain arrays, on Vars and on
Dual2 numbers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tape import LEAKY_SLOPE, Var


def _raw(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


class Dual2:
    """Value plus directional derivatives along the two input axes."""

    __array_ufunc__ = None
    __slots__ = ("value", "du", "dv")

    def __init__(self, value, du=0.0, dv=0.0):
        self.value = value
        self.du = du
        self.dv = dv

    @classmethod
    def seed(cls, points):
        """Lift a batch of 2D points ``(..., 2)`` into Dual2 with unit tangents."""
        points = np.asarray(points, dtype=np.float64)
        du = np.zeros_like(points)
        dv = np.zeros_like(points)
        du[..., 0] = 1.0
        dv[..., 1] = 1.0
        return cls(points, du, dv)

    @property
    def tangents(self):
        return self.du, self.dv

    def __repr__(self):
        return f"Dual2({self.value!r}, du={self.du!r}, dv={self.dv!r})"

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.value + other.value, self.du + other.du, self.dv + other.dv)
        return Dual2(self.value + other, self.du, self.dv)

    __radd__ = __add__

    def __neg__(self):
        return Dual2(-self.value, -self.du, -self.dv)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual2):
            a, b = self.value, other.value
            return Dual2(a * b, self.du * b + a * other.du, self.dv * b + a * other.dv)
        return Dual2(self.value * other, self.du * other, self.dv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            inv = 1.0 / other.value
            out = self.value * inv
            return Dual2(out, (self.du - out * other.du) * inv, (self.dv - out * other.dv) * inv)
        return Dual2(self.value / other, self.du / other, self.dv / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.value
        out = other * inv
        scale = -out * inv
        return Dual2(out, scale * self.du, scale * self.dv)

    def __pow__(self, k):
        k = float(k)
        d = k * self.value ** (k - 1.0)
        return Dual2(self.value**k, d * self.du, d * self.dv)

    def __matmul__(self, other):
        # right operand is constant w.r.t. the input (a weight matrix)
        return Dual2(self.value @ other, self.du @ other, self.dv @ other)

    def __getitem__(self, key):
        return Dual2(self.value[key], self.du[key], self.dv[key])

    def _chain(self, out, deriv):
        return Dual2(out, deriv * self.du, deriv * self.dv)

    def exp(self):
        out = exp(self.value)
        return self._chain(out, out)

    def log(self):
        return self._chain(log(self.value), 1.0 / self.value)

    def sqrt(self):
        out = sqrt(self.value)
        return self._chain(out, 0.5 / out)

    def sin(self):
        return self._chain(sin(self.value), cos(self.value))

    def cos(self):
        return self._chain(cos(self.value), -sin(self.value))

    def softplus(self):
        return self._chain(softplus(self.value), sigmoid(self.value))

    def sigmoid(self):
        s = sigmoid(self.value)
        return self._chain(s, s * (1.0 - s))

    def relu(self):
        mask = (_raw(self.value) > 0).astype(np.float64)
        return self._chain(relu(self.value), mask)

    def leaky_relu(self, slope=LEAKY_SLOPE):
        scale = np.where(_raw(self.value) > 0, 1.0, slope)
        return self._chain(leaky_relu(self.value, slope), scale)


def _dispatch(name, npfn):
    def fn(x):
        if isinstance(x, (Var, Dual2)):
            return getattr(x, name)()
        return npfn(np.asarray(x, dtype=np.float64))

    fn.__name__ = name
    return fn


exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sqrt = _dispatch("sqrt", np.sqrt)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
sigmoid = _dispatch("sigmoid", expit)
relu = _dispatch("relu", lambda a: np.maximum(a, 0.0))


def softplus(x):
    """log(1 + exp(x)), computed without overflow."""
    if isinstance(x, (Var, Dual2)):
        return x.softplus()
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def leaky_relu(x, slope=LEAKY_SLOPE):
    if isinstance(x, (Var, Dual2)):
        return x.leaky_relu(slope)
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, slope * x)


ACTIVATIONS = {"softplus": softplus, "relu": relu, "leaky_relu": leaky_relu}
