"""Reverse-mode tape with forward-mode input tangents."""

from . import smallmat
from .dual import Dual2, cos, exp, leaky_relu, log, relu, sigmoid, sin, softplus, sqrt
from .jacobian import forward_dual, forward_with_jacobian, grad_norm, gradient, jacobian_entries
from .tape import Tape, Var, concatenate, stack, where

__all__ = [
    "Dual2",
    "Tape",
    "Var",
    "concatenate",
    "cos",
    "exp",
    "forward_dual",
    "forward_with_jacobian",
    "grad_norm",
    "gradient",
    "jacobian_entries",
    "leaky_relu",
    "log",
    "relu",
    "sigmoid",
    "sin",
    "smallmat",
    "softplus",
    "sqrt",
    "stack",
    "where",
]
