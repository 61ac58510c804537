"""Input-Jacobians of neural maps and parameter gradients of taped losses."""

from __future__ import annotations

import numpy as np

from ..errors import GradientError
from .dual import Dual2
from .tape import Var


def forward_dual(nmap, points, layers=None):
    """Evaluate ``nmap`` on ``points`` (B, 2) carrying tangents along u and v.

    Returns a :class:`Dual2` whose value is (B, n) and whose tangents are the
    two columns of the Jacobian, each (B, n). With taped ``layers`` every
    component is a Var.
    """
    if isinstance(points, Dual2):
        return nmap.forward(points, layers)
    return nmap.forward(Dual2.seed(points), layers)


def jacobian_entries(out):
    """n x 2 nested list of per-sample Jacobian entries from a Dual2 output."""
    n = out.value.shape[-1]
    return [[out.du[:, i], out.dv[:, i]] for i in range(n)]


def forward_with_jacobian(nmap, p, layers=None):
    """Image and exact Jacobian of ``nmap`` at ``p``.

    ``p`` is a single point (2,) or a batch (B, 2). Without ``layers`` the
    result is numeric: image (n,) / (B, n) and Jacobian (n, 2) / (B, n, 2).
    With taped ``layers`` the result is ``(image Var, nested n x 2 list of
    Vars)`` and stays differentiable w.r.t. the parameters.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    out = forward_dual(nmap, np.atleast_2d(pts), layers)
    if layers is not None:
        return out.value, jacobian_entries(out)
    jac = np.stack([out.du, out.dv], axis=-1)
    if single:
        return out.value[0], jac[0]
    return out.value, jac


def gradient(loss: Var, params) -> np.ndarray:
    """Flat gradient of a scalar taped ``loss`` w.r.t. ``params``.

    ``params`` is a sequence of parameter Vars (or of ``(W, b)`` pairs as
    returned by ``NeuralMap.bind``). Parameters the loss does not depend on
    get zero entries.
    """
    flat_params = []
    for item in params:
        if isinstance(item, (tuple, list)):
            flat_params.extend(item)
        else:
            flat_params.append(item)
    value = np.asarray(loss.value)
    if value.size != 1:
        raise GradientError(f"loss must be scalar, got shape {value.shape}")
    if not np.isfinite(value).all():
        raise GradientError("loss is not finite")
    grads = loss.tape.backward(loss)
    parts = []
    for prm in flat_params:
        g = grads[prm.index] if prm.index < len(grads) and prm.tape is loss.tape else None
        parts.append(np.zeros(prm.value.size) if g is None else np.asarray(g).ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def grad_norm(g) -> float:
    return float(np.linalg.norm(np.asarray(g, dtype=np.float64)))
