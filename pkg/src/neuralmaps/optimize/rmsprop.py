"""RMSProp with heavy-ball momentum and a cosine schedule with warm restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WarmRestartSchedule:
    """Cosine annealing from ``base_lr`` to ``eta_min``; period ``t0`` grows by ``t_mult``."""

    base_lr: float = 1e-4
    t0: int = 1000
    t_mult: float = 2.0
    eta_min: float = 1e-6

    def phase(self, step):
        """(cycle index, position in cycle, cycle length) for a step count."""
        t_i, cycle, start = float(self.t0), 0, 0.0
        while step >= start + t_i:
            start += t_i
            t_i *= self.t_mult
            cycle += 1
        return cycle, step - start, t_i

    def lr(self, step):
        _, t_cur, t_i = self.phase(step)
        return self.eta_min + 0.5 * (self.base_lr - self.eta_min) * (1.0 + math.cos(math.pi * t_cur / t_i))


@dataclass
class RMSPropState:
    """Per-parameter running mean of squared gradients and momentum buffer."""

    square_avg: np.ndarray
    momentum_buf: np.ndarray
    step: int = 0
    alpha: float = 0.99
    momentum: float = 0.9
    eps: float = 1e-8
    bias_correction: bool = True

    @classmethod
    def zeros(cls, n, alpha=0.99, momentum=0.9, eps=1e-8, bias_correction=True):
        return cls(np.zeros(n), np.zeros(n), 0, alpha, momentum, eps, bias_correction)


def rmsprop_step(state: RMSPropState, params, grad, schedule: WarmRestartSchedule | None = None):
    """One update; returns the new parameter vector and mutates ``state``.

    v <- alpha v + (1 - alpha) g^2
    b <- momentum b + g / (sqrt(v_hat) + eps)
    params <- params - lr(step) b

    ``v_hat`` is ``v / (1 - alpha^t)`` with bias correction, else ``v``.
    Without it the first steps are inflated by up to ``1/sqrt(1 - alpha)``.
    """
    schedule = schedule or WarmRestartSchedule()
    grad = np.asarray(grad, dtype=np.float64)
    state.square_avg *= state.alpha
    state.square_avg += (1.0 - state.alpha) * grad * grad
    state.step += 1
    v = state.square_avg
    if state.bias_correction:
        v = v / (1.0 - state.alpha**state.step)
    state.momentum_buf *= state.momentum
    state.momentum_buf += grad / (np.sqrt(v) + state.eps)
    lr = schedule.lr(state.step - 1)
    return np.asarray(params, dtype=np.float64) - lr * state.momentum_buf
