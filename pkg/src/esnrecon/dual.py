"""First-order dual-number arithmetic: an independent forward-mode
derivative oracle for checking the closed-form reservoir tangents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Dual:
    """Value/tangent pair v + t*eps. Both parts may be scalars or arrays."""

    value: np.ndarray
    tangent: np.ndarray

    def __add__(self, other: "Dual") -> "Dual":
        return Dual(self.value + other.value, self.tangent + other.tangent)

    def __mul__(self, other: "Dual") -> "Dual":
        return Dual(self.value * other.value,
                    self.value * other.tangent + self.tangent * other.value)


def dual_add(a: Dual, b: Dual) -> Dual:
    return a + b


def dual_mul(a: Dual, b: Dual) -> Dual:
    return a * b


def dual_scale(c: float, a: Dual) -> Dual:
    return Dual(c * a.value, c * a.tangent)


def dual_tanh(a: Dual) -> Dual:
    v = np.tanh(a.value)
    return Dual(v, a.tangent * (1.0 - v * v))


def dual_matvec(m, a: Dual) -> Dual:
    # Matrix of plain numbers applied to a dual vector: linear in both parts.
    return Dual(m @ a.value, m @ a.tangent)


def reservoir_step_dual(weights, r_prev: Dual, x: Dual) -> Dual:
    """One reservoir update evaluated in dual arithmetic.

    ``weights`` is an EsnWeights instance; tangents of ``x`` and ``r_prev``
    seed the directional derivative. The bias input is constant in time, so
    it carries a zero tangent. Mirrors the plain update's operation order so
    the value part matches it bitwise.
    """
    n_x = weights.w_in.shape[1] - 1
    if x.value.shape[0] != n_x or r_prev.value.shape[0] != weights.w.shape[0]:
        raise ValueError("input or state dimension does not match weights")
    xb = Dual(np.concatenate([x.value, [weights.b_in]]),
              np.concatenate([x.tangent, [0.0]]))
    pre = dual_matvec(weights.w_in, xb) + dual_matvec(weights.w, r_prev)
    return dual_tanh(pre)
