"""Smooth cutoff profiles with closed-form derivatives.

All profiles are real functions of a real argument.  ``order`` selects the
derivative; orders beyond the implemented range raise ``ValueError``.

``smooth_step``  0 on (-inf, 0], 1 on [1, inf), C^inf and monotone between.
``chi1``         plateau bump: 1 on |s| < 1, 0 on |s| > 2.
``seeley_phi``   1 on s < 1, 0 on s > 2.
``chi0``         convex, vanishing exactly on (-inf, 1]; chi0'' = exp(-1/(s-1)).
"""

from __future__ import annotations

import numpy as np
from scipy.special import exp1

_STEP_MAX_ORDER = 3
_CHI0_MAX_ORDER = 4


def _logistic(q):
    return 0.5 * (1.0 + np.tanh(0.5 * q))


def smooth_step(x, order: int = 0):
    if order < 0 or order > _STEP_MAX_ORDER:
        raise ValueError(f"smooth_step derivatives implemented up to order {_STEP_MAX_ORDER}")
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    # h = logistic(q) with q = 1/(1-x) - 1/x; q = -inf near 0 is harmless
    with np.errstate(over="ignore", divide="ignore"):
        q = 1.0 / (1.0 - xi) - 1.0 / xi
    s = _logistic(q)
    if order == 0:
        return np.where(x >= 1.0, 1.0, np.where(inside, s, 0.0))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        q1 = 1.0 / (1.0 - xi) ** 2 + 1.0 / xi**2
        s1 = s * (1.0 - s)
        if order == 1:
            val = s1 * q1
        else:
            q2 = 2.0 / (1.0 - xi) ** 3 - 2.0 / xi**3
            s2 = s1 * (1.0 - 2.0 * s)
            if order == 2:
                val = s2 * q1**2 + s1 * q2
            else:
                q3 = 6.0 / (1.0 - xi) ** 4 + 6.0 / xi**4
                s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s)
                val = s3 * q1**3 + 3.0 * s2 * q1 * q2 + s1 * q3
    # products like s1*q1 are 0*inf near the ends; the true limit is 0
    val = np.where(np.isfinite(val), val, 0.0)
    return np.where(inside, val, 0.0)


def chi1(s, order: int = 0):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    sign = np.where(s >= 0.0, -1.0, 1.0)
    return sign**order * smooth_step(2.0 - a, order)


def seeley_phi(s, order: int = 0):
    s = np.asarray(s, dtype=float)
    return (-1.0) ** order * smooth_step(2.0 - s, order)


def chi0(s, order: int = 0):
    if order < 0 or order > _CHI0_MAX_ORDER:
        raise ValueError(f"chi0 derivatives implemented up to order {_CHI0_MAX_ORDER}")
    s = np.asarray(s, dtype=float)
    pos = s > 1.0
    x = np.where(pos, s - 1.0, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        e = np.exp(-1.0 / x)
        if order == 0:
            val = 0.5 * e * (x * x + x) - (x + 0.5) * exp1(1.0 / x)
        elif order == 1:
            val = x * e - exp1(1.0 / x)
        elif order == 2:
            val = e
        elif order == 3:
            val = e / x**2
        else:
            val = e * (1.0 / x**4 - 2.0 / x**3)
    return np.where(pos, val, 0.0)


SMOOTH_FUNCTIONS = {
    "chi0": (chi0, _CHI0_MAX_ORDER),
    "chi1": (chi1, _STEP_MAX_ORDER),
    "phi": (seeley_phi, _STEP_MAX_ORDER),
    "step": (smooth_step, _STEP_MAX_ORDER),
}
