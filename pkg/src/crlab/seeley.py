"""Truncated Seeley extension across a hyperplane, off a domain, and in t.

With b_k = -2^k (k = 0..N-1) and a_k solving sum_k a_k b_k^m = 1 for
m = 0..N-1, the extension of f from s >= 0 is

    Ef(s) = f(s)                               s >= 0
    Ef(s) = sum_k a_k phi(b_k s) f(b_k s)      s < 0

where phi = 1 on s < 1 and 0 on s > 2.  Polynomials of degree < N are
reproduced exactly while every phi(b_k s) is 1, i.e. for -1/2^{N-1} <= s < 0.

The a_k have the closed Lagrange form prod_{j != k} (1 - b_j) / (b_k - b_j),
evaluated in exact rational arithmetic.  Rounding the a_k to floats leaves a
moment residual that grows quickly with N (about 7e-11 at N = 7 and 2e-9 at
N = 8), so N >= 8 is refused with that residual in the message.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .smooth import seeley_phi

__all__ = [
    "SeeleySequences",
    "SeeleyConditioningError",
    "make_seeley_sequences",
    "moment_residual",
    "seeley_extend_halfspace",
    "extend_from_domain",
    "extend_in_t",
    "DEFAULT_N",
    "MOMENT_TOL",
]

DEFAULT_N = 6
MOMENT_TOL = 1e-9


class SeeleyConditioningError(ValueError):
    def __init__(self, N, residual):
        super().__init__(
            f"Seeley sequences with N={N} lose the moment conditions in double precision "
            f"(residual {residual:.3e} > {MOMENT_TOL:g})"
        )
        self.N = N
        self.residual = residual


@dataclass(frozen=True)
class SeeleySequences:
    N: int
    b: np.ndarray
    a: np.ndarray
    residual: float
    sign_condition: bool

    def phi(self, s, order: int = 0):
        return seeley_phi(s, order)


def _exact_coefficients(N: int) -> list[Fraction]:
    b = [Fraction(-(2**k)) for k in range(N)]
    a = []
    for k in range(N):
        num = Fraction(1)
        for j in range(N):
            if j != k:
                num *= (1 - b[j]) / (b[k] - b[j])
        a.append(num)
    return a


def moment_residual(a, b) -> float:
    """max_m |sum_k a_k b_k^m - 1| over m < N, computed exactly from the floats."""
    N = len(a)
    fa = [Fraction(float(x)) for x in a]
    fb = [Fraction(float(x)) for x in b]
    worst = Fraction(0)
    for m in range(N):
        s = sum(ak * bk**m for ak, bk in zip(fa, fb)) - 1
        worst = max(worst, abs(s))
    return float(worst)


def make_seeley_sequences(N: int = DEFAULT_N) -> SeeleySequences:
    if N < 1:
        raise ValueError("N must be >= 1")
    exact = _exact_coefficients(N)
    a = np.array([float(x) for x in exact])
    b = -(2.0 ** np.arange(N))
    resid = moment_residual(a, b)
    if resid > MOMENT_TOL:
        raise SeeleyConditioningError(N, resid)
    sign_ok = bool(np.all((-1.0) ** np.arange(N) * a > 0))
    return SeeleySequences(N, b, a, resid, sign_ok)


def seeley_extend_halfspace(f, seq: SeeleySequences):
    """Extend a callable defined on s >= 0 to all real s."""

    def ext(s):
        s = np.asarray(s, dtype=float)
        sn = np.minimum(s, 0.0)
        acc = 0.0
        for ak, bk in zip(seq.a, seq.b):
            arg = bk * sn
            w = seq.phi(arg)
            acc = acc + ak * w * np.where(w != 0, f(np.where(w != 0, arg, 0.0)), 0.0)
        return np.where(s >= 0, f(np.maximum(s, 0.0)), acc)

    return ext


def collar_profile(sigma, width):
    """Cutoff in the outer collar: 1 for sigma <= width/2, 0 for sigma >= width."""
    from .smooth import smooth_step

    return smooth_step(2.0 - 2.0 * np.asarray(sigma) / width)


def extend_from_domain(family, f, t, seq: SeeleySequences | None = None, collar_width: float = 0.2, length: float | None = None):
    """Extension of ``f`` from the closure of a star-shaped D^t.

    Collar coordinates about the family center c: a point c + rho omega with
    rho > R(omega) has outer depth sigma = rho - R(omega).  With length scale
    l (default min(R)/2) the Seeley sum evaluates f at inner depth
    2^k sigma, weighted by phi(2^k sigma / l), and the result is multiplied
    by a cutoff vanishing for sigma >= collar_width.  Inside D^t the extension
    is f itself.  ``f`` maps points (..., n) to values (..., ) or (..., m).
    """
    seq = make_seeley_sequences() if seq is None else seq
    radial = family.radial_function(t)
    if length is None:
        probe = radial(_probe_dirs(family.n))
        length = 0.5 * float(np.min(probe))
    c = family.center

    def ext(z):
        z = np.asarray(z, dtype=complex)
        d = z - c
        rho = np.linalg.norm(d, axis=-1)
        omega = d / np.where(rho > 0, rho, 1.0)[..., None]
        omega = np.where((rho > 0)[..., None], omega, np.eye(family.n)[0])
        inside = family.raw(z, t) <= 0
        R = np.where(inside, rho, 0.0)
        outside = ~inside
        if np.any(outside):
            R[outside] = radial(omega[outside])
        return _collar_sum(f, c, omega, R, rho - R, inside, seq, length, collar_width, z)

    ext.length = length
    ext.collar_width = collar_width
    return ext


def extension_in_collar(f, family, t, seq, length, collar_width, sigma, omega, R):
    """Evaluate the collar extension at precomputed collar coordinates."""
    c = family.center
    z = c + (R + sigma)[..., None] * omega
    inside = sigma <= 0
    return _collar_sum(f, c, omega, R, sigma, inside, seq, length, collar_width, z)


def _collar_sum(f, c, omega, R, sigma, inside, seq, length, collar_width, z):
    base = np.asarray(f(np.where(inside[..., None], z, c)))
    out = np.where(inside.reshape(inside.shape + (1,) * (base.ndim - inside.ndim)), base, 0.0 * base)
    outside = (~inside) & (sigma < collar_width)
    if not np.any(outside):
        return out
    sig = sigma[outside]
    om = omega[outside]
    Ro = R[outside]
    acc = 0.0
    for ak, bk in zip(seq.a, seq.b):
        depth = -bk * sig  # 2^k sigma
        w = seq.phi(depth / length)
        pts = c + np.maximum(Ro - depth, 0.0)[:, None] * om
        vals = np.asarray(f(pts))
        wb = w.reshape(w.shape + (1,) * (vals.ndim - 1))
        acc = acc + ak * wb * vals
    cut = collar_profile(sig, collar_width)
    out[outside] = acc * cut.reshape(cut.shape + (1,) * (np.ndim(acc) - 1))
    return out


def _probe_dirs(n):
    from .domain import sphere_directions

    return sphere_directions(n, 8)


def extend_in_t(f, seq: SeeleySequences | None = None, t_range=(0.0, 1.0)):
    """Extend a family f(t, ...) from t in [t0, t1] to a neighbourhood of it.

    The half-space Seeley sum is applied with s = t - t0 below the range and
    s = t1 - t above it, with the unit length scale rescaled to the range
    width so every evaluation stays inside [t0, t1].
    """
    seq = make_seeley_sequences() if seq is None else seq
    t0, t1 = map(float, t_range)
    ell = 0.5 * (t1 - t0)

    def ext(t, *args):
        t = float(t)
        if t0 <= t <= t1:
            return f(t, *args)
        s = (t - t0) / ell if t < t0 else (t1 - t) / ell
        acc = 0.0
        for ak, bk in zip(seq.a, seq.b):
            arg = bk * s
            w = float(seq.phi(arg))
            if w == 0.0:
                continue
            tt = t0 + ell * arg if t < t0 else t1 - ell * arg
            acc = acc + ak * w * np.asarray(f(tt, *args))
        return acc

    return ext
