"""Wirtinger calculus, finite-difference dbar, and discrete Hoelder norms.

Convention: d/dzbar = (d/dx + i d/dy) / 2, and real vectors are ordered
(x_1..x_n, y_1..y_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import DefiningExpr

__all__ = [
    "LeviData",
    "HolderEstimate",
    "wirtinger_derivatives",
    "real_hessian_from_wirtinger",
    "real_gradient",
    "min_levi_eigenvalue",
    "dbar_fd",
    "holder_seminorm",
    "family_norm",
    "MAX_HOLDER_SAMPLES",
]

MAX_HOLDER_SAMPLES = 4000


@dataclass
class LeviData:
    grad_z: np.ndarray  # (..., n)   r_{z_j}
    levi: np.ndarray  # (..., n, n) r_{z_j zbar_k}, Hermitian
    holo_hess: np.ndarray  # (..., n, n) r_{z_j z_k}, symmetric
    real_hess: np.ndarray  # (..., 2n, 2n)
    value: np.ndarray | float = 0.0


@dataclass
class HolderEstimate:
    alpha: float
    seminorm: float
    sup_norm: float
    witness_pair: tuple | None


def real_hessian_from_wirtinger(levi, holo):
    """Real Hessian in (x, y) from the Levi matrix L and holomorphic Hessian H.

    r_xx = 2 Re(H + L), r_xy = -2 Im H + 2 Im L, r_yy = -2 Re H + 2 Re L.
    """
    rxx = 2.0 * np.real(holo + levi)
    rxy = -2.0 * np.imag(holo) + 2.0 * np.imag(levi)
    ryy = -2.0 * np.real(holo) + 2.0 * np.real(levi)
    top = np.concatenate([rxx, rxy], axis=-1)
    bot = np.concatenate([np.swapaxes(rxy, -1, -2), ryy], axis=-1)
    hess = np.concatenate([top, bot], axis=-2)
    return 0.5 * (hess + np.swapaxes(hess, -1, -2))


def real_gradient(grad_z):
    """(r_x, r_y) = (2 Re r_z, -2 Im r_z)."""
    return np.concatenate([2.0 * np.real(grad_z), -2.0 * np.imag(grad_z)], axis=-1)


def wirtinger_derivatives(expr: DefiningExpr, z, t=0.0) -> LeviData:
    """Exact first and second Wirtinger derivatives of r at ``z`` (shape (..., n))."""
    n = expr.n
    z = np.asarray(z, dtype=complex)
    vals = expr.compiled_derivatives("second")(z, t)
    shape = np.broadcast_shapes(z.shape[:-1], np.shape(t))
    grad = np.stack(vals[1 : 1 + n], axis=-1)
    levi = np.stack(vals[1 + n : 1 + n + n * n], axis=-1).reshape(shape + (n, n))
    holo = np.stack(vals[1 + n + n * n :], axis=-1).reshape(shape + (n, n))
    # symmetrise: exact up to roundoff, enforced by construction
    levi = 0.5 * (levi + np.conj(np.swapaxes(levi, -1, -2)))
    holo = 0.5 * (holo + np.swapaxes(holo, -1, -2))
    return LeviData(grad, levi, holo, real_hessian_from_wirtinger(levi, holo), vals[0].real)


def min_levi_eigenvalue(family, points, t) -> float:
    """Smallest Levi-form eigenvalue over the sample ``points`` (the lambda_0 estimate)."""
    points = np.asarray(points, dtype=complex)
    if points.size == 0:
        raise ValueError("region sample is empty")
    data = wirtinger_derivatives(family.r, points, t)
    return float(np.min(np.linalg.eigvalsh(data.levi)))


def dbar_fd(u, z, h: float = 1e-3, inside=None):
    """Central-difference dbar of a scalar callable ``u`` at points ``z``.

    Returns the coefficients du/dzbar_j with shape (..., n).  ``u`` must accept
    arrays of points (..., n).  If ``inside`` is given it is checked on the
    whole stencil and a ValueError is raised when the stencil leaves the domain.
    """
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1]
    eye = np.eye(n)
    offsets = np.concatenate([h * eye, -h * eye, 1j * h * eye, -1j * h * eye])  # (4n, n)
    stencil = z[..., None, :] + offsets
    if inside is not None and not np.all(inside(stencil)):
        raise ValueError("finite-difference stencil leaves the domain")
    vals = np.asarray(u(stencil))
    dx = (vals[..., :n] - vals[..., n : 2 * n]) / (2 * h)
    dy = (vals[..., 2 * n : 3 * n] - vals[..., 3 * n :]) / (2 * h)
    return 0.5 * (dx + 1j * dy)


def _subsample(x, v, cap):
    if x.shape[0] <= cap:
        return x, v
    idx = np.linspace(0, x.shape[0] - 1, cap).round().astype(int)
    return x[idx], v[idx]


def holder_seminorm(points, values, alpha: float, cap: int = MAX_HOLDER_SAMPLES, chunk: int = 512) -> HolderEstimate:
    """Max over sampled pairs of |u(x) - u(y)| / |x - y|^alpha (brute-force pair scan).

    ``points`` are real coordinates (N, d) or (N,), or complex points (N, n)
    which are measured with the Euclidean norm of C^n.  Beyond ``cap``
    samples an evenly spaced deterministic subsample is scanned.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    x = np.asarray(points)
    if np.iscomplexobj(x):
        x = np.concatenate([x.real, x.imag], axis=-1)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    v = np.asarray(values)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    x, v = _subsample(x, v, cap)
    v = v.reshape(x.shape[0], -1)
    best, pair = 0.0, None
    for s in range(0, x.shape[0], chunk):
        xs, vs = x[s : s + chunk], v[s : s + chunk]
        d = np.linalg.norm(xs[:, None, :] - x[None, :, :], axis=-1)
        dv = np.linalg.norm(vs[:, None, :] - v[None, :, :], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, dv / d**alpha, 0.0)
        k = int(np.argmax(q))
        if q.flat[k] > best:
            i, j = divmod(k, x.shape[0])
            best, pair = float(q.flat[k]), (x[s + i], x[j])
    return HolderEstimate(alpha, best, float(np.max(np.abs(v))), pair)


def _spatial_norm(grid_axes, u, a: float) -> float:
    """Discrete |u|_a on a tensor grid: sup norms of FD derivatives up to floor(a)
    plus the Hoelder quotient of the top-order derivatives for the fractional part."""
    k = int(math.floor(a + 1e-12))
    frac = a - k
    pts = np.stack(np.meshgrid(*grid_axes, indexing="ij"), axis=-1).reshape(-1, len(grid_axes))
    total = float(np.max(np.abs(u)))
    layer = [u]
    for _ in range(k):
        nxt = []
        for w in layer:
            for ax, g in enumerate(grid_axes):
                nxt.append(np.gradient(w, g, axis=ax, edge_order=2))
        layer = nxt
        total = max(total, max(float(np.max(np.abs(w))) for w in layer))
    if frac > 1e-12:
        for w in layer:
            total = max(total, holder_seminorm(pts, w.reshape(-1), frac).seminorm)
    return total


def family_norm(grid_axes, t_grid, u, a: float, j: int) -> float:
    """Discrete ||u||_{a,j} = max_{i<=j} |d_t^i u|_{a-i}.

    ``u`` has shape (len(t_grid), *grid shape).  Parameter derivatives are
    central differences on the t-grid; a negative spatial order a - i is
    treated as the sup norm (order 0).
    """
    u = np.asarray(u)
    t_grid = np.asarray(t_grid, dtype=float)
    if j >= t_grid.size:
        raise ValueError(f"a t-grid of {t_grid.size} points cannot resolve {j} parameter derivatives")
    best = 0.0
    w = u
    for i in range(j + 1):
        if i > 0:
            w = np.gradient(w, t_grid, axis=0, edge_order=2 if w.shape[0] > 2 else 1)
        order = max(a - i, 0.0)
        for s in range(w.shape[0]):
            best = max(best, _spatial_norm(grid_axes, w[s], order))
    return best
