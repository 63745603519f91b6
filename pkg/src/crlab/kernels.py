"""Levi polynomials, support functions, Hefer maps and Cauchy-Fantappie kernels.

Kernel coefficients (n = 2, q = 1)
----------------------------------
With w = zeta - z, g0 = conj(w), g1 a Leray map, Phi0 = g0.w = |w|^2,
Phi1 = g1.w and omega^l = (2 pi i)^{-1} g^l.dw / Phi_l, the forms are
expanded in the basis dzeta_1, dzeta_2, dzetabar_1, dzetabar_2 and
converted with

    dzeta_1 ^ dzeta_2 ^ dzetabar_1 ^ dzetabar_2 = 4 dV,
    dV = dx_1 ^ dy_1 ^ dx_2 ^ dy_2.

A 3-form alpha restricted to the boundary is phi / |grad r| dsigma where
dr ^ alpha = phi dV.  With D01 = conj(w_1) g_2 - conj(w_2) g_1 this gives,
for a (0,1)-form f = f_1 dzetabar_1 + f_2 dzetabar_2:

    Omega^0_{0,0} ^ f       = -(1/pi^2) sum_j conj(w_j) f_j / |w|^4 dV
    Omega^01_{0,0} ^ f      =  (1/pi^2) D01 (r_zbar2 f_1 - r_zbar1 f_2) / (Phi0 Phi1 |grad r|) dsigma
    Omega^01_{0,0} ^ G dzetabar_1 ^ dzetabar_2
                            = -(1/pi^2) D01 G / (Phi0 Phi1) dV
    Omega^1_{0,0}           =  (1/pi^2) (E_1 r_zbar2 - E_2 r_zbar1) / (Phi1^2 |grad r|) dsigma

where E_l = g_2 d_{zetabar_l} g_1 - g_1 d_{zetabar_l} g_2 and
|grad r| = 2 |r_zeta|.  For n = 1 the Leray kernel is
r_zbar dsigma / (pi (zeta - z) |grad r|), i.e. dzeta / (2 pi i (zeta - z)).

These are checked against a generic exterior-algebra expansion in the
test-suite; they are frozen here for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import wirtinger_derivatives
from .expr import derivative, compile_exprs

__all__ = [
    "LeviPolynomial",
    "LerayMap",
    "SupportCheck",
    "levi_polynomial",
    "levi_polynomial_data",
    "smoothed_hessian_coeffs",
    "check_support_inequality",
    "sample_band_pairs",
    "hefer_w_levi",
    "convex_leray_map",
    "cf_kernel_coefficients",
    "CFKernels",
    "HeferIdentityError",
    "DEFAULT_CN",
]

DEFAULT_CN = 16.0
INV_PI2 = 1.0 / np.pi**2


class HeferIdentityError(RuntimeError):
    pass


# ------------------------------------------------------------------ Levi data


@dataclass
class LeviPolynomial:
    """F(z, zeta) = -r_zeta.(z - zeta) - 1/2 (z - zeta)^T b (z - zeta)."""

    zeta: np.ndarray
    grad: np.ndarray
    quad: np.ndarray
    lambda0: float | None = None

    def __call__(self, z):
        d = np.asarray(z, dtype=complex) - self.zeta
        lin = np.sum(self.grad * d, axis=-1)
        q = np.einsum("...j,...jk,...k->...", d, self.quad, d)
        return -lin - 0.5 * q


def levi_polynomial_data(family, t, zeta, coeffs="exact") -> LeviPolynomial:
    """Levi polynomial at base point(s) ``zeta``.

    ``coeffs`` is "exact" (holomorphic Hessian of r) or ("smoothed", d).
    """
    zeta = np.asarray(zeta, dtype=complex)
    data = wirtinger_derivatives(family.r, zeta, t)
    if coeffs == "exact":
        quad = data.holo_hess
    elif isinstance(coeffs, tuple) and coeffs[0] == "smoothed":
        quad = smoothed_hessian_coeffs(family, t, zeta, coeffs[1])[0]
    else:
        raise ValueError(f"unknown coefficient choice {coeffs!r}")
    return LeviPolynomial(zeta, data.grad_z, quad)


def levi_polynomial(family, t, zeta, z, coeffs="exact"):
    return levi_polynomial_data(family, t, zeta, coeffs)(z)


def _mollifier_rule(n, d, m):
    x, w = np.polynomial.legendre.leggauss(m)
    grids = np.meshgrid(*([x] * (2 * n)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wt = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([w] * (2 * n)), indexing="ij")]), axis=0)
    rho2 = np.sum(pts**2, axis=-1)
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(rho2 < 1.0, np.exp(-1.0 / (1.0 - np.minimum(rho2, 1 - 1e-300))), 0.0)
    wt = wt * bump
    wt = wt / wt.sum()
    return d * pts, wt


def smoothed_hessian_coeffs(family, t, zeta, d: float, m: int = 16):
    """Mollified holomorphic Hessian a_ij(zeta) = (d^2 r / dzeta_i dzeta_j) * chi_d.

    Tensor Gauss-Legendre rule with m^{2n} nodes on the cube of side 2d; the
    mollifier is exp(-1/(1-|x|^2/d^2)) normalised by the rule itself, so
    constants are reproduced exactly.  Returns ``(a, deviation)`` with
    deviation = max |a - holo_hess(zeta)|.
    """
    n = family.n
    zeta = np.asarray(zeta, dtype=complex)
    offs, wt = _mollifier_rule(n, d, m)
    shifts = offs[:, :n] + 1j * offs[:, n:]
    pts = zeta[..., None, :] - shifts
    if not np.all(family.in_box(pts)):
        raise ValueError("mollifier ball leaves the bounding box")
    holo = wirtinger_derivatives(family.r, pts, t).holo_hess
    a = np.einsum("k,...kij->...ij", wt, holo)
    exact = wirtinger_derivatives(family.r, zeta, t).holo_hess
    return a, float(np.max(np.abs(a - exact)))


# ------------------------------------------------------ support inequality


@dataclass
class SupportCheck:
    passed: bool
    margin: float
    witness: tuple | None
    lambda0: float


def sample_band_pairs(family, t, count: int, d: float, band: float = 0.1, seed: int = 0):
    """Pairs (zeta, z) with |r(zeta)| < band, |r(z)| < band and |zeta - z| < d."""
    rng = np.random.default_rng(seed)
    n = family.n
    zs, ws = [], []
    got = 0
    while got < count:
        x = rng.uniform(family.box[:, 0], family.box[:, 1], size=(8 * count, 2 * n))
        zeta = x[:, :n] + 1j * x[:, n:]
        keep = np.abs(family.raw(zeta, t)) < band
        zeta = zeta[keep]
        v = rng.normal(size=(zeta.shape[0], 2 * n))
        v *= (d * rng.uniform(0, 1, size=(zeta.shape[0], 1)) ** (1 / (2 * n))) / np.linalg.norm(v, axis=1, keepdims=True)
        z = zeta + v[:, :n] + 1j * v[:, n:]
        keep = (np.abs(family.raw(z, t)) < band) & family.in_box(z)
        zs.append(zeta[keep])
        ws.append(z[keep])
        got += int(keep.sum())
    return np.concatenate(zs)[:count], np.concatenate(ws)[:count]


def check_support_inequality(family, t, zeta, z, lambda0: float | None = None, coeffs="exact", tol: float = 1e-9) -> SupportCheck:
    """Minimum of 2 Re F(z, zeta) - [r(zeta) - r(z) + lambda0/4 |zeta - z|^2].

    The factor 2 on Re F is what the Taylor expansion gives: for the unit
    ball 2 Re F = r(zeta) - r(z) + |zeta - z|^2 exactly, while Re F alone
    falls short for radial pairs.  ``lambda0`` defaults to the smallest Levi
    eigenvalue over the sampled zeta.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    F = levi_polynomial_data(family, t, zeta, coeffs)
    if lambda0 is None:
        lambda0 = float(np.min(np.linalg.eigvalsh(wirtinger_derivatives(family.r, zeta, t).levi)))
    slack = 2.0 * np.real(F(z)) - (family.raw(zeta, t) - family.raw(z, t) + 0.25 * lambda0 * np.sum(np.abs(zeta - z) ** 2, axis=-1))
    k = int(np.argmin(slack))
    margin = float(slack[k])
    passed = margin >= -tol
    return SupportCheck(passed, margin, None if passed else (zeta[k], z[k]), lambda0)


# ---------------------------------------------------------------- Leray maps


@dataclass
class LerayMap:
    """g1(zeta, z) with Phi = g1.(zeta - z); ``dbar`` gives d g1_j / d zetabar_l."""

    kind: str
    n: int
    g1: callable
    dbar: callable

    def phi(self, zeta, z):
        return np.sum(self.g1(zeta, z) * (np.asarray(zeta) - np.asarray(z)), axis=-1)

    def check_nonvanishing(self, zeta, z, floor: float = 0.0) -> tuple[bool, float]:
        v = np.abs(self.phi(zeta, z))
        return bool(np.all(v > floor)), float(np.min(v))


def convex_leray_map(family, t) -> LerayMap:
    """g1 = r_zeta, independent of z; its zetabar-derivatives form the Levi matrix."""
    r = family.r

    def g1(zeta, z):
        zeta = np.asarray(zeta, dtype=complex)
        g = family.grad_z(zeta, t)
        return np.broadcast_to(g, np.broadcast_shapes(g.shape, np.shape(z)))

    def dbar(zeta, z):
        lev = wirtinger_derivatives(r, np.asarray(zeta, dtype=complex), t).levi
        return np.broadcast_to(lev, np.broadcast_shapes(lev.shape, np.shape(z)[:-1] + (family.n, family.n)))

    return LerayMap("convex", family.n, g1, dbar)


def hefer_w_levi(family, t, check_pairs: int = 100, seed: int = 0) -> LerayMap:
    """Hefer map of the Levi polynomial, w_j = r_zeta_j + 1/2 sum_k b_jk (z_k - zeta_k).

    Sum_j (zeta_j - z_j) w_j = F(z, zeta) is checked at random pairs before
    returning.  ``dbar`` uses exact third derivatives of r.
    """
    n = family.n
    r = family.r
    hol = [[derivative(derivative(r.root, ("z", j)), ("z", k)) for k in range(n)] for j in range(n)]
    third = [
        derivative(hol[j][k], ("zbar", l)) for j in range(n) for k in range(n) for l in range(n)
    ]
    third_fn = compile_exprs(third, n)

    def g1(zeta, z):
        zeta = np.asarray(zeta, dtype=complex)
        data = wirtinger_derivatives(r, zeta, t)
        d = np.asarray(z, dtype=complex) - zeta
        return data.grad_z + 0.5 * np.einsum("...jk,...k->...j", data.holo_hess, d)

    def dbar(zeta, z):
        zeta = np.asarray(zeta, dtype=complex)
        data = wirtinger_derivatives(r, zeta, t)
        T = np.stack(third_fn(zeta, t), axis=-1).reshape(zeta.shape[:-1] + (n, n, n))
        d = np.asarray(z, dtype=complex) - zeta
        # d/dzetabar_l [b_jk (z_k - zeta_k)] = (d b_jk / dzetabar_l)(z_k - zeta_k)
        return data.levi + 0.5 * np.einsum("...jkl,...k->...jl", T, d)

    lm = LerayMap("hefer_levi", n, g1, dbar)
    rng = np.random.default_rng(seed)
    x = rng.uniform(family.box[:, 0], family.box[:, 1], size=(check_pairs, 2, 2 * n))
    zeta = x[:, 0, :n] + 1j * x[:, 0, n:]
    z = x[:, 1, :n] + 1j * x[:, 1, n:]
    F = levi_polynomial(family, t, zeta, z)
    resid = np.max(np.abs(lm.phi(zeta, z) - F) / np.maximum(1.0, np.abs(F)))
    if resid > 1e-12:
        raise HeferIdentityError(f"Hefer identity residual {resid:.3e}")
    return lm


# ------------------------------------------------------------------ kernels


class CFKernels:
    """Closed-form Cauchy-Fantappie kernel coefficients for n in {1, 2}, q = 1."""

    def __init__(self, n: int, q: int = 1):
        if n not in (1, 2) or q != 1:
            raise NotImplementedError(f"kernel coefficients implemented for n in (1, 2), q = 1; got n={n}, q={q}")
        self.n = n
        self.q = q

    # n = 1 ------------------------------------------------------------
    @staticmethod
    def cauchy(zeta, z):
        return 1.0 / (2j * np.pi * (np.asarray(zeta)[..., 0] - np.asarray(z)[..., 0]))

    @staticmethod
    def cauchy_pompeiu_area(zeta, z):
        """Coefficient of f dA in u = -(1/pi) int f / (zeta - z) dA."""
        return -1.0 / (np.pi * (np.asarray(zeta)[..., 0] - np.asarray(z)[..., 0]))

    @staticmethod
    def leray_boundary_n1(zeta, z, grad):
        """Leray kernel per dsigma for n = 1: r_zbar / (pi (zeta - z) |grad r|)."""
        rzbar = np.conj(grad[..., 0])
        return rzbar / (np.pi * (zeta[..., 0] - z[..., 0]) * 2.0 * np.abs(grad[..., 0]))

    # n = 2 ------------------------------------------------------------
    @staticmethod
    def bm_volume(zeta, z):
        """Vector c with Omega^0_{0,0} ^ f = sum_j c_j f_j dV."""
        w = np.asarray(zeta) - np.asarray(z)
        phi0 = np.sum(np.abs(w) ** 2, axis=-1)
        return -INV_PI2 * np.conj(w) / (phi0**2)[..., None]

    @staticmethod
    def omega01_volume(zeta, z, g):
        """Scalar c with Omega^01_{0,0} ^ G dzetabar_1 ^ dzetabar_2 = c G dV."""
        w = np.asarray(zeta) - np.asarray(z)
        phi0 = np.sum(np.abs(w) ** 2, axis=-1)
        phi1 = np.sum(g * w, axis=-1)
        d01 = np.conj(w[..., 0]) * g[..., 1] - np.conj(w[..., 1]) * g[..., 0]
        return -INV_PI2 * d01 / (phi0 * phi1)

    @staticmethod
    def omega01_boundary(zeta, z, g, grad):
        """Vector b with Omega^01_{0,0} ^ f = sum_j b_j f_j dsigma on the boundary."""
        w = np.asarray(zeta) - np.asarray(z)
        phi0 = np.sum(np.abs(w) ** 2, axis=-1)
        phi1 = np.sum(g * w, axis=-1)
        d01 = np.conj(w[..., 0]) * g[..., 1] - np.conj(w[..., 1]) * g[..., 0]
        gnorm = 2.0 * np.linalg.norm(grad, axis=-1)
        rzbar = np.conj(grad)
        common = INV_PI2 * d01 / (phi0 * phi1 * gnorm)
        return np.stack([common * rzbar[..., 1], -common * rzbar[..., 0]], axis=-1)

    @staticmethod
    def leray_boundary(zeta, z, g, dbar_g, grad):
        """Scalar k with Omega^1_{0,0} = k dsigma on the boundary.

        ``dbar_g[..., j, l]`` is d g_j / d zetabar_l.
        """
        w = np.asarray(zeta) - np.asarray(z)
        phi1 = np.sum(g * w, axis=-1)
        E = g[..., 1, None] * dbar_g[..., 0, :] - g[..., 0, None] * dbar_g[..., 1, :]
        rzbar = np.conj(grad)
        gnorm = 2.0 * np.linalg.norm(grad, axis=-1)
        return INV_PI2 * (E[..., 0] * rzbar[..., 1] - E[..., 1] * rzbar[..., 0]) / (phi1**2 * gnorm)


def cf_kernel_coefficients(g0=None, g1=None, n: int = 2, q: int = 1) -> CFKernels:
    """Coefficient evaluator for Omega^0, Omega^1 and Omega^01 (g0 = conj(zeta - z) fixed)."""
    if g0 not in (None, "bochner_martinelli"):
        raise ValueError("only g0 = conj(zeta - z) is supported")
    return CFKernels(n, q)
