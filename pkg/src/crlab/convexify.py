"""Local convexification at a boundary point and Grauert bumps.

Chart maps, all in closed form:

    phi0(z) = S (z - p)                   S unitary, inner normal -> +i e_n
    phi1:   w_n -> w_n - i sum a_jk w_j w_k  a = holomorphic Hessian of r1 at 0
    phi2:   v_n -> v_n + (i/4) v_n^2

with r1 = r o phi0^{-1} / (2 |r_z(p)|), so that r1 = -y_n + O(2).  Then
r* = exp(r1 o phi1^{-1} o phi2^{-1}) - 1 has no holomorphic quadratic part at
0: phi1 removes the holomorphic terms of r1, and phi2 cancels the Re(v_n^2)/4
that exp produces from y_n^2 / 2.  The Levi terms are kept, so the b-shears
of the classical construction are not needed; their coefficients are recorded
as zero in the chart.

The bump is r_next = r - delta chi1(|z - p|^2 / eps2^2), and the convex piece
is N^ = {r* + C* chi0(|zeta|^2 / eps1^2) < 0} inside B_eps0.  Certificates
are grid scans; failures are reported, not raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import expr as ex
from .calculus import wirtinger_derivatives
from .expr import DefiningExpr
from .smooth import chi0, chi1

__all__ = [
    "BoundaryChart",
    "BumpCertificate",
    "narasimhan_normalize",
    "verify_strict_convexity",
    "build_bump",
    "bump_search",
    "cover_boundary",
    "cutoff_chi0",
    "cutoff_chi1",
]

EPS0_START = 0.5
DELTA_START = 0.05
CSTAR_START = 10.0
COEFF_FLOOR = 1e-13  # Hessian entries below this are roundoff


def cutoff_chi0(s):
    """Convex, zero exactly on s <= 1, with chi0'' = exp(-1/(s-1)) for s > 1."""
    return chi0(s)


def cutoff_chi1(s):
    """1 on |s| < 1, 0 on |s| > 2, monotone in |s| between."""
    return chi1(s)


@dataclass
class BoundaryChart:
    p: np.ndarray
    S: np.ndarray
    quad1: dict
    eps0: float
    eps1: float
    eps2: float
    Cstar: float
    delta: float
    scale: float = 1.0  # 1 / (2 |r_z(p)|)
    residues: dict = field(default_factory=dict)
    jacobian_min: float = np.nan

    @property
    def n(self):
        return self.p.shape[0]

    def phi0(self, z):
        return (np.asarray(z, complex) - self.p) @ self.S.T

    def phi1(self, w):
        a = self.quad1["a"]
        out = np.array(w, dtype=complex, copy=True)
        out[..., -1] = w[..., -1] - 1j * np.einsum("...j,jk,...k->...", w, a, w)
        return out

    @staticmethod
    def phi2(v):
        out = np.array(v, dtype=complex, copy=True)
        out[..., -1] = v[..., -1] + 0.25j * v[..., -1] ** 2
        return out

    def psi(self, z):
        """psi = phi2 o phi1 o phi0, evaluated numerically."""
        return self.phi2(self.phi1(self.phi0(z)))

    def jacobians(self, w):
        """det phi1'(w) and det phi2'(phi1(w)) (both shears are triangular)."""
        a = self.quad1["a"]
        d1 = 1.0 - 2j * (w @ a[:, -1])
        d2 = 1.0 + 0.5j * self.phi1(w)[..., -1]
        return d1, d2


@dataclass
class BumpCertificate:
    min_real_hessian_eig: float
    separation_ok: bool
    covered_boundary_patch: np.ndarray
    separation_gap: float = np.inf
    compact_ok: bool = True
    monotone_ok: bool = True
    patch_ok: bool = True
    min_levi_eig: float = np.nan
    levi_ok: bool = True
    failures: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "failures": list(self.failures),
            "min_real_hessian_eig": float(self.min_real_hessian_eig),
            "separation_ok": bool(self.separation_ok),
            "separation_gap": float(self.separation_gap),
            "compact_ok": bool(self.compact_ok),
            "monotone_ok": bool(self.monotone_ok),
            "patch_ok": bool(self.patch_ok),
            "patch_size": int(self.covered_boundary_patch.shape[0]),
            "min_levi_eig": float(self.min_levi_eig),
            "levi_ok": bool(self.levi_ok),
        }


# ------------------------------------------------------------ chart maps


def _rotation(rz):
    """Unitary S with S nu = i e_n for the inner unit normal nu."""
    n = rz.shape[0]
    nu = -np.conj(rz) / np.linalg.norm(rz)
    last = 1j * np.conj(nu)
    basis = np.column_stack([np.conj(last), np.eye(n)])
    Q, _ = np.linalg.qr(basis)
    S = np.empty((n, n), complex)
    S[:n - 1] = np.conj(Q[:, 1:n].T)
    S[n - 1] = last
    return S


def _phi0_inverse_images(p, S, images):
    n = p.shape[0]
    out = {}
    for j in range(n):
        e = ex.const(p[j])
        for k in range(n):
            c = np.conj(S[k, j])
            if c != 0:
                e = e + ex.const(c) * images[k]
        out[j] = e
    return out


def _phi1_inverse_images(a, images):
    """Exact inverse of the quadratic shear, stable root near the identity."""
    n = a.shape[0]
    w = [images[j] for j in range(n)]
    out = {j: w[j] for j in range(n - 1)}
    Ap = ex.const(0.0)
    B = ex.const(0.0)
    for j in range(n - 1):
        if a[j, -1] != 0:
            B = B + ex.const(a[j, -1]) * w[j]
        for k in range(n - 1):
            if a[j, k] != 0:
                Ap = Ap + ex.const(a[j, k]) * w[j] * w[k]
    beta = 1.0 - ex.const(2j) * B
    gamma = -(ex.const(1j) * Ap) - w[-1]
    if a[-1, -1] == 0:
        out[n - 1] = -gamma / beta
    else:
        alpha = ex.const(-1j * a[-1, -1])
        disc = beta * beta - ex.const(4.0) * alpha * gamma
        out[n - 1] = ex.const(-2.0) * gamma / (beta + ex.sqrt(disc))
    return out


def _phi2_inverse_images(n):
    zeta = {j: ex.var(j) for j in range(n)}
    zn = zeta[n - 1]
    zeta[n - 1] = ex.const(2.0) * zn / (1.0 + ex.sqrt(1.0 + ex.const(1j) * zn))
    return zeta


def _ball_grid(n, radius, grid_n, center=None):
    ax = np.linspace(-radius, radius, grid_n)
    mesh = np.stack(np.meshgrid(*([ax] * (2 * n)), indexing="ij"), -1).reshape(-1, 2 * n)
    mesh = mesh[np.linalg.norm(mesh, axis=-1) <= radius]
    z = mesh[:, :n] + 1j * mesh[:, n:]
    return z if center is None else z + center


def _sphere_points(n, radius, count=400, seed=0):
    g = np.random.default_rng(seed).standard_normal((count, 2 * n))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    return radius * (g[:, :n] + 1j * g[:, n:])


def verify_strict_convexity(rstar: DefiningExpr, radius: float, grid_n: int = 11, t: float = 0.0, chunk: int = 20000) -> float:
    """Minimum eigenvalue of the exact real Hessian over a grid of the closed ball."""
    z = _ball_grid(rstar.n, radius, grid_n)
    if z.shape[0] == 0:
        raise ValueError("grid has no points inside the radius")
    worst = np.inf
    for s in range(0, z.shape[0], chunk):
        data = wirtinger_derivatives(rstar, z[s : s + chunk], t)
        worst = min(worst, float(np.min(np.linalg.eigvalsh(data.real_hess))))
    return worst


# ------------------------------------------------------------ normalization


def narasimhan_normalize(family, t: float, p, eps0: float | None = None, grid_n: int = 11, delta: float = DELTA_START,
                         Cstar: float = CSTAR_START):
    """Chart at the boundary point ``p`` and the normal-form defining function r*.

    With eps0 None the chart radius halves from 0.5 until r* is strictly convex
    and both shears have nonvanishing Jacobian on the grid.  eps1 = eps0/2;
    eps2 is the largest halving of eps1/2 with psi(B_{1.1 sqrt2 eps2}(p))
    inside B_eps1; C* doubles from 10 until r^ > 0 on the sphere of radius eps0.
    """
    n = family.n
    p = np.asarray(p, dtype=complex).reshape(n)
    data = wirtinger_derivatives(family.r, p, t)
    rz = np.asarray(data.grad_z)
    gnorm = float(np.linalg.norm(rz))
    if gnorm < 1e-12:
        raise ValueError("degenerate gradient at p")
    if abs(float(data.value)) > 1e-8 * max(1.0, gnorm):
        raise ValueError(f"p is not a boundary point (r(p) = {float(data.value):.3e})")
    lev = float(np.min(np.linalg.eigvalsh(data.levi)))
    if lev <= 0:
        raise ValueError(f"Levi form at p is not strictly positive (min eigenvalue {lev:.3e})")

    S = _rotation(rz)
    scale = 1.0 / (2.0 * gnorm)
    r_t = family.r.substitute({"t": ex.const(float(t))})
    w = {k: ex.var(k) for k in range(n)}
    r1 = DefiningExpr(ex.mul(ex.const(scale), ex.substitute(r_t.root, _phi0_inverse_images(p, S, w))), n)
    d1 = wirtinger_derivatives(r1, np.zeros(n, complex))
    a = np.where(np.abs(d1.holo_hess) < COEFF_FLOOR, 0.0, d1.holo_hess)
    quad1 = {"a": a, "b_nn": 0.0, "b_alpha_n": np.zeros(n - 1, complex), "levi": d1.levi}

    # r* = exp(r1 o phi1^{-1} o phi2^{-1}) - 1
    zimg = _phi0_inverse_images(p, S, _phi1_inverse_images(a, _phi2_inverse_images(n)))
    inner = ex.mul(ex.const(scale), ex.substitute(r_t.root, zimg))
    rstar = DefiningExpr(ex.sub(ex.exp(inner), ex.const(1.0)), n)

    d0 = wirtinger_derivatives(rstar, np.zeros(n, complex))
    target = np.zeros(n, complex)
    target[-1] = 0.5j  # d/dz_n of -y_n
    residues = {
        "value": abs(float(d0.value)),
        "gradient": float(np.max(np.abs(np.asarray(d0.grad_z) - target))),
        "holo_hess": float(np.max(np.abs(d0.holo_hess))),
    }
    chart = BoundaryChart(p, S, quad1, np.nan, np.nan, np.nan, Cstar, delta, scale, residues)

    if eps0 is None:
        eps0 = EPS0_START
        for _ in range(8):
            if _jacobian_min(chart, eps0, grid_n) > 1e-6 and _safe_convexity(rstar, eps0, grid_n) > 0:
                break
            eps0 *= 0.5
    chart.eps0 = eps0
    chart.eps1 = 0.5 * eps0
    chart.jacobian_min = _jacobian_min(chart, eps0, grid_n)
    eps2 = 0.5 * chart.eps1
    for _ in range(12):
        ring = p + _sphere_points(n, 1.1 * np.sqrt(2.0) * eps2)
        if np.max(np.linalg.norm(chart.psi(ring), axis=-1)) < chart.eps1:
            break
        eps2 *= 0.5
    chart.eps2 = eps2
    sphere = _sphere_points(n, eps0)
    rs = rstar.evaluate(sphere)
    for _ in range(10):
        if np.min(rs + chart.Cstar * chi0(eps0**2 / chart.eps1**2)) > 0:
            break
        chart.Cstar *= 2.0
    return chart, rstar


def _safe_convexity(rstar, radius, grid_n):
    try:
        return verify_strict_convexity(rstar, radius, grid_n)
    except (ex.ExprError, FloatingPointError):
        return -np.inf


def _jacobian_min(chart, radius, grid_n):
    w = _ball_grid(chart.n, radius, grid_n)
    d1, d2 = chart.jacobians(w)
    return float(min(np.min(np.abs(d1)), np.min(np.abs(d2))))


# ------------------------------------------------------------ bumps


def bump_expressions(family, chart: BoundaryChart, rstar: DefiningExpr):
    """(r^, r_next) as defining expressions; r_next keeps the parameter t."""
    n = chart.n
    rad = ex.const(0.0)
    for j in range(n):
        rad = rad + ex.abs2(ex.var(j))
    rhat = DefiningExpr(rstar.root + ex.const(chart.Cstar) * ex.smooth("chi0", rad / ex.const(chart.eps1**2)), n)
    dist = ex.const(0.0)
    for j in range(n):
        dist = dist + ex.abs2(ex.var(j) - ex.const(chart.p[j]))
    bump = ex.smooth("chi1", dist / ex.const(chart.eps2**2))
    r_next = DefiningExpr(family.r.root - ex.const(chart.delta) * bump, n)
    return rhat, r_next


def _boundary_patch(family, t, p, eps2, count=200, seed=0):
    """Boundary points within eps2 of p, by radial projection from the center."""
    n = family.n
    g = np.random.default_rng(seed).standard_normal((count, 2 * n))
    g *= (np.random.default_rng(seed + 1).random(count) ** (1.0 / (2 * n)) / np.linalg.norm(g, axis=-1))[:, None]
    q = p + eps2 * (g[:, :n] + 1j * g[:, n:])
    d = q - family.center
    omega = d / np.linalg.norm(d, axis=-1, keepdims=True)
    R, ok = family.ray_roots(omega, t, guess=float(np.linalg.norm(p - family.center)))
    pts = family.center + R[ok, None] * omega[ok]
    pts = pts[np.linalg.norm(pts - p, axis=-1) < eps2]
    return np.concatenate([p[None, :], pts], axis=0)


def build_bump(family, t: float, chart: BoundaryChart, rstar: DefiningExpr | None = None, grid_n: int = 11, scan_n: int = 21):
    """Return (N_hat, r_next, certificate) for the chart's eps1, eps2, C*, delta."""
    if chart.delta < 0:
        raise ValueError("bump depth must be nonnegative")
    if rstar is None:
        _, rstar = narasimhan_normalize(family, t, chart.p, eps0=chart.eps0, grid_n=grid_n)
    n = chart.n
    p = chart.p
    rhat, r_next = bump_expressions(family, chart, rstar)
    failures = []

    hess = _safe_convexity(rstar, chart.eps0, grid_n)
    if not hess > 0:
        failures.append("convexity")
    compact = bool(np.min(rhat.evaluate(_sphere_points(n, chart.eps0))) > 0)
    if not compact:
        failures.append("compactness")

    # one grid around p serves the monotonicity, separation and Levi scans
    rho = 4.0 * chart.eps2
    z = _ball_grid(n, rho, scan_n, center=p)
    hg = 2.0 * rho / (scan_n - 1)
    r0 = family.evaluate(z, t)
    r1 = r_next.evaluate(z, t)
    dist = np.linalg.norm(z - p, axis=-1)
    inner = dist**2 < 2.0 * chart.eps2**2 * (1 - 1e-3)
    outer = dist**2 > 2.0 * chart.eps2**2
    monotone = bool(np.all(r1 <= r0) and np.all(r1[outer] == r0[outer]))
    if chart.delta > 0:
        monotone = monotone and bool(np.all(r1[inner] < r0[inner]))
    if not monotone:
        failures.append("monotone")

    X = z[(r0 >= 0) & (r1 < 0)]  # B \ D = bump collar outside D
    zeta = chart.psi(z)
    in_chart = np.linalg.norm(zeta, axis=-1) < chart.eps0
    in_N = np.zeros(z.shape[0], bool)
    if np.any(in_chart):
        in_N[in_chart] = rhat.evaluate(zeta[in_chart]) < 0
    Y = z[(r0 < 0) & ~in_N]  # D \ N
    gap = np.inf
    if X.shape[0] and Y.shape[0]:
        gap = float(np.min(cKDTree(_realify(Y)).query(_realify(X))[0]))
    separation = gap > 2.0 * hg
    if not separation:
        failures.append("separation")

    patch = _boundary_patch(family, t, p, chart.eps2)
    patch_ok = bool(patch.shape[0] > 0 and np.all(r_next.evaluate(patch, t) < 0)) if chart.delta > 0 else patch.shape[0] > 0
    if not patch_ok:
        failures.append("patch")

    # Levi form of r_next at grid points within one cell of its zero set
    data = wirtinger_derivatives(r_next, z, t)
    gn = 2.0 * np.linalg.norm(data.grad_z, axis=-1)
    near = np.abs(r1) < hg * np.maximum(gn, 1e-300)
    min_levi = float(np.min(np.linalg.eigvalsh(data.levi[near]))) if np.any(near) else np.nan

    cert = BumpCertificate(
        min_real_hessian_eig=hess,
        separation_ok=separation,
        covered_boundary_patch=patch,
        separation_gap=gap,
        compact_ok=compact,
        monotone_ok=monotone,
        patch_ok=patch_ok,
        min_levi_eig=min_levi,
        levi_ok=bool(min_levi > 0) if np.isfinite(min_levi) else True,
        failures=failures,
    )
    return rhat, r_next, cert


def _realify(z):
    return np.concatenate([z.real, z.imag], axis=-1)


def bump_search(family, t: float, p, delta: float = DELTA_START, max_halvings: int = 12, **kw):
    """Largest delta = delta * 2^-k whose certificate is valid and keeps r_next
    strictly plurisubharmonic near its zero set.  Returns (chart, r_next, cert)."""
    chart, rstar = narasimhan_normalize(family, t, p)
    cert = r_next = None
    for _ in range(max_halvings + 1):
        chart.delta = delta
        _, r_next, cert = build_bump(family, t, chart, rstar, **kw)
        if cert.valid and cert.levi_ok:
            break
        delta *= 0.5
    return chart, r_next, cert


def cover_boundary(points, eps2: float):
    """Greedy farthest-point selection of bump centers until every boundary
    sample lies within eps2 of a chosen center.  Returns indices into points."""
    x = _realify(np.asarray(points, complex))
    chosen = [0]
    d = np.linalg.norm(x - x[0], axis=-1)
    while d.max() >= eps2:
        k = int(np.argmax(d))
        chosen.append(k)
        d = np.minimum(d, np.linalg.norm(x - x[k], axis=-1))
    return chosen
