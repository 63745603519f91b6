"""dbar solvers on star-shaped domains in C (n = 1) and C^2 (n = 2).

Operators (q = 1, f = f_1 dzbar_1 + f_2 dzbar_2):

    cauchy_pompeiu   u = -(1/pi) int_D f(zeta) / (zeta - z) dA
    bmk_solve        u = L Ef + K dbar Ef: Bochner-Martinelli over D and the
                     collar, plus the Omega^01 term over the collar only
    homotopy_solve   u = -int_{bD} Omega^01 ^ f + int_D Omega^0 ^ f
    leray_reproduce  h(z) = int_{bD} h Omega^1

Interior volume integrals use polar rules about z (the kernel singularity
cancels against the Jacobian); collar integrals use collar coordinates about
the family center and are precomputed once per solve since the collar never
contains z.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calculus import dbar_fd, wirtinger_derivatives
from .expr import DefiningExpr, const, sub
from .kernels import CFKernels, LerayMap, convex_leray_map
from .quadrature import (
    boundary_quadrature,
    collar_quadrature,
    polar_volume_quadrature,
    sphere_rule,
)
from .seeley import extend_from_domain, extension_in_collar, make_seeley_sequences

__all__ = [
    "SolveReport",
    "FamilyReport",
    "PreconditionError",
    "QuadratureDivergenceError",
    "refine",
    "cauchy_pompeiu",
    "bmk_solve",
    "bmk_parts",
    "homotopy_solve",
    "leray_reproduce",
    "solve_family",
    "oka_weil_step",
    "OkaWeilResult",
    "cousin1_solve",
    "CousinResult",
    "interior_check_points",
    "FD_STEP",
]

FD_STEP = 1e-3


class PreconditionError(ValueError):
    pass


@dataclass
class SolveReport:
    points: np.ndarray
    u: np.ndarray
    residual: float = float("nan")
    refinement_ratio: float | None = None
    timing: float = 0.0
    ok: bool = True
    diagnostics: dict = field(default_factory=dict)


def _stencil(z, h):
    n = z.shape[-1]
    eye = np.eye(n)
    offs = np.concatenate([h * eye, -h * eye, 1j * h * eye, -1j * h * eye])
    return z[..., None, :] + offs


def _residual_from_stencil(vals, f_at, h):
    """Max |dbar u - f| from u on the 4n-point stencils (vals shape (P, 4n))."""
    n = f_at.shape[-1]
    dx = (vals[:, :n] - vals[:, n : 2 * n]) / (2 * h)
    dy = (vals[:, 2 * n : 3 * n] - vals[:, 3 * n :]) / (2 * h)
    du = 0.5 * (dx + 1j * dy)
    return float(np.max(np.abs(du - f_at))), du


def interior_check_points(family, t, count: int = 20, margin: float = 10 * FD_STEP, seed: int = 0, scale: float = 0.8):
    """Deterministic interior points at distance > margin from the boundary.

    Points c + s R(omega) omega with s <= scale, kept when the distance bound
    |r| / max|grad r| exceeds ``margin``.
    """
    rng = np.random.default_rng(seed)
    n = family.n
    g = rng.normal(size=(4 * count, n)) + 1j * rng.normal(size=(4 * count, n))
    omega = g / np.linalg.norm(g, axis=1, keepdims=True)
    R = family.radial_function(t)(omega)
    s = scale * rng.uniform(0.05, 1.0, size=4 * count) ** (1.0 / (2 * n))
    z = family.center + (s * R)[:, None] * omega
    val, grad = family.value_and_grad(z, t)
    dist = -val / (2.0 * np.linalg.norm(grad, axis=-1) + 1e-300)
    keep = dist > margin
    z = z[keep]
    if z.shape[0] < count:
        raise PreconditionError("could not place enough interior check points")
    return z[:count]


# ---------------------------------------------------------------- n = 1


def cauchy_pompeiu(family, t, f, z, m_rad: int = 128, m_ang: int = 128, panels: int = 1):
    """u(z) = -(1/pi) int f(zeta) / (zeta - z) dA for points ``z`` (shape (P, 1) or (P,)).

    In polar coordinates zeta = z + rho e^{i theta} the integrand is
    -(1/pi) f e^{-i theta} drho dtheta, which is smooth.
    """
    if family.n != 1:
        raise ValueError("cauchy_pompeiu needs n = 1")
    z = np.asarray(z, dtype=complex).reshape(-1, 1)
    rule = sphere_rule(1, m_ang)
    out = np.empty(z.shape[0], dtype=complex)
    for i, zi in enumerate(z):
        q = polar_volume_quadrature(family, t, zi, m_rad, m_ang, rule=rule, panels=panels)
        vals = np.asarray(f(q.nodes)).reshape(-1)
        kern = CFKernels.cauchy_pompeiu_area(q.nodes, zi)
        out[i] = np.sum(q.weights * kern * vals)
    return out


# ---------------------------------------------------------------- n = 2 BMK


def _check_convex(family, t, m=8):
    bq = boundary_quadrature(family, t, m)
    hess = wirtinger_derivatives(family.r, bq.nodes, t).real_hess
    lam = float(np.min(np.linalg.eigvalsh(hess)))
    if lam <= 0:
        raise PreconditionError(f"defining function is not strictly convex near the boundary (min eigenvalue {lam:.3e})")
    return lam


def _dbar_closed_defect(f, pts, h=FD_STEP):
    d1 = dbar_fd(lambda z: np.asarray(f(z))[..., 0], pts, h)
    d2 = dbar_fd(lambda z: np.asarray(f(z))[..., 1], pts, h)
    return float(np.max(np.abs(d1[..., 1] - d2[..., 0])))


def _check_dbar_closed(family, t, f, tol=1e-6):
    pts = interior_check_points(family, t, 20, seed=99)
    defect = _dbar_closed_defect(f, pts)
    if defect > tol:
        raise PreconditionError(f"f is not dbar-closed (defect {defect:.3e} > {tol:g})")
    return defect


@dataclass
class _CollarData:
    nodes: np.ndarray
    weights: np.ndarray
    Ef: np.ndarray  # (S, 2)
    G: np.ndarray  # (S,)
    g: np.ndarray  # (S, 2) r_zeta


def _collar_data(family, t, f, seq, width, m_rad, m_ang, levels=3, h=1e-4):
    q, sigma, omega, R = collar_quadrature(family, t, width, m_rad, m_ang, levels=levels)
    ext = extend_from_domain(family, f, t, seq, collar_width=width)
    Ef = extension_in_collar(f, family, t, seq, ext.length, width, sigma, omega, R)
    # dbar Ef by central differences of the collar extension; one extension
    # call per stencil direction serves both components
    G = np.zeros(q.nodes.shape[0], complex)
    for j, k, sgn in ((0, 1, 1.0), (1, 0, -1.0)):
        e = np.zeros(2, complex)
        e[j] = h
        dx = ext(q.nodes + e)[..., k] - ext(q.nodes - e)[..., k]
        dy = ext(q.nodes + 1j * e)[..., k] - ext(q.nodes - 1j * e)[..., k]
        G += sgn * 0.5 * (dx + 1j * dy) / (2 * h)
    g = family.grad_z(q.nodes, t)
    return _CollarData(q.nodes, q.weights, Ef, G, g)


def _bm_polar(family, t, f, z, m_rad, rule):
    q = polar_volume_quadrature(family, t, z, m_rad, None, rule=rule)
    fv = np.asarray(f(q.nodes))
    c = CFKernels.bm_volume(q.nodes, z)
    return np.sum(q.weights * np.sum(c * fv, axis=-1))


def _collar_terms(col: _CollarData, z):
    c = CFKernels.bm_volume(col.nodes, z)
    L = np.sum(col.weights * np.sum(c * col.Ef, axis=-1))
    K = np.sum(col.weights * CFKernels.omega01_volume(col.nodes, z, col.g) * col.G)
    return L, K


def bmk_parts(family, t, f, points, quad_n: int = 12, m_rad: int | None = None, collar_width: float = 0.2, seq=None, col=None):
    """Return (L_D, L_collar, K) at ``points``; col may be a precomputed collar."""
    seq = make_seeley_sequences() if seq is None else seq
    m_rad = quad_n if m_rad is None else m_rad
    if col is None:
        col = _collar_data(family, t, f, seq, collar_width, m_rad, quad_n)
    rule = sphere_rule(2, quad_n)
    pts = np.asarray(points, dtype=complex).reshape(-1, 2)
    LD = np.empty(pts.shape[0], complex)
    LC = np.empty(pts.shape[0], complex)
    K = np.empty(pts.shape[0], complex)
    for i, z in enumerate(pts):
        LD[i] = _bm_polar(family, t, f, z, m_rad, rule)
        LC[i], K[i] = _collar_terms(col, z)
    return LD, LC, K, col


def bmk_solve(family, t, f, eval_points=None, quad_n: int = 12, m_rad: int | None = None, collar_width: float = 0.2,
              seq=None, h: float = FD_STEP, check: bool = True) -> SolveReport:
    """u = L Ef + K dbar Ef on a strictly convex D^t in C^2, with FD residual report."""
    t0 = time.perf_counter()
    if family.n != 2:
        raise ValueError("bmk_solve needs n = 2")
    diag = {}
    if check:
        diag["min_convexity"] = _check_convex(family, t)
        diag["dbar_closed_defect"] = _check_dbar_closed(family, t, f)
    pts = interior_check_points(family, t) if eval_points is None else np.asarray(eval_points, complex).reshape(-1, 2)
    allpts = np.concatenate([pts[:, None, :], _stencil(pts, h)], axis=1).reshape(-1, 2)
    LD, LC, K, _ = bmk_parts(family, t, f, allpts, quad_n, m_rad, collar_width, seq)
    u_all = (LD + LC + K).reshape(pts.shape[0], -1)
    resid, _ = _residual_from_stencil(u_all[:, 1:], np.asarray(f(pts)), h)
    diag["quad_n"] = quad_n
    return SolveReport(pts, u_all[:, 0], resid, None, time.perf_counter() - t0, True, diag)


# ------------------------------------------------------ n = 2 homotopy


def homotopy_solve(family, t, f, eval_points=None, quad_n: int = 12, m_rad: int | None = None, leray: LerayMap | None = None,
                   h: float = FD_STEP, check: bool = True) -> SolveReport:
    """u = T_1 f = -int_{bD} Omega^01 ^ f + int_D Omega^0 ^ f."""
    t0 = time.perf_counter()
    if family.n != 2:
        raise ValueError("homotopy_solve needs n = 2")
    m_rad = quad_n if m_rad is None else m_rad
    leray = convex_leray_map(family, t) if leray is None else leray
    pts = interior_check_points(family, t) if eval_points is None else np.asarray(eval_points, complex).reshape(-1, 2)
    diag = {}
    if check:
        diag["dbar_closed_defect"] = _check_dbar_closed(family, t, f)
    bq = boundary_quadrature(family, t, quad_n)
    fb = np.asarray(f(bq.nodes))
    ok, floor = leray.check_nonvanishing(bq.nodes[:, None, :], pts[None, :, :])
    diag["min_abs_phi"] = floor
    if not ok:
        raise PreconditionError("Leray map vanishes on sampled (zeta, z) pairs")
    allpts = np.concatenate([pts[:, None, :], _stencil(pts, h)], axis=1).reshape(-1, 2)
    rule = sphere_rule(2, quad_n)
    u_all = np.empty(allpts.shape[0], complex)
    for i, z in enumerate(allpts):
        g = leray.g1(bq.nodes, z)
        b = CFKernels.omega01_boundary(bq.nodes, z, g, bq.grad)
        bd = np.sum(bq.weights * np.sum(b * fb, axis=-1))
        u_all[i] = -bd + _bm_polar(family, t, f, z, m_rad, rule)
    u_all = u_all.reshape(pts.shape[0], -1)
    resid, _ = _residual_from_stencil(u_all[:, 1:], np.asarray(f(pts)), h)
    diag["quad_n"] = quad_n
    return SolveReport(pts, u_all[:, 0], resid, None, time.perf_counter() - t0, True, diag)


# ------------------------------------------------------------- reproduce


def leray_reproduce(family, t, hfun, z, quad_n: int = 64, leray: LerayMap | None = None):
    """int_{bD} h Omega^1_{0,0}(., z) by boundary quadrature, at points ``z``."""
    z = np.asarray(z, dtype=complex).reshape(-1, family.n)
    bq = boundary_quadrature(family, t, quad_n)
    hv = np.asarray(hfun(bq.nodes)).reshape(-1)
    out = np.empty(z.shape[0], complex)
    if family.n == 1:
        for i, zi in enumerate(z):
            out[i] = np.sum(bq.weights * hv * CFKernels.leray_boundary_n1(bq.nodes, zi, bq.grad))
        return out
    leray = convex_leray_map(family, t) if leray is None else leray
    for i, zi in enumerate(z):
        g = leray.g1(bq.nodes, zi)
        dg = leray.dbar(bq.nodes, zi)
        out[i] = np.sum(bq.weights * hv * CFKernels.leray_boundary(bq.nodes, zi, g, dg, bq.grad))
    return out


# ------------------------------------------------------------ refinement


class QuadratureDivergenceError(RuntimeError):
    pass


def refine(solver, family, t, f, quad_n: int, eval_points=None, **kw) -> SolveReport:
    """Solve at quad_n and 2 quad_n on the same points.

    Returns the fine report with ``refinement_ratio`` = residual(2N)/residual(N);
    raises QuadratureDivergenceError when the residual grows.
    """
    if eval_points is None:
        eval_points = interior_check_points(family, t)
    coarse = solver(family, t, f, eval_points, quad_n=quad_n, **kw)
    fine = solver(family, t, f, eval_points, quad_n=2 * quad_n, check=False, **kw)
    ratio = fine.residual / coarse.residual if coarse.residual > 0 else 0.0
    if ratio > 1.0:
        raise QuadratureDivergenceError(f"residual grew from {coarse.residual:.3e} to {fine.residual:.3e} under refinement")
    fine.refinement_ratio = ratio
    fine.diagnostics["coarse_residual"] = coarse.residual
    fine.diagnostics["coarse_timing"] = coarse.timing
    fine.diagnostics.update({k: v for k, v in coarse.diagnostics.items() if k not in fine.diagnostics})
    return fine


# ---------------------------------------------------------- families in t


@dataclass
class FamilyReport:
    t_grid: np.ndarray
    reports: list
    modulus: list  # (t, t_next, sup |u^{t_next} - u^t|)
    failures: list



def solve_family(family, t_grid, f_family, solver: str = "homotopy", eval_points=None, workers: int = 1, **kw) -> FamilyReport:
    """Solve at each t on a common set of evaluation points; collect the continuity modulus.

    ``f_family(t)`` returns the form at parameter t.  Per-t failures are
    recorded, not raised.  ``workers > 1`` solves the t values in threads.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    fn = {"homotopy": homotopy_solve, "bmk": bmk_solve, "cauchy_pompeiu": None}[solver]
    if eval_points is None:
        eval_points = _common_points(family, t_grid)

    def one(t):
        try:
            if solver == "cauchy_pompeiu":
                u = cauchy_pompeiu(family, t, f_family(t), eval_points, **kw)
                return SolveReport(np.asarray(eval_points), u), None
            return fn(family, t, f_family(t), eval_points, **kw), None
        except Exception as exc:  # collected per t
            return None, (float(t), repr(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, t_grid))
    else:
        out = [one(t) for t in t_grid]
    reports = [r for r, _ in out]
    failures = [e for _, e in out if e is not None]
    modulus = []
    for a, b, ra, rb in zip(t_grid[:-1], t_grid[1:], reports[:-1], reports[1:]):
        if ra is not None and rb is not None:
            modulus.append((float(a), float(b), float(np.max(np.abs(rb.u - ra.u)))))
    return FamilyReport(t_grid, reports, modulus, failures)


def _common_points(family, t_grid, count=20):
    pts = interior_check_points(family, t_grid[0], 4 * count, scale=0.6)
    keep = np.ones(pts.shape[0], bool)
    for t in t_grid:
        val, grad = family.value_and_grad(pts, t)
        keep &= -val / (2 * np.linalg.norm(grad, axis=-1)) > 10 * FD_STEP
    return pts[keep][:count]


# -------------------------------------------------------------- Oka-Weil


@dataclass
class OkaWeilResult:
    N: int
    sup_error: float
    witness: np.ndarray
    nodes: np.ndarray
    coefficients: np.ndarray

    def __call__(self, z):
        """The approximant: a finite sum of kernels holomorphic on the level c''."""
        z = np.asarray(z, complex)
        return np.sum(self.coefficients / (self.nodes[:, 0] - z[..., None, 0]), axis=-1)


def _level_family(family, level: float):
    from .domain import DomainFamily

    r = DefiningExpr(sub(family.r.root, const(level)), family.n)
    return DomainFamily(family.n, r, family.box, family.t_range, family.boundary_tol, family.center, family.name, family.nonempty)


def oka_weil_step(family, t, hfun, c: float, c_prime: float, N: int, c_mid: float | None = None, check_n: int = 400):
    """Riemann-sum approximation of h on K_c = {r <= c} by N Leray-kernel terms.

    The Leray formula on the level set {r < c''} (c < c'' < c') is
    discretised with N boundary nodes.  Each term h(zeta_m) k(zeta_m, z)
    is holomorphic in z on {r < c''}.  For n = 1 the approximant is a sum of
    simple fractions a_m / (zeta_m - z).
    """
    if family.n != 1:
        raise NotImplementedError("oka_weil_step is implemented for n = 1")
    c_mid = 0.5 * (c + c_prime) if c_mid is None else c_mid
    if not c < c_mid < c_prime:
        raise ValueError("need c < c'' < c'")
    lev = _level_family(family, c_mid)
    bq = boundary_quadrature(lev, t, N)
    hv = np.asarray(hfun(bq.nodes)).reshape(-1)
    # k = r_zbar / (pi (zeta - z) |grad r|) dsigma  ->  coefficient of 1/(zeta - z)
    rz = bq.grad[:, 0]
    coeff = bq.weights * hv * np.conj(rz) / (np.pi * 2.0 * np.abs(rz))
    res = OkaWeilResult(N, 0.0, None, bq.nodes, coeff)
    inner = _level_family(family, c)
    kb = boundary_quadrature(inner, t, check_n)
    # the maximum principle puts the sup error on the boundary of K_c
    err = np.abs(res(kb.nodes) - np.asarray(hfun(kb.nodes)).reshape(-1))
    k = int(np.argmax(err))
    res.sup_error = float(err[k])
    res.witness = kb.nodes[k]
    return res


# ----------------------------------------------------------------- Cousin


@dataclass
class CousinResult:
    f_a: callable
    f_b: callable
    u: callable
    decomposition_residual: float
    holo_residual_a: float
    holo_residual_b: float


def cousin1_solve(family, t, f_ab, split: float = 0.0, half_width: float = 0.25, m_rad: int = 128, m_ang: int = 256,
                  check_points: int = 30, seed: int = 0) -> CousinResult:
    """First Cousin problem for the cover D_a = D & {x < split + w}, D_b = D & {x > split - w}.

    chi_b is a smooth step in x = Re z from 0 at split - w to 1 at split + w,
    chi_a = 1 - chi_b.  Then g_a = chi_b f_ab, g_b = -chi_a f_ab,
    phi = f_ab dbar chi_b, u solves dbar u = phi by Cauchy-Pompeiu, and
    f_a = g_a - u, f_b = g_b - u.
    """
    from .smooth import smooth_step

    if family.n != 1:
        raise ValueError("cousin1_solve needs n = 1")
    lo, hi = split - half_width, split + half_width

    def chi_b(z):
        return smooth_step((np.real(z[..., 0]) - lo) / (hi - lo))

    def dbar_chi_b(z):
        # d/dzbar of a function of x is (1/2) d/dx
        return 0.5 * smooth_step((np.real(z[..., 0]) - lo) / (hi - lo), 1) / (hi - lo)

    def overlap(z):
        x = np.real(z[..., 0])
        return (x > lo) & (x < hi)

    def fab_safe(z):
        out = np.zeros(z.shape[:-1], complex)
        m = overlap(z)
        out[m] = f_ab(z[m])
        return out

    def phi(z):
        return fab_safe(z) * dbar_chi_b(z)

    def u(z):
        z = np.asarray(z, complex).reshape(-1, 1)
        return cauchy_pompeiu(family, t, phi, z, m_rad, m_ang, panels=8)

    def g_a(z):
        return chi_b(z) * fab_safe(z)

    def g_b(z):
        return -(1.0 - chi_b(z)) * fab_safe(z)

    def f_a(z):
        return g_a(np.asarray(z, complex).reshape(-1, 1)) - u(z)

    def f_b(z):
        return g_b(np.asarray(z, complex).reshape(-1, 1)) - u(z)

    pts = interior_check_points(family, t, 6 * check_points, seed=seed, scale=0.9)
    xa = np.real(pts[:, 0])
    pa = pts[xa < hi - 10 * FD_STEP][:check_points]
    pb = pts[xa > lo + 10 * FD_STEP][:check_points]
    po = pts[(xa > lo) & (xa < hi)][:check_points]
    # the decomposition check: u cancels, so this is exact up to rounding
    dec = float(np.max(np.abs(f_a(po) - f_b(po) - f_ab(po)))) if po.size else 0.0
    ha = float(np.max(np.abs(dbar_fd(lambda z: f_a(z.reshape(-1, 1)).reshape(z.shape[:-1]), pa))))
    hb = float(np.max(np.abs(dbar_fd(lambda z: f_b(z.reshape(-1, 1)).reshape(z.shape[:-1]), pb))))
    return CousinResult(f_a, f_b, u, dec, ha, hb)
