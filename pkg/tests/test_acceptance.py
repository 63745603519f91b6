"""Acceptance criteria A1..A10 at their stated tolerances.

Each test records one PASS/FAIL line (collected in the terminal summary) and
then asserts.  A3 is the slow one: two BMK solves at 16 and 32 sphere nodes
per direction, a few minutes in total.
"""

import time

import numpy as np

from crlab.calculus import holder_seminorm
from crlab.convexify import bump_search, narasimhan_normalize, verify_strict_convexity
from crlab.domain import DomainFamily, builtin_family
from crlab.kernels import check_support_inequality, sample_band_pairs
from crlab.seeley import make_seeley_sequences, seeley_extend_halfspace
from crlab.solvers import (
    _collar_data,
    bmk_parts,
    bmk_solve,
    cauchy_pompeiu,
    cousin1_solve,
    homotopy_solve,
    interior_check_points,
    leray_reproduce,
    oka_weil_step,
    refine,
    solve_family,
)


def _dz1(p):
    return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)


def _z2dz1(p):
    return np.stack([p[..., 1], np.zeros(p.shape[:-1], complex)], -1)


def _one(p):
    return np.ones(p.shape[:-1], complex)


def test_A1_cauchy_pompeiu(acceptance):
    disk = builtin_family("disk")
    g = np.linspace(-0.7, 0.7, 20)
    z = (g[:, None] + 1j * g[None, :]).reshape(-1, 1)
    t0 = time.perf_counter()
    u = cauchy_pompeiu(disk, 0.0, _one, z, 128, 128)
    secs = time.perf_counter() - t0
    err = float(np.max(np.abs(u - np.conj(z[:, 0]))))
    ok = err < 1e-4 and secs < 10
    acceptance("A1", ok, f"max|u - zbar| = {err:.2e} (< 1e-4), {secs:.1f} s (< 10 s)")
    assert ok


def test_A2_leray_reproduce(acceptance):
    disk = builtin_family("disk")
    zd = np.array([[0.3 + 0.1j], [-0.5 + 0.4j], [0j]])
    e1 = float(np.max(np.abs(leray_reproduce(disk, 0.0, _one, zd, 256) - 1)))
    ball = builtin_family("ball")
    zb = np.array([[0.3, 0.1], [0.1 - 0.2j, 0.3j]], complex)
    e2 = float(np.max(np.abs(leray_reproduce(ball, 0.0, _one, zb, 64) - 1)))
    v = leray_reproduce(ball, 0.0, lambda p: p[..., 0] * p[..., 1] + 3, zb[:1], 64)[0]
    e3 = abs(v - 3.03)
    ok = e1 < 1e-8 and e2 < 1e-6 and e3 < 1e-5
    acceptance("A2", ok, f"n=1 h=1 err {e1:.1e} (< 1e-8); ball h=1 err {e2:.1e} (< 1e-6); z1 z2 + 3 err {e3:.1e} (< 1e-5)")
    assert ok


def test_A3_bmk_residual(acceptance):
    ball = builtin_family("ball")
    pts = interior_check_points(ball, 0.0, 8)
    parts, ok = [], True
    for name, f in (("dz1", _dz1), ("z2dz1", _z2dz1)):
        rep = refine(bmk_solve, ball, 0.0, f, 16, pts)
        base = rep.diagnostics["coarse_residual"]
        secs = max(rep.timing, rep.diagnostics["coarse_timing"])
        good = base < 1e-2 and rep.refinement_ratio < 0.7 and secs < 300
        ok = ok and good
        parts.append(f"{name}: residual {base:.2e}, ratio {rep.refinement_ratio:.3f}, {secs:.0f} s")
    acceptance("A3", ok, "; ".join(parts))
    assert ok


def test_A4_support_inequality(acceptance):
    ball = builtin_family("ball")
    zeta, z = sample_band_pairs(ball, 0.0, 10_000, 0.3)
    m_ball = check_support_inequality(ball, 0.0, zeta, z).margin
    pert = builtin_family("perturbed_ball")
    m_pert = np.inf
    for t in np.linspace(0, 1, 5):
        zeta, z = sample_band_pairs(pert, t, 10_000, 0.3)
        m_pert = min(m_pert, check_support_inequality(pert, t, zeta, z).margin)
    bad = builtin_family("non_psh")
    zeta, z = sample_band_pairs(bad, 0.0, 2000, 0.3)
    chk = check_support_inequality(bad, 0.0, zeta, z)
    caught = (not chk.passed) and chk.witness is not None
    ok = m_ball >= -1e-12 and m_pert >= -1e-9 and caught
    acceptance("A4", ok, f"ball min slack {m_ball:.2e}; perturbed min slack {m_pert:.2e}; non-psh rejected: {caught}")
    assert ok


def test_A5_bump_certificate(acceptance):
    ball = builtin_family("ball")
    chart, r_next, cert = bump_search(ball, 0.0, np.array([1.0 + 0j, 0j]))
    _, rstar = narasimhan_normalize(ball, 0.0, chart.p, eps0=chart.eps0)
    hess = verify_strict_convexity(rstar, chart.eps0)
    residue = max(chart.residues.values())
    patch = bool(np.all(r_next.evaluate(cert.covered_boundary_patch, 0.0) < 0))
    ok = hess > 0 and residue < 1e-10 and cert.separation_ok and patch
    acceptance("A5", ok, f"min Hessian eig {hess:.3f}; residue {residue:.1e}; separation {cert.separation_ok}; "
               f"patch in r_next < 0: {patch} ({cert.covered_boundary_patch.shape[0]} points)")
    assert ok


def test_A6_seeley(acceptance):
    seq = make_seeley_sequences(6)
    s = np.linspace(-0.99 / 2**5, 0.5, 401)  # phi(2^k s) = 1 for every k on s >= -1/32
    poly = max(float(np.max(np.abs(seeley_extend_halfspace(lambda x, d=d: x**d, seq)(s) - s**d))) for d in range(6))
    f, g = np.sin, lambda x: np.exp(x) + x**7
    lhs = seeley_extend_halfspace(lambda x: 0.3 * f(x) - 1.7 * g(x), seq)(s)
    rhs = 0.3 * seeley_extend_halfspace(f, seq)(s) - 1.7 * seeley_extend_halfspace(g, seq)(s)
    lin = float(np.max(np.abs(lhs - rhs)))
    ok = poly < 1e-8 and seq.residual < 1e-9 and lin < 1e-13
    acceptance("A6", ok, f"poly reproduction {poly:.1e}; moment residual {seq.residual:.1e}; linearity {lin:.1e}")
    assert ok


def test_A7_parameter_regularity(acceptance):
    fam = builtin_family("shifted_ball")
    t0, d = 0.5, 0.2
    fr = solve_family(fam, [t0, t0 + d / 2, t0 + d], lambda t: _dz1, quad_n=12)
    assert not fr.failures
    u = [r.u for r in fr.reports]
    ratio = float(np.max(np.abs(u[2] - u[0])) / np.max(np.abs(u[1] - u[0])))
    pts = fr.reports[0].points
    t1 = t0 + d
    a = homotopy_solve(fam, t1, lambda p: t1 * _dz1(p), pts, quad_n=12).u
    b = homotopy_solve(fam, t1, _dz1, pts, quad_n=12).u
    lin = float(np.max(np.abs(a - t1 * b)))
    ok = 1.5 <= ratio <= 2.5 and lin < 1e-8
    acceptance("A7", ok, f"modulus ratio {ratio:.3f} (in [1.5, 2.5]); linearity {lin:.1e} (< 1e-8)")
    assert ok


def test_A8_holder_trend(acceptance):
    ball = builtin_family("ball")
    q = 16
    col = _collar_data(ball, 0.0, _z2dz1, make_seeley_sequences(), 0.2, q, q)
    quot = []
    for j in range(3):
        w = 0.2 * 2.0**-j
        R, T = np.meshgrid(np.linspace(1 - w, 1 - w / 10, 10), np.linspace(0, w, 10), indexing="ij")
        zz = np.stack([R * np.cos(T) + 0j, R * np.sin(T) + 0j], -1).reshape(-1, 2)
        _, _, K, _ = bmk_parts(ball, 0.0, _z2dz1, zz, q, col=col)
        quot.append(holder_seminorm(zz, K, 0.5).seminorm)
    growth = max(b / a for a, b in zip(quot[:-1], quot[1:]))
    ok = growth < 2
    acceptance("A8", ok, f"C^1/2 quotients {', '.join(f'{v:.3g}' for v in quot)}; max growth {growth:.3f} (< 2)")
    assert ok


def test_A9_cousin(acceptance):
    fam = DomainFamily.from_text("abs2(z1 - 0.1*t) - 1", 1, [[-1.5, 1.5]] * 2, name="shifted_disk")
    worst_dec = worst_hol = 0.0
    for fab in (_one, lambda z: 1.0 / (z[..., 0] + 0.6)):
        for t in (0.0, 0.5, 1.0):
            res = cousin1_solve(fam, t, fab, m_rad=128, m_ang=256)
            worst_dec = max(worst_dec, res.decomposition_residual)
            worst_hol = max(worst_hol, res.holo_residual_a, res.holo_residual_b)
    ok = worst_dec < 1e-6 and worst_hol < 1e-3
    acceptance("A9", ok, f"decomposition {worst_dec:.1e} (< 1e-6); holomorphy {worst_hol:.1e} (< 1e-3)")
    assert ok


def test_A10_oka_weil(acceptance):
    disk = builtin_family("disk")
    h = lambda z: 1.0 / (1.05 - z[..., 0])  # noqa: E731
    errs = [oka_weil_step(disk, 0.0, h, 0.81 - 1, 1.05**2 - 1, N, c_mid=0.95**2 - 1).sup_error for N in (64, 128, 256)]
    mono = errs[0] > errs[1] > errs[2]
    ok = errs[2] < 1e-3 and mono
    acceptance("A10", ok, f"sup errors N=64/128/256: {errs[0]:.2e}, {errs[1]:.2e}, {errs[2]:.2e}")
    assert ok
