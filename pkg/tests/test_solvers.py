import numpy as np
import pytest

from crlab.calculus import dbar_fd
from crlab.domain import DomainFamily, builtin_family
from crlab.solvers import (
    PreconditionError,
    QuadratureDivergenceError,
    SolveReport,
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


def _zero_form(p):
    return np.zeros(p.shape[:-1] + (2,), complex)


def _dz1(p):
    return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)


def _z2dz1(p):
    return np.stack([p[..., 1], np.zeros(p.shape[:-1], complex)], -1)


def _grid_disk(m=7, radius=0.7):
    ax = np.linspace(-radius, radius, m)
    z = (ax[:, None] + 1j * ax[None, :]).ravel()
    return z[np.abs(z) < radius][:, None]


def test_interior_points_are_inside():
    fam = builtin_family("ellipsoid")
    pts = interior_check_points(fam, 0.0, 30)
    assert pts.shape == (30, 2)
    assert np.all(fam.raw(pts, 0.0) < 0)
    with pytest.raises(PreconditionError):
        interior_check_points(fam, 0.0, 30, margin=10.0)


def test_cauchy_pompeiu_zero_and_one():
    disk = builtin_family("disk")
    z = _grid_disk()
    assert np.all(cauchy_pompeiu(disk, 0.0, lambda p: np.zeros(p.shape[:-1]), z, 16, 16) == 0)
    # -(1/pi) int_D dA / (zeta - z) = conj(z) on the unit disk
    u = cauchy_pompeiu(disk, 0.0, lambda p: np.ones(p.shape[:-1]), z, 32, 32)
    assert np.max(np.abs(u - np.conj(z[:, 0]))) < 1e-4


def test_cauchy_pompeiu_zbar():
    disk = builtin_family("disk")
    z = _grid_disk(5, 0.5)
    f = lambda p: np.conj(p[..., 0])  # noqa: E731
    u = lambda p: cauchy_pompeiu(disk, 0.0, f, p.reshape(-1, 1), 48, 48).reshape(p.shape[:-1])  # noqa: E731
    assert np.max(np.abs(dbar_fd(u, z)[..., 0] - np.conj(z[:, 0]))) < 1e-5
    # conj(z)^2 / 2 differs from the solution by a holomorphic function
    hol = lambda p: u(p) - 0.5 * np.conj(p[..., 0]) ** 2  # noqa: E731
    assert np.max(np.abs(dbar_fd(hol, z))) < 1e-5


def test_cauchy_pompeiu_needs_n1():
    with pytest.raises(ValueError):
        cauchy_pompeiu(builtin_family("ball"), 0.0, lambda p: 1.0, np.zeros((1, 2)))


@pytest.mark.parametrize("solver", [bmk_solve, homotopy_solve])
def test_zero_form_gives_zero(solver):
    fam = builtin_family("ball")
    rep = solver(fam, 0.0, _zero_form, quad_n=6)
    assert isinstance(rep, SolveReport)
    assert np.all(rep.u == 0) and rep.residual == 0


def test_homotopy_residual_and_linearity():
    fam = builtin_family("ball")
    pts = interior_check_points(fam, 0.0, 4)
    a = homotopy_solve(fam, 0.0, _dz1, pts, quad_n=12)
    b = homotopy_solve(fam, 0.0, _z2dz1, pts, quad_n=12)
    both = homotopy_solve(fam, 0.0, lambda p: 2.0 * _dz1(p) - 3j * _z2dz1(p), pts, quad_n=12)
    assert a.residual < 0.05 and b.residual < 0.05
    assert np.max(np.abs(both.u - (2.0 * a.u - 3j * b.u))) < 1e-12
    assert a.diagnostics["min_abs_phi"] > 0


def test_homotopy_converges_under_refinement():
    fam = builtin_family("ball")
    pts = interior_check_points(fam, 0.0, 3)
    rep = refine(homotopy_solve, fam, 0.0, _dz1, 8, pts)
    assert rep.refinement_ratio < 0.7
    assert rep.diagnostics["coarse_residual"] > rep.residual


def test_refine_reports_divergence():
    def fake(family, t, f, pts, quad_n, check=True):
        return SolveReport(pts, np.zeros(1), residual=float(quad_n))

    fam = builtin_family("ball")
    with pytest.raises(QuadratureDivergenceError):
        refine(fake, fam, 0.0, _dz1, 4, np.zeros((1, 2)))


def test_preconditions():
    ball = builtin_family("ball")
    not_closed = lambda p: np.stack([np.conj(p[..., 1]), np.zeros(p.shape[:-1], complex)], -1)  # noqa: E731
    with pytest.raises(PreconditionError, match="dbar-closed"):
        homotopy_solve(ball, 0.0, not_closed, quad_n=4)
    # bounded, star-shaped, with a dent in the x1 direction
    dented = DomainFamily.from_text("abs2(z1)+abs2(z2)-1.5*re(z1)^2+re(z1)^4-1", 2, [[-1.5, 1.5]] * 4)
    with pytest.raises(PreconditionError, match="convex"):
        bmk_solve(dented, 0.0, _dz1, quad_n=4)
    with pytest.raises(ValueError):
        homotopy_solve(builtin_family("disk"), 0.0, _dz1)


def test_leray_reproduce():
    disk = builtin_family("disk")
    one = lambda p: np.ones(p.shape[:-1])  # noqa: E731
    v = leray_reproduce(disk, 0.0, one, _grid_disk(), quad_n=256)
    assert np.max(np.abs(v - 1)) < 1e-8
    ball = builtin_family("ball")
    z = np.array([[0.3 + 0j, 0.1 + 0j], [0.2j, -0.4 + 0.1j]])
    assert np.max(np.abs(leray_reproduce(ball, 0.0, one, z) - 1)) < 1e-6
    h = lambda p: p[..., 0] * p[..., 1] + 3  # noqa: E731
    assert abs(leray_reproduce(ball, 0.0, h, z[:1])[0] - 3.03) < 1e-5


def test_solve_family_t_independent():
    fam = builtin_family("ball")
    fr = solve_family(fam, [0.0, 0.5, 1.0], lambda t: _dz1, quad_n=6, check=False)
    assert not fr.failures
    assert all(m < 1e-10 for _, _, m in fr.modulus)
    assert len(fr.modulus) == 2


def test_solve_family_collects_failures():
    fam = builtin_family("ball")
    bad = lambda p: np.stack([np.conj(p[..., 1]), np.zeros(p.shape[:-1], complex)], -1)  # noqa: E731
    fr = solve_family(fam, [0.0, 1.0], lambda t: bad if t > 0.5 else _dz1, quad_n=4, workers=2)
    assert [t for t, _ in fr.failures] == [1.0]
    assert "PreconditionError" in fr.failures[0][1]
    assert fr.modulus == []


def test_oka_weil():
    disk = builtin_family("disk")
    h = lambda z: 1.0 / (1.05 - z[..., 0])  # noqa: E731
    errs = [oka_weil_step(disk, 0.0, h, -0.19, 1.05**2 - 1, N, c_mid=0.95**2 - 1, check_n=100).sup_error for N in (1, 8, 16, 32)]
    assert errs[0] > 0
    assert all(b < a for a, b in zip(errs[:-1], errs[1:]))
    # Riemann sums of a periodic analytic integrand converge geometrically
    assert errs[3] < errs[2] ** 1.5
    with pytest.raises(ValueError):
        oka_weil_step(disk, 0.0, h, 0.1, 0.0, 8)
    with pytest.raises(NotImplementedError):
        oka_weil_step(builtin_family("ball"), 0.0, h, -0.5, 0.1, 8)


def test_oka_weil_approximant_is_holomorphic():
    disk = builtin_family("disk")
    ow = oka_weil_step(disk, 0.0, lambda z: np.exp(z[..., 0]), -0.5, 0.2, 64)
    z = _grid_disk(5, 0.5)
    # what is left is the h^2 term of the difference stencil
    assert np.max(np.abs(dbar_fd(ow, z, h=1e-3))) < 1e-6
    assert np.max(np.abs(dbar_fd(ow, z, h=1e-4))) < 1e-8
    assert ow.sup_error < 1e-6


def test_cousin_zero():
    disk = builtin_family("disk")
    res = cousin1_solve(disk, 0.0, lambda z: np.zeros(z.shape[:-1], complex), m_rad=16, m_ang=32, check_points=5)
    assert res.decomposition_residual == 0
    assert res.holo_residual_a == 0 and res.holo_residual_b == 0


def test_cousin_pole():
    disk = builtin_family("disk")
    fab = lambda z: 1.0 / (z[..., 0] + 0.6)  # noqa: E731
    res = cousin1_solve(disk, 0.0, fab, m_rad=64, m_ang=128, check_points=5)
    assert res.decomposition_residual < 1e-12
    assert max(res.holo_residual_a, res.holo_residual_b) < 1e-2
