import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crlab.calculus import (
    dbar_fd,
    family_norm,
    holder_seminorm,
    min_levi_eigenvalue,
    real_gradient,
    real_hessian_from_wirtinger,
    wirtinger_derivatives,
)
from crlab.domain import BUILTIN_FAMILIES, builtin_family
from crlab.expr import parse_defining_function

# brute-force double loops over the same grids, run once and frozen
SQRT_ABS_401 = 1.0
SQRT_ABS_400 = 0.951130022563645


def test_ball_wirtinger():
    r = parse_defining_function("abs2(z1)+abs2(z2)-1", 2)
    z = np.array([0.3 - 0.2j, 0.1 + 0.4j])
    d = wirtinger_derivatives(r, z, 0.0)
    assert np.allclose(d.grad_z, np.conj(z), atol=0)
    assert np.array_equal(d.levi, np.eye(2))
    assert np.array_equal(d.holo_hess, np.zeros((2, 2)))
    assert np.allclose(d.real_hess, 2 * np.eye(4))


def test_pluriharmonic():
    r = parse_defining_function("re(z1^2)", 2)
    d = wirtinger_derivatives(r, np.array([0.5 + 0.5j, 0.2j]), 0.3)
    assert np.array_equal(d.levi, np.zeros((2, 2)))
    assert np.allclose(d.holo_hess, np.diag([1.0, 0.0]))
    assert np.linalg.eigvalsh(d.real_hess).min() == pytest.approx(-2.0)


def test_exhaustion_levi_positive():
    fam = builtin_family("exhaustion_sublevel")
    d = wirtinger_derivatives(fam.r, np.array([0.2 + 0.1j]), 0.6)
    assert np.linalg.eigvalsh(d.levi).min() > 0


def test_min_levi_examples():
    rng = np.random.default_rng(0)
    pts = 0.5 * (rng.normal(size=(50, 2)) + 1j * rng.normal(size=(50, 2)))
    assert min_levi_eigenvalue(builtin_family("ball"), pts, 0.0) == 1.0
    assert min_levi_eigenvalue(builtin_family("ellipsoid"), pts, 0.0) == 1.0
    with pytest.raises(ValueError):
        min_levi_eigenvalue(builtin_family("ball"), np.zeros((0, 2), complex), 0.0)


def _real_fd_hessian(fam, z, t, h=1e-4):
    n = fam.n
    x0 = np.concatenate([z.real, z.imag])
    def f(x):
        return fam.raw(x[:n] + 1j * x[n:], t)
    H = np.zeros((2 * n, 2 * n))
    E = np.eye(2 * n) * h
    for a in range(2 * n):
        for b in range(2 * n):
            H[a, b] = (f(x0 + E[a] + E[b]) - f(x0 + E[a] - E[b]) - f(x0 - E[a] + E[b]) + f(x0 - E[a] - E[b])) / (4 * h * h)
    return H


@pytest.mark.parametrize("name", sorted(BUILTIN_FAMILIES))
def test_symbolic_hessian_matches_finite_differences(name):
    fam = builtin_family(name)
    rng = np.random.default_rng(7)
    lo, hi = fam.t_range
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(0.6 * fam.box[:, 0], 0.6 * fam.box[:, 1])
        z = x[: fam.n] + 1j * x[fam.n :]
        t = rng.uniform(lo, hi)
        d = wirtinger_derivatives(fam.r, z, t)
        worst = max(worst, np.max(np.abs(d.real_hess - _real_fd_hessian(fam, z, t))))
        # Hermitian and symmetric by construction
        assert np.allclose(d.levi, d.levi.conj().T, atol=1e-14)
        assert np.allclose(d.holo_hess, d.holo_hess.T, atol=1e-14)
    assert worst < 1e-6


def test_real_gradient_convention():
    fam = builtin_family("ellipsoid")
    z = np.array([0.3 + 0.1j, -0.2 + 0.25j])
    g = real_gradient(fam.grad_z(z, 0.0))
    # r = x1^2 + y1^2 + 4 (x2^2 + y2^2) - 1, ordered (x1, x2, y1, y2)
    assert np.allclose(g, [0.6, -1.6, 0.2, 2.0])
    H = real_hessian_from_wirtinger(np.diag([1.0, 4.0]).astype(complex), np.zeros((2, 2), complex))
    assert np.allclose(H, np.diag([2.0, 8.0, 2.0, 8.0]))


def test_dbar_fd_examples():
    z = np.array([[0.3 - 0.4j]])
    assert abs(dbar_fd(lambda p: np.conj(p[..., 0]), z)[0, 0] - 1) < 1e-6
    assert abs(dbar_fd(lambda p: p[..., 0], z)[0, 0]) < 1e-6
    assert abs(dbar_fd(lambda p: np.abs(p[..., 0]) ** 2, z)[0, 0] - z[0, 0]) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=2), min_size=6, max_size=6), st.integers(0, 1000))
def test_dbar_fd_kills_holomorphic_quadratics(coef, seed):
    # the stencil is exact through degree 2; a cubic leaves an h^2 error
    rng = np.random.default_rng(seed)
    z = 0.5 * (rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2)))
    c = np.array(coef)

    def u(p):
        a, b = p[..., 0], p[..., 1]
        return c[0] + c[1] * a + c[2] * b + c[3] * a * b + c[4] * a**2 + c[5] * b**2

    assert np.max(np.abs(dbar_fd(u, z))) < 1e-8


def test_dbar_fd_cubic_error_is_h_squared():
    z = np.array([[0.2 + 0.3j]])
    for h in (1e-2, 1e-3):
        assert abs(dbar_fd(lambda p: p[..., 0] ** 3, z, h=h)[0, 0]) == pytest.approx(h * h, rel=1e-6)


def test_dbar_fd_stencil_guard():
    fam = builtin_family("disk")
    with pytest.raises(ValueError):
        dbar_fd(lambda p: p[..., 0], np.array([[1.0 - 1e-4 + 0j]]), inside=lambda p: fam.contains(p, 0.0))


def test_holder_examples():
    x = np.linspace(0, 1, 101)
    assert holder_seminorm(x, np.full_like(x, 3.0), 0.5).seminorm == 0.0
    assert holder_seminorm(x, x, 1.0).seminorm == pytest.approx(1.0)
    x = np.linspace(-1, 1, 401)
    est = holder_seminorm(x, np.sqrt(np.abs(x)), 0.5)
    assert est.seminorm == pytest.approx(SQRT_ABS_401, abs=1e-12)
    a, b = est.witness_pair
    assert abs(np.sqrt(abs(a[0])) - np.sqrt(abs(b[0]))) / abs(a[0] - b[0]) ** 0.5 == pytest.approx(est.seminorm)
    x = np.linspace(-1, 1, 400)
    assert holder_seminorm(x, np.sqrt(np.abs(x)), 0.5).seminorm == pytest.approx(SQRT_ABS_400, abs=1e-12)
    with pytest.raises(ValueError):
        holder_seminorm(x, x, 1.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 60), st.integers(0, 10_000))
def test_holder_monotone_under_inclusion(m, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, size=(m, 2))
    vals = np.sin(3 * pts[:, 0]) + np.abs(pts[:, 1]) ** 0.3
    k = rng.integers(2, m + 1)
    sub = holder_seminorm(pts[:k], vals[:k], 0.5).seminorm
    full = holder_seminorm(pts, vals, 0.5).seminorm
    assert 0.0 <= sub <= full


def test_family_norm_examples():
    ax = np.linspace(-1, 1, 9)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    zbar = X - 1j * Y
    ts = np.linspace(0, 1, 5)
    u = np.broadcast_to(zbar, (5,) + zbar.shape)
    assert family_norm([ax, ax], ts, u, 0.0, 0) == pytest.approx(np.sqrt(2))
    u = ts[:, None, None] * zbar
    # the i = 1 term is sup |zbar| and dominates sup |t zbar| only weakly
    assert family_norm([ax, ax], ts, u, 0.0, 1) == pytest.approx(np.sqrt(2))
    with pytest.raises(ValueError):
        family_norm([ax, ax], ts[:1], u[:1], 0.0, 1)


def test_family_norm_of_solver_output_is_stable():
    from crlab.solvers import homotopy_solve

    fam = builtin_family("shifted_ball")
    ts = np.array([0.4, 0.5, 0.6])

    def f(p):
        return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)

    norms = []
    for m in (5, 9):
        ax = np.linspace(-0.4, 0.4, m)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        pts = np.stack([X.ravel() + 1j * Y.ravel(), 0 * X.ravel()], -1)
        U = np.array([homotopy_solve(fam, t, f, pts, quad_n=8, check=False).u.reshape(m, m) for t in ts])
        norms.append(family_norm([ax, ax], ts, U, 1.0, 1))
    assert np.isfinite(norms).all()
    assert abs(norms[1] - norms[0]) < 0.1 * norms[0]
