import numpy as np
import pytest

from crlab.domain import builtin_family
from crlab.quadrature import (
    boundary_quadrature,
    circle_rule,
    collar_quadrature,
    gauss_legendre,
    graded_panels,
    hopf_grid,
    polar_volume_quadrature,
)


def _mc_volume(fam, t, count=400_000, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(fam.box[:, 0], fam.box[:, 1], size=(count, 2 * fam.n))
    z = x[:, : fam.n] + 1j * x[:, fam.n :]
    p = np.mean(fam.raw(z, t) < 0)
    box = float(np.prod(fam.box[:, 1] - fam.box[:, 0]))
    return p * box, box * np.sqrt(p * (1 - p) / count)


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(5, 0.0, 2.0)
    for k in range(10):
        assert np.sum(w * x**k) == pytest.approx(2.0 ** (k + 1) / (k + 1), rel=1e-13)


def test_sphere_masses():
    assert np.sum(circle_rule(17).weights) == pytest.approx(2 * np.pi)
    rule = hopf_grid(8)
    assert np.sum(rule.weights) == pytest.approx(2 * np.pi**2, rel=1e-13)
    assert np.allclose(np.linalg.norm(rule.directions, axis=1), 1.0)
    # second moments of the S^3 surface measure: int |w_1|^2 = pi^2
    assert np.sum(rule.weights * np.abs(rule.directions[:, 0]) ** 2) == pytest.approx(np.pi**2, rel=1e-12)


def test_graded_panels():
    br = graded_panels(0.2, 3)
    assert br[0] == 0.0 and br[-1] == 0.2
    assert np.allclose(br[2:] / br[1:-1], 2.0)


@pytest.mark.parametrize("name, volume", [
    ("disk", np.pi),
    ("ball", np.pi**2 / 2),
    ("ellipsoid", np.pi**2 / 8),
])
def test_polar_volume_exact(name, volume):
    fam = builtin_family(name)
    z = np.full(fam.n, 0.1 + 0.05j)
    q = polar_volume_quadrature(fam, 0.0, z, 16, 24)
    assert q.measure == pytest.approx(volume, abs=1e-6)


@pytest.mark.parametrize("name, t", [("perturbed_ball", 1.0), ("shifted_ball", 0.7), ("exhaustion_sublevel", 0.6)])
def test_polar_volume_against_monte_carlo(name, t):
    fam = builtin_family(name)
    q = polar_volume_quadrature(fam, t, fam.center, 24, 32)
    mc, sigma = _mc_volume(fam, t)
    assert abs(q.measure - mc) < 5 * sigma
    # and it is converged in the rule itself
    q2 = polar_volume_quadrature(fam, t, fam.center, 32, 48)
    assert abs(q.measure - q2.measure) < 1e-6


def test_boundary_area_ball():
    fam = builtin_family("ball")
    q = boundary_quadrature(fam, 0.0, 12)
    assert q.measure == pytest.approx(2 * np.pi**2, rel=1e-12)
    assert np.allclose(fam.evaluate(q.nodes, 0.0), 0.0, atol=1e-10)


def test_boundary_divergence_theorem():
    # int_bD <x, nu> dsigma = 2n |D| for the ellipsoid
    fam = builtin_family("ellipsoid")
    q = boundary_quadrature(fam, 0.0, 24)
    flux = np.sum(q.weights * np.real(np.sum(q.nodes * np.conj(q.normals), axis=-1)))
    assert flux == pytest.approx(4 * np.pi**2 / 8, rel=1e-6)


def test_collar_shell_volume():
    fam = builtin_family("ball")
    q, sigma, omega, R = collar_quadrature(fam, 0.0, 0.2, 6, 8)
    assert q.measure == pytest.approx(np.pi**2 / 2 * (1.2**4 - 1.0), rel=1e-12)
    assert np.all((sigma > 0) & (sigma < 0.2))
    assert np.allclose(R, 1.0)
    assert np.allclose(q.nodes, (R + sigma)[:, None] * omega)
