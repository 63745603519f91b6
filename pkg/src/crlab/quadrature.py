"""Quadrature rules: unit spheres, star-shaped boundaries, polar volumes.

Sphere rules in C^2 use Hopf coordinates
omega = (sqrt(1-s) e^{i alpha}, sqrt(s) e^{i beta}), dOmega = 1/2 ds dalpha dbeta,
with Gauss-Legendre nodes in s and the trapezoid rule in both angles.  The
total mass is 2 pi^2, the area of S^3.  Circle rules in C are the trapezoid
rule with mass 2 pi.

Boundary and volume rules for star-shaped domains are built on a sphere rule
and the radial function R(omega) of the domain about a center c:

    boundary:  zeta = c + R omega,  dsigma = R^{2n-1} |grad r| / (grad r . omega) dOmega
    volume:    zeta = c + rho omega, dV = rho^{2n-1} drho dOmega

Polar volume rules about the singular point of a kernel cancel its
|zeta - z|^{1-2n} singularity against the Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SphereRule",
    "Quadrature",
    "gauss_legendre",
    "graded_panels",
    "circle_rule",
    "hopf_grid",
    "sphere_rule",
    "boundary_quadrature",
    "polar_volume_quadrature",
    "collar_quadrature",
]


@dataclass(frozen=True)
class SphereRule:
    directions: np.ndarray  # (M, n) unit vectors
    weights: np.ndarray  # (M,) surface weights, summing to |S^{2n-1}|


@dataclass
class Quadrature:
    """Nodes and weights on a region; ``kind`` is "volume" or "boundary"."""

    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    singularity_center: np.ndarray | None = None
    normals: np.ndarray | None = None  # boundary rules: unit outward normals (complex form)
    grad: np.ndarray | None = None  # boundary rules: r_zeta at the nodes

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, values) -> complex:
        return np.tensordot(self.weights, values, axes=(0, 0))


def gauss_legendre(m: int, a=0.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b] (broadcast over array a, b)."""
    x, w = np.polynomial.legendre.leggauss(m)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def graded_panels(length: float, levels: int) -> np.ndarray:
    """Panel breakpoints on [0, length] refined dyadically toward 0."""
    pts = [length * 2.0 ** (-k) for k in range(levels, -1, -1)]
    return np.array([0.0] + pts)


def circle_rule(m: int) -> SphereRule:
    ang = 2.0 * np.pi * np.arange(m) / m
    return SphereRule(np.exp(1j * ang)[:, None], np.full(m, 2.0 * np.pi / m))


def hopf_grid(m_s: int, m_alpha: int | None = None, m_beta: int | None = None) -> SphereRule:
    m_alpha = m_s if m_alpha is None else m_alpha
    m_beta = m_s if m_beta is None else m_beta
    s, ws = gauss_legendre(m_s, 0.0, 1.0)
    al = 2.0 * np.pi * (np.arange(m_alpha) + 0.5) / m_alpha
    be = 2.0 * np.pi * np.arange(m_beta) / m_beta
    S, A, B = np.meshgrid(s, al, be, indexing="ij")
    W = 0.5 * ws[:, None, None] * (2.0 * np.pi / m_alpha) * (2.0 * np.pi / m_beta) * np.ones_like(S)
    dirs = np.stack([np.sqrt(1.0 - S) * np.exp(1j * A), np.sqrt(S) * np.exp(1j * B)], axis=-1)
    return SphereRule(dirs.reshape(-1, 2), W.ravel())


def sphere_rule(n: int, m: int) -> SphereRule:
    if n == 1:
        return circle_rule(m)
    if n == 2:
        return hopf_grid(m)
    raise ValueError("sphere rules are implemented for n = 1, 2")


def boundary_quadrature(family, t: float, m: int) -> Quadrature:
    """Surface rule on the boundary of a star-shaped D^t (m per sphere axis)."""
    rule = sphere_rule(family.n, m)
    R = family.radial_function(t)(rule.directions)
    pts = family.center + R[:, None] * rule.directions
    rz = family.grad_z(pts, t)
    gnorm = 2.0 * np.linalg.norm(rz, axis=-1)
    g_dot_omega = 2.0 * np.real(np.sum(rz * rule.directions, axis=-1))
    if np.any(g_dot_omega <= 0):
        raise ValueError("boundary is not transverse to the rays from the center")
    w = rule.weights * R ** (2 * family.n - 1) * gnorm / g_dot_omega
    normals = 2.0 * np.conj(rz) / gnorm[:, None]
    return Quadrature("boundary", pts, w, normals=normals, grad=rz)


def polar_volume_quadrature(family, t: float, z, m_rad: int, m_ang: int, rule: SphereRule | None = None,
                            panels: int = 1) -> Quadrature:
    """Volume rule on D^t in polar coordinates about the interior point ``z``.

    ``m_rad`` Gauss nodes per ray, split over ``panels`` equal radial panels.
    """
    z = np.asarray(z, dtype=complex)
    rule = sphere_rule(family.n, m_ang) if rule is None else rule
    fam = family.recentered(z)
    # warm start from the previous call with the same directions: solves
    # about nearby points (finite-difference stencils) converge in a few steps
    key = ("polar_guess", float(t), rule.directions.shape[0])
    guess = family._cache.get(key)
    R, ok = fam.ray_roots(rule.directions, t, guess=guess)
    if not ok.all():
        raise ValueError("polar rays about z do not all meet the boundary")
    family._cache[key] = R
    per = max(1, m_rad // panels)
    rho, wr = [], []
    for k in range(panels):
        x, w = gauss_legendre(per, R * k / panels, R * (k + 1) / panels)
        rho.append(x)
        wr.append(w)
    rho = np.concatenate(rho, axis=-1)  # (M, m_rad)
    wr = np.concatenate(wr, axis=-1)
    nodes = z + rho[..., None] * rule.directions[:, None, :]
    w = wr * rho ** (2 * family.n - 1) * rule.weights[:, None]
    return Quadrature("volume", nodes.reshape(-1, family.n), w.ravel(), singularity_center=z)


def collar_quadrature(family, t: float, width: float, m_rad: int, m_ang: int, levels: int = 3, rule: SphereRule | None = None):
    """Volume rule on the shell {c + (R(omega) + sigma) omega : 0 < sigma < width}.

    Returns ``(Quadrature, sigma, omega, R)`` with per-node collar data so the
    caller can evaluate collar-coordinate extensions without re-solving rays.
    Radial panels are graded dyadically toward the boundary.
    """
    rule = sphere_rule(family.n, m_ang) if rule is None else rule
    R = family.radial_function(t)(rule.directions)
    br = graded_panels(width, levels)
    sig, ws = [], []
    for a, b in zip(br[:-1], br[1:]):
        x, w = gauss_legendre(m_rad, a, b)
        sig.append(x)
        ws.append(w)
    sig = np.concatenate(sig)
    ws = np.concatenate(ws)
    rho = R[:, None] + sig[None, :]
    nodes = family.center + rho[..., None] * rule.directions[:, None, :]
    w = ws[None, :] * rho ** (2 * family.n - 1) * rule.weights[:, None]
    M = rule.directions.shape[0]
    q = Quadrature("volume", nodes.reshape(-1, family.n), w.ravel())
    sigma = np.broadcast_to(sig[None, :], (M, sig.size)).ravel()
    omega = np.repeat(rule.directions, sig.size, axis=0)
    Rn = np.repeat(R, sig.size)
    return q, sigma, omega, Rn
