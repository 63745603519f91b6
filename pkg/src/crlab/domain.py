"""Parameter families of domains D^t = {z in box : r^t(z) < 0}.

Real coordinates follow the convention (x_1..x_n, y_1..y_n) with
z_j = x_j + i y_j, so a box is a list of 2n intervals in that order and a
point given as reals is converted with ``to_complex``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .expr import DefiningExpr, EvaluationError, parse_defining_function

__all__ = [
    "PointClass",
    "DomainFamily",
    "BoundarySample",
    "NotStarShaped",
    "ConfigError",
    "to_complex",
    "to_real",
    "classify_point",
    "sample_boundary",
    "sphere_directions",
    "check_total_space_compactness",
    "openness_probe",
    "builtin_family",
    "BUILTIN_FAMILIES",
    "family_from_config",
]

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12
RAY_SAMPLES = 48


class NotStarShaped(ValueError):
    """A ray from the declared center crosses the boundary more than once."""


class ConfigError(ValueError):
    pass


class PointClass(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


def to_complex(x, n: int | None = None) -> np.ndarray:
    """Real vector(s) (x_1..x_n, y_1..y_n) to complex points."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2 if n is None else n
    if x.shape[-1] != 2 * n:
        raise ValueError(f"expected {2 * n} real coordinates, got {x.shape[-1]}")
    return x[..., :n] + 1j * x[..., n:]


def to_real(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


@dataclass(frozen=True)
class DomainFamily:
    """A family {D^t} given by one defining expression r(z, t)."""

    n: int
    r: DefiningExpr
    box: np.ndarray
    t_range: tuple = (0.0, 1.0)
    boundary_tol: float = 1e-9
    center: np.ndarray | None = None
    name: str = ""
    nonempty: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.shape != (2 * self.n, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ConfigError(f"box must be {2 * self.n} increasing intervals")
        object.__setattr__(self, "box", box)
        lo, hi = map(float, self.t_range)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError("t_range must be a closed subinterval of [0, 1]")
        object.__setattr__(self, "t_range", (lo, hi))
        if self.boundary_tol <= 0:
            raise ConfigError("boundary_tol must be positive")
        if self.center is None:
            c = to_complex(box.mean(axis=1), self.n)
        else:
            c = np.asarray(self.center)
            if not np.iscomplexobj(c):
                c = to_complex(c, self.n) if c.shape[-1] == 2 * self.n else c.astype(complex)
        if c.shape != (self.n,):
            raise ConfigError("center must have n complex or 2n real coordinates")
        object.__setattr__(self, "center", c.astype(complex))
        if self.r.n != self.n:
            raise ConfigError("defining expression dimension does not match n")

    # ------------------------------------------------------------------ values

    @classmethod
    def from_text(cls, text: str, n: int, box, **kw) -> DomainFamily:
        return cls(n=n, r=parse_defining_function(text, n), box=box, **kw)

    def evaluate(self, z, t):
        return self.r.evaluate(z, t)

    def raw(self, z, t):
        """Real part of r without domain checks (poles give inf/nan)."""
        with np.errstate(all="ignore"):
            return self.r.evaluate_complex(z, t, checked=False).real

    def grad_z(self, z, t):
        """Complex gradient (r_{z_1}, .., r_{z_n}), shape (..., n)."""
        vals = self.r.compiled_derivatives("grad", checked=False)(z, t)
        return np.stack(vals[1:], axis=-1)

    def value_and_grad(self, z, t):
        vals = self.r.compiled_derivatives("grad")(z, t)
        return vals[0].real, np.stack(vals[1:], axis=-1)

    def classify(self, z, t) -> PointClass:
        v = self.evaluate(np.asarray(z, dtype=complex), t)
        if v < -self.boundary_tol:
            return PointClass.INTERIOR
        if abs(v) <= self.boundary_tol:
            return PointClass.BOUNDARY
        return PointClass.EXTERIOR

    def contains(self, z, t) -> np.ndarray:
        return self.raw(z, t) < 0

    def in_box(self, z) -> np.ndarray:
        x = to_real(z)
        return np.all((x >= self.box[:, 0]) & (x <= self.box[:, 1]), axis=-1)

    def recentered(self, center) -> DomainFamily:
        """Same family with rays cast from ``center`` (compiled code is shared)."""
        return DomainFamily(self.n, self.r, self.box, self.t_range, self.boundary_tol, np.asarray(center, complex), self.name, self.nonempty)

    def with_t_range(self, t_range) -> DomainFamily:
        return DomainFamily(self.n, self.r, self.box, tuple(t_range), self.boundary_tol, self.center, self.name, self.nonempty)

    # ---------------------------------------------------------------- validity

    def validate(self, t_samples: int = 5, z_samples: int = 200, seed: int = 0) -> None:
        """Sample the box: r must be finite and real; D^t nonempty if declared."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(self.box[:, 0], self.box[:, 1], size=(z_samples, 2 * self.n))
        z = to_complex(x, self.n)
        for t in np.linspace(*self.t_range, t_samples):
            self.evaluate(z, t)
            if self.nonempty and self.raw(self.center, t) >= 0:
                raise ConfigError(f"D^t appears empty at t={t:g} (center is not interior)")

    # -------------------------------------------------------------------- rays

    def ray_length(self, omega) -> np.ndarray:
        """Distance from the center to the box along unit directions ``omega``."""
        d = to_real(omega)
        c = to_real(self.center)
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = np.where(d > 0, (self.box[:, 1] - c) / d, np.where(d < 0, (self.box[:, 0] - c) / d, np.inf))
        return np.min(hi, axis=-1)

    def _ray_values(self, rho, omega, t):
        return self.raw(self.center + rho[..., None] * omega, t)

    def _ray_slope(self, rho, omega, t):
        rz = self.grad_z(self.center + rho[..., None] * omega, t)
        return 2.0 * np.real(np.sum(rz * omega, axis=-1))

    def ray_roots(self, omega, t, guess=None, chunk: int = 8192):
        """Boundary radius R(omega) along each unit direction.

        Returns ``(R, ok)``; rays without a root have ``ok`` False and R nan.
        With ``guess`` a safeguarded Newton iteration is tried first and the
        full bracketing search runs only for rays where it fails.
        """
        omega = np.asarray(omega, dtype=complex)
        m = omega.shape[0]
        R = np.full(m, np.nan)
        ok = np.zeros(m, dtype=bool)
        todo = np.arange(m)
        if guess is not None:
            Rg, okg = self._newton(omega, t, np.broadcast_to(np.asarray(guess, float), (m,)).copy())
            R[okg] = Rg[okg]
            ok[okg] = True
            todo = np.flatnonzero(~okg)
        for s in range(0, todo.size, chunk):
            idx = todo[s : s + chunk]
            Ri, oki = self._bracket_search(omega[idx], t)
            R[idx] = Ri
            ok[idx] = oki
        return R, ok

    def _newton(self, omega, t, rho, lo=None, hi=None):
        lo = np.zeros_like(rho) if lo is None else lo.copy()
        hi = self.ray_length(omega) if hi is None else hi.copy()
        rho = rho.copy()
        active = np.arange(rho.size)
        for _ in range(NEWTON_MAX_ITER):
            r, om = rho[active], omega[active]
            f = self._ray_values(r, om, t)
            df = self._ray_slope(r, om, t)
            with np.errstate(all="ignore"):
                new = r - f / df
            # keep bracket bookkeeping when one is known
            lo[active] = np.where(f < 0, np.maximum(lo[active], r), lo[active])
            hi[active] = np.where(f > 0, np.minimum(hi[active], r), hi[active])
            bad = ~np.isfinite(new) | (new <= lo[active]) | (new >= hi[active])
            new = np.where(bad, 0.5 * (lo[active] + hi[active]), new)
            conv = np.abs(new - r) <= NEWTON_TOL * np.maximum(1.0, np.abs(r))
            rho[active] = new
            active = active[~conv]
            if active.size == 0:
                break
        f = self._ray_values(rho, omega, t)
        good = np.isfinite(f) & (np.abs(f) < 1e-10) & (rho > 0)
        return rho, good

    def _bracket_search(self, omega, t):
        m = omega.shape[0]
        L = self.ray_length(omega)
        frac = np.linspace(0.0, 1.0, RAY_SAMPLES + 1)
        rho = L[:, None] * frac[None, :]
        f = self._ray_values(rho, omega[:, None, :], t)
        R = np.full(m, np.nan)
        ok = np.zeros(m, dtype=bool)
        if np.any(~(f[:, 0] < 0)):
            raise NotStarShaped("declared center is not an interior point")
        sgn = np.where(np.isnan(f), 0, np.sign(f))
        change = (sgn[:, :-1] * sgn[:, 1:] < 0) | ((sgn[:, :-1] < 0) & (sgn[:, 1:] == 0))
        rows, cols = np.nonzero(change)
        if rows.size == 0:
            return R, ok
        a = rho[rows, cols]
        b = rho[rows, cols + 1]
        fa = f[rows, cols]
        om = omega[rows]
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = self._ray_values(mid, om, t)
            left = np.sign(fm) == np.sign(fa)
            a = np.where(left, mid, a)
            fa = np.where(left, fm, fa)
            b = np.where(left, b, mid)
        mid = 0.5 * (a + b)
        fm = self._ray_values(mid, om, t)
        # a sign change across a pole bisects to a huge |r|; a root to a tiny one
        scale = np.nanmax(np.abs(f[rows]), axis=1, initial=1.0)
        genuine = np.isfinite(fm) & (np.abs(fm) <= 1e-6 * np.maximum(1.0, scale))
        counts = np.bincount(rows[genuine], minlength=m)
        if np.any(counts > 1):
            k = int(np.flatnonzero(counts > 1)[0])
            raise NotStarShaped(
                f"ray {k} crosses the boundary {counts[k]} times at t={t:g}; "
                "the domain is not star-shaped about the declared center"
            )
        g_rows = rows[genuine]
        rho0 = mid[genuine]
        Rn, good = self._newton(om[genuine], t, rho0.copy(), lo=a[genuine].copy(), hi=b[genuine].copy())
        R[g_rows[good]] = Rn[good]
        ok[g_rows[good]] = True
        return R, ok

    def radial_function(self, t):
        """Callable omega -> R(omega), cached per t with a warm-start guess."""
        key = ("radial", float(t))
        if key not in self._cache:
            probe = sphere_directions(self.n, 8)
            R0, ok0 = self.ray_roots(probe, t)
            guess = float(np.nanmedian(R0[ok0])) if ok0.any() else None

            def radial(omega):
                omega = np.asarray(omega, dtype=complex)
                shape = omega.shape[:-1]
                flat = omega.reshape(-1, self.n)
                R, ok = self.ray_roots(flat, t, guess=guess)
                if not ok.all():
                    raise NotStarShaped(f"{np.count_nonzero(~ok)} rays have no boundary crossing at t={t:g}")
                return R.reshape(shape)

            self._cache[key] = radial
        return self._cache[key]


@dataclass
class BoundarySample:
    """Boundary points found along rays, with unit outward normals.

    ``normals`` are complex vectors whose real form is grad r/|grad r|:
    the real gradient of r is (2 Re r_z, -2 Im r_z), i.e. the complex vector
    2 conj(r_z).
    """

    points: np.ndarray
    normals: np.ndarray
    directions: np.ndarray
    radii: np.ndarray
    failures: list


def sphere_directions(n: int, resolution: int) -> np.ndarray:
    """Deterministic unit directions in C^n.

    n=1: ``resolution`` equally spaced angles 2 pi k / resolution.
    n=2: Hopf grid with ``resolution`` nodes in each of (s, alpha, beta).
    n>2: seeded Gaussian directions, ``resolution**2`` of them.
    """
    if n == 1:
        ang = 2 * np.pi * np.arange(resolution) / resolution
        return np.exp(1j * ang)[:, None]
    if n == 2:
        from .quadrature import hopf_grid

        return hopf_grid(resolution, resolution, resolution).directions
    rng = np.random.default_rng(12345)
    g = rng.normal(size=(resolution**2, n)) + 1j * rng.normal(size=(resolution**2, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_boundary(family: DomainFamily, t: float, resolution: int) -> BoundarySample:
    omega = sphere_directions(family.n, resolution)
    R, ok = family.ray_roots(omega, t)
    pts = family.center + R[ok, None] * omega[ok]
    rz = family.grad_z(pts, t)
    g = 2.0 * np.conj(rz)
    nrm = np.linalg.norm(g, axis=-1)
    if np.any(nrm == 0):
        raise EvaluationError("gradient of r vanishes at a boundary point")
    failures = [(int(k), "no sign change along ray") for k in np.flatnonzero(~ok)]
    return BoundarySample(pts, g / nrm[:, None], omega[ok], R[ok], failures)


def classify_point(family: DomainFamily, z, t) -> PointClass:
    return family.classify(z, t)


# ------------------------------------------------------------ total space

def check_total_space_compactness(indicators, t_grid, z_grid, eps: float | None = None):
    """Discrete upper semicontinuity test for a family of compact sets K^t.

    ``indicators[i]`` is a boolean mask over the common sample points
    ``z_grid`` (shape (P, d) real coordinates) for ``t_grid[i]``.  For each
    grid t and each neighbouring grid t', every point of K^{t'} must lie in
    the eps-dilation of K^t.  The default eps is twice the larger of the
    spatial and parameter spacings.

    Returns ``(ok, witness)`` where the witness is ``(point, t', t)`` for the
    first violation or None.
    """
    ind = np.asarray(indicators, dtype=bool)
    t_grid = np.asarray(t_grid, dtype=float)
    pts = np.asarray(z_grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if ind.shape != (t_grid.size, pts.shape[0]):
        raise ValueError("indicators must have shape (len(t_grid), number of points)")
    if eps is None:
        tree = cKDTree(pts)
        d, _ = tree.query(pts, k=2)
        hz = float(np.max(d[:, 1])) if pts.shape[0] > 1 else 0.0
        ht = float(np.max(np.diff(t_grid))) if t_grid.size > 1 else 0.0
        eps = 2.0 * max(hz, ht)
    for i in range(t_grid.size):
        K = pts[ind[i]]
        tree = cKDTree(K) if K.shape[0] else None
        for j in (i - 1, i + 1):
            if not 0 <= j < t_grid.size:
                continue
            Kn = pts[ind[j]]
            if Kn.shape[0] == 0:
                continue
            if tree is None:
                return False, (Kn[0], float(t_grid[j]), float(t_grid[i]))
            d, _ = tree.query(Kn, k=1)
            bad = np.flatnonzero(d > eps)
            if bad.size:
                return False, (Kn[bad[0]], float(t_grid[j]), float(t_grid[i]))
    return True, None


def openness_probe(family: DomainFamily, grid_n: int = 9, t_n: int = 5):
    """Interior samples well inside D must have every grid neighbour interior.

    A sample counts as well inside when r < -2 h Lip with h the largest grid
    spacing and Lip the largest sampled |grad_{x,t} r|.
    Returns ``(ok, witness)``.
    """
    n = family.n
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in family.box]
    ts = np.linspace(*family.t_range, t_n)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    z = to_complex(mesh, n)
    vals = np.stack([family.raw(z, t) for t in ts], axis=-1)
    lip = 0.0
    for t in ts:
        rz = family.grad_z(z, t)
        lip = max(lip, float(np.nanmax(2.0 * np.linalg.norm(rz, axis=-1))))
    if t_n > 1:
        rt = np.stack([family.r.dt().evaluate_complex(z, t).real for t in ts], axis=-1)
        lip = max(lip, float(np.nanmax(np.abs(rt))))
    h = max([a[1] - a[0] for a in axes] + ([ts[1] - ts[0]] if t_n > 1 else []))
    deep = vals < -2.0 * h * lip
    interior = vals < 0
    for ax in range(vals.ndim):
        for shift in (-1, 1):
            nb = np.roll(interior, shift, axis=ax)
            # neighbours that fall off the grid do not count
            edge = np.zeros_like(interior)
            sl = [slice(None)] * vals.ndim
            sl[ax] = 0 if shift == 1 else -1
            edge[tuple(sl)] = True
            bad = deep & ~nb & ~edge
            if bad.any():
                idx = np.unravel_index(int(np.flatnonzero(bad)[0]), bad.shape)
                return False, (z[idx[:-1]], float(ts[idx[-1]]))
    return True, None


# ----------------------------------------------------------------- builtins

def _box(n, half):
    return [[-half, half]] * (2 * n)


def _ball(n: int = 2) -> DomainFamily:
    text = "+".join(f"abs2(z{j + 1})" for j in range(n)) + "-1"
    return DomainFamily.from_text(text, n, _box(n, 1.5), name=f"ball{n}")


def _ellipsoid() -> DomainFamily:
    return DomainFamily.from_text("abs2(z1)+4*abs2(z2)-1", 2, _box(2, 1.5), name="ellipsoid")


def _shifted_ball() -> DomainFamily:
    return DomainFamily.from_text("abs2(z1-0.1*t)+abs2(z2)-1", 2, _box(2, 1.5), name="shifted_ball")


def _perturbed_ball() -> DomainFamily:
    return DomainFamily.from_text(
        "abs2(z1)+abs2(z2)-1+0.1*t*re(z1^2)", 2, _box(2, 1.5), name="perturbed_ball"
    )


def _non_psh() -> DomainFamily:
    return DomainFamily.from_text("abs2(z1)-2*abs2(z2)-1", 2, _box(2, 1.5), name="non_psh")


def _shrinking_ball() -> DomainFamily:
    # ball of radius 1/t about a fixed center, t away from 0
    return DomainFamily.from_text(
        "abs2(z1-0.1)+abs2(z2)-1/t^2", 2, _box(2, 2.5), t_range=(0.5, 1.0), name="shrinking_ball"
    )


def _exhaustion_sublevel() -> DomainFamily:
    # sublevel {phi^t < 1.1} of the exhaustion |z|^2 + t^2/(1 - t^2|z - c|^2).
    # Box and t-range keep the pole sphere |z - c| = 1/t outside the box;
    # beyond it r has a second, spurious zero set.
    return DomainFamily.from_text(
        "abs2(z1)+t^2/(1-t^2*abs2(z1-0.1))-1.1", 1, _box(1, 0.95), t_range=(0.5, 0.7), name="exhaustion_sublevel"
    )


def _disk() -> DomainFamily:
    return DomainFamily.from_text("abs2(z1)-1", 1, _box(1, 1.5), name="disk")


BUILTIN_FAMILIES = {
    "disk": _disk,
    "ball": _ball,
    "ellipsoid": _ellipsoid,
    "shifted_ball": _shifted_ball,
    "perturbed_ball": _perturbed_ball,
    "non_psh": _non_psh,
    "shrinking_ball": _shrinking_ball,
    "exhaustion_sublevel": _exhaustion_sublevel,
}


def builtin_family(name: str, **kw) -> DomainFamily:
    try:
        return BUILTIN_FAMILIES[name](**kw)
    except KeyError:
        raise ConfigError(f"unknown builtin family {name!r}; choose from {sorted(BUILTIN_FAMILIES)}") from None


_CONFIG_KEYS = {"n", "r", "box", "t_range", "center", "boundary_tol", "name", "nonempty"}


def family_from_config(cfg) -> DomainFamily:
    """Build a family from a JSON dict (or a path to a JSON file).

    A string value naming a builtin (``{"builtin": "ball"}``) is accepted too.
    """
    if isinstance(cfg, (str, Path)):
        try:
            cfg = json.loads(Path(cfg).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{cfg}: {exc}") from None
    if "builtin" in cfg:
        extra = set(cfg) - {"builtin"}
        if extra:
            raise ConfigError(f"unknown keys with builtin family: {sorted(extra)}")
        return builtin_family(cfg["builtin"])
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown family keys: {sorted(unknown)}")
    for key in ("n", "r", "box"):
        if key not in cfg:
            raise ConfigError(f"family config missing {key!r}")
    n = int(cfg["n"])
    center = cfg.get("center")
    box = cfg["box"]
    if isinstance(box, (int, float)):  # symmetric half-width
        box = _box(n, float(box))
    return DomainFamily(
        n=n,
        r=parse_defining_function(cfg["r"], n),
        box=box,
        t_range=tuple(cfg.get("t_range", (0.0, 1.0))),
        boundary_tol=float(cfg.get("boundary_tol", 1e-9)),
        center=None if center is None else np.asarray(center, dtype=float),
        name=str(cfg.get("name", "")),
        nonempty=bool(cfg.get("nonempty", True)),
    )
