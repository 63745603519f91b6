"""Registered experiments E1..E8, report rows, and resolution sweeps.

A config is a JSON object:

    {"experiment": "E1",
     "family": {"builtin": "disk"}            (optional; each experiment has a default)
     "resolution": {"quad_n": 128, ...},      (knobs, see KNOBS)
     "t_grid": [0.0, 0.5, 1.0],               (optional)
     "output": {"csv": "out.csv", "json": "out.json"}}

Unknown keys and unknown knobs are rejected.  Every row carries its own
tolerance; ``pass`` is value <= tolerance, except for rows whose metric is a
lower bound (named ``min_*``), where it is value >= -tolerance, and range rows
where the tolerance is a (lo, hi) pair.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import ConfigError, builtin_family, family_from_config

__all__ = [
    "ReportRow",
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "sweep",
    "rows_to_csv",
    "EXPERIMENTS",
    "KNOBS",
    "CSV_HEADER",
    "max_threads",
]

CSV_HEADER = ["experiment", "t", "resolution", "metric", "value", "tolerance", "pass"]


def max_threads() -> int:
    """Thread cap from CRLAB_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("CRLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class ReportRow:
    experiment: str
    t: float
    resolution: str
    metric: str
    value: float
    tolerance: float | tuple

    @property
    def passed(self) -> bool:
        v = self.value
        if not math.isfinite(v):
            return False
        tol = self.tolerance
        if isinstance(tol, tuple):
            return tol[0] <= v <= tol[1]
        if self.metric.startswith("min_"):
            return v >= -tol
        return v <= tol

    def as_list(self):
        tol = self.tolerance
        tol_s = f"[{tol[0]:g};{tol[1]:g}]" if isinstance(tol, tuple) else f"{tol:g}"
        return [self.experiment, f"{self.t:g}", self.resolution, self.metric, f"{self.value:.10g}", tol_s,
                "true" if self.passed else "false"]


@dataclass
class ExperimentConfig:
    experiment: str
    family: dict | None
    resolution: dict
    t_grid: list | None
    output: dict


_TOP_KEYS = {"experiment", "family", "resolution", "t_grid", "output"}


def load_config(cfg) -> ExperimentConfig:
    """Validate a config dict or JSON path; errors name the offending path/key."""
    where = "config"
    if isinstance(cfg, (str, Path)):
        where = str(cfg)
        try:
            cfg = json.loads(Path(cfg).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: top level must be an object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{where}: unknown experiment id {exp!r}; choose from {sorted(EXPERIMENTS)}")
    res = dict(cfg.get("resolution", {}))
    bad = set(res) - set(KNOBS[exp])
    if bad:
        raise ConfigError(f"{where}: unknown resolution knobs {sorted(bad)} for {exp}; known {sorted(KNOBS[exp])}")
    out = dict(cfg.get("output", {}))
    bad = set(out) - {"csv", "json"}
    if bad:
        raise ConfigError(f"{where}: unknown output keys {sorted(bad)}")
    return ExperimentConfig(exp, cfg.get("family"), res, cfg.get("t_grid"), out)


def _knobs(cfg: ExperimentConfig) -> dict:
    k = dict(KNOBS[cfg.experiment])
    k.update(cfg.resolution)
    return k


def _family(cfg: ExperimentConfig, default):
    if cfg.family is None:
        return builtin_family(default) if isinstance(default, str) else family_from_config(default)
    return family_from_config(cfg.family)


def _res(**kw) -> str:
    return ";".join(f"{k}={v}" for k, v in kw.items())


def _dz1(p):
    return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)


def _z2dz1(p):
    return np.stack([p[..., 1], np.zeros(p.shape[:-1], complex)], -1)


# ---------------------------------------------------------------- E1..E8


def _e1(cfg):
    """Cauchy-Pompeiu on the disk.

    f = 1 gives u = zbar.  f = 1/(zbar - a), a = 1.2, gives u = log(1 - zbar/a)
    (termwise from T[zbar^k] = zbar^{k+1}/(k+1)); its pole near the circle makes
    the quadrature error visible, so sweeps track that row.
    """
    from .solvers import cauchy_pompeiu

    k = _knobs(cfg)
    fam = _family(cfg, "disk")
    g = np.linspace(-0.7, 0.7, k["grid"])
    X, Y = np.meshgrid(g, g)
    z = (X + 1j * Y).reshape(-1, 1)
    rows = []
    for t in cfg.t_grid or [0.0]:
        u = cauchy_pompeiu(fam, t, lambda p: np.ones(p.shape[:-1], complex), z, k["quad_n"], k["quad_n"])
        err = float(np.max(np.abs(u - np.conj(z[:, 0]))))
        rows.append(ReportRow("E1", t, _res(quad_n=k["quad_n"]), "max_abs_err", err, 1e-4))
        if fam.n == 1 and np.allclose(fam.center, 0) and fam.name == "disk":
            a = 1.2
            u = cauchy_pompeiu(fam, t, lambda p: 1.0 / (np.conj(p[..., 0]) - a), z, k["quad_n"], k["quad_n"])
            err = float(np.max(np.abs(u - np.log(1.0 - np.conj(z[:, 0]) / a))))
            rows.append(ReportRow("E1", t, _res(quad_n=k["quad_n"]), "max_abs_err_pole", err, 1e-4))
    return rows


def _e2(cfg):
    """Ball solves: BMK and homotopy residuals, refinement, cross-check, K-part Holder trend."""
    from .calculus import dbar_fd, holder_seminorm
    from .seeley import make_seeley_sequences
    from .solvers import _collar_data, bmk_parts, bmk_solve, homotopy_solve, interior_check_points, refine

    k = _knobs(cfg)
    fam = _family(cfg, "ball")
    t = (cfg.t_grid or [0.0])[0]
    q = k["quad_n"]
    pts = interior_check_points(fam, t, k["points"])
    rows = []
    forms = {"dz1": _dz1, "z2dz1": _z2dz1}
    for name, f in forms.items():
        rep = refine(bmk_solve, fam, t, f, q, pts) if k["refine"] else bmk_solve(fam, t, f, pts, quad_n=q)
        base = rep.diagnostics.get("coarse_residual", rep.residual)
        rows.append(ReportRow("E2", t, _res(solver="bmk", f=name, quad_n=q), "residual", base, 1e-2))
        if k["refine"]:
            rows.append(ReportRow("E2", t, _res(solver="bmk", f=name, quad_n=2 * q), "refinement_ratio", rep.refinement_ratio, 0.7))
            rows.append(ReportRow("E2", t, _res(solver="bmk", f=name, quad_n=q), "max_seconds",
                                  max(rep.timing, rep.diagnostics["coarse_timing"]), 300.0))
    # the homotopy operator has no collar term; it needs a finer sphere grid
    # than BMK for the same residual but each node is cheaper
    qh = k["homotopy_quad_n"]
    hom = refine(homotopy_solve, fam, t, _dz1, qh, pts) if k["refine"] else homotopy_solve(fam, t, _dz1, pts, quad_n=qh)
    rows.append(ReportRow("E2", t, _res(solver="homotopy", f="dz1", quad_n=qh), "residual",
                          hom.diagnostics.get("coarse_residual", hom.residual), 1e-2))
    if k["refine"]:
        rows.append(ReportRow("E2", t, _res(solver="homotopy", f="dz1", quad_n=2 * qh), "refinement_ratio", hom.refinement_ratio, 0.6))

    # the two solutions differ by a holomorphic function
    sub = pts[: max(2, k["points"] // 4)]
    ha = lambda z: homotopy_solve(fam, t, _dz1, z.reshape(-1, 2), quad_n=qh, check=False).u.reshape(z.shape[:-1])  # noqa: E731
    hb = lambda z: bmk_solve(fam, t, _dz1, z.reshape(-1, 2), quad_n=q, check=False).u.reshape(z.shape[:-1])  # noqa: E731
    diff = dbar_fd(lambda z: ha(z) - hb(z), sub)
    rows.append(ReportRow("E2", t, _res(quad_n=q), "cross_solver_dbar", float(np.max(np.abs(diff))), 1e-2))

    # C^{1/2} quotient of the K-part on interior collars of width 0.2 * 2^-j
    if k["holder_levels"] > 1:
        col = _collar_data(fam, t, _z2dz1, make_seeley_sequences(), 0.2, q, q)
        quot = []
        for j in range(k["holder_levels"]):
            w = 0.2 * 2.0**-j
            R, T = np.meshgrid(np.linspace(1 - w, 1 - w / 10, 10), np.linspace(0, w, 10), indexing="ij")
            zz = fam.center + np.stack([R * np.cos(T) + 0j, R * np.sin(T) + 0j], -1).reshape(-1, 2)
            _, _, K, _ = bmk_parts(fam, t, _z2dz1, zz, q, col=col)
            quot.append(holder_seminorm(zz, K, 0.5).seminorm)
        growth = max(b / a for a, b in zip(quot[:-1], quot[1:]))
        rows.append(ReportRow("E2", t, _res(levels=k["holder_levels"], quad_n=q), "holder_growth", growth, 2.0))
    return rows


def _e3(cfg):
    """Leray reproduction of polynomials on the boundary."""
    from .solvers import leray_reproduce

    k = _knobs(cfg)
    fam = _family(cfg, "ball")
    rows = []
    for t in cfg.t_grid or [0.0]:
        if fam.n == 1:
            m = k["quad_n"] or 256
            z = fam.center + np.array([[0.3 + 0.1j], [-0.2 + 0.4j], [0.0]])
            one = leray_reproduce(fam, t, lambda p: np.ones(p.shape[:-1]), z, m)
            rows.append(ReportRow("E3", t, _res(quad_n=m), "err_one", float(np.max(np.abs(one - 1))), 1e-8))
            poly = lambda p: p[..., 0] ** 3 + 2 * p[..., 0]  # noqa: E731
            v = leray_reproduce(fam, t, poly, z, m)
            rows.append(ReportRow("E3", t, _res(quad_n=m), "err_poly", float(np.max(np.abs(v - poly(z)))), 1e-8))
        else:
            m = k["quad_n"] or 64
            z = fam.center + np.array([[0.3, 0.1], [0.1 - 0.2j, 0.3j]], complex)
            one = leray_reproduce(fam, t, lambda p: np.ones(p.shape[:-1]), z, m)
            rows.append(ReportRow("E3", t, _res(quad_n=m), "err_one", float(np.max(np.abs(one - 1))), 1e-6))
            v = leray_reproduce(fam, t, lambda p: p[..., 0] * p[..., 1] + 3, z[:1], m)
            exact = z[0, 0] * z[0, 1] + 3
            rows.append(ReportRow("E3", t, _res(quad_n=m), "err_poly", float(abs(v[0] - exact)), 1e-5))
    return rows


def _e4(cfg):
    """Support inequality 2 Re F >= r(zeta) - r(z) + lambda0/4 |zeta - z|^2 near the boundary."""
    from .kernels import check_support_inequality, sample_band_pairs

    k = _knobs(cfg)
    fam = _family(cfg, "ball")
    rows = []
    for t in cfg.t_grid or list(np.linspace(0.0, 1.0, 5)):
        zeta, z = sample_band_pairs(fam, t, k["pairs"], k["distance"], seed=k["seed"])
        chk = check_support_inequality(fam, t, zeta, z, tol=k["tolerance"])
        rows.append(ReportRow("E4", float(t), _res(pairs=k["pairs"]), "min_slack", chk.margin, k["tolerance"]))
    return rows


def _e5(cfg):
    """Chart normalization and bump certificate at one boundary point."""
    from .convexify import bump_search

    k = _knobs(cfg)
    fam = _family(cfg, "ball")
    t = (cfg.t_grid or [0.0])[0]
    p = np.asarray(k["point"], float)
    p = p[: fam.n] + 1j * p[fam.n :] if p.size == 2 * fam.n else p.astype(complex)
    chart, _, cert = bump_search(fam, t, p)
    res = _res(grid_n=11, delta=f"{chart.delta:g}")
    rows = [
        ReportRow("E5", t, res, "min_real_hessian_eig", cert.min_real_hessian_eig, 0.0),
        ReportRow("E5", t, res, "normal_form_residue", max(chart.residues.values()), 1e-10),
        ReportRow("E5", t, res, "separation_violations", 0.0 if cert.separation_ok else 1.0, 0.0),
        ReportRow("E5", t, res, "patch_violations", 0.0 if cert.patch_ok else 1.0, 0.0),
        ReportRow("E5", t, res, "min_levi_eig_next", cert.min_levi_eig, 0.0),
    ]
    return rows


def _e6(cfg):
    """Seeley sequences: moments, polynomial reproduction, linearity."""
    from .seeley import make_seeley_sequences, seeley_extend_halfspace

    k = _knobs(cfg)
    seq = make_seeley_sequences(k["N"])
    N = seq.N
    s = np.linspace(-0.99 / 2 ** (N - 1), 0.5, 401)
    worst = 0.0
    for d in range(N):
        ext = seeley_extend_halfspace(lambda x, d=d: x**d, seq)
        worst = max(worst, float(np.max(np.abs(ext(s) - s**d))))
    rng = np.random.default_rng(0)
    c = rng.normal(size=3)
    fa, fb = np.sin, np.exp
    lhs = seeley_extend_halfspace(lambda x: c[0] * fa(x) + c[1] * fb(x), seq)(s)
    rhs = c[0] * seeley_extend_halfspace(fa, seq)(s) + c[1] * seeley_extend_halfspace(fb, seq)(s)
    res = _res(N=N)
    return [
        ReportRow("E6", 0.0, res, "moment_residual", seq.residual, 1e-9),
        ReportRow("E6", 0.0, res, "poly_reproduction_err", worst, 1e-8),
        ReportRow("E6", 0.0, res, "linearity_err", float(np.max(np.abs(lhs - rhs))), 1e-13),
    ]


def _e7(cfg):
    """Continuity in t of homotopy solutions on the shifted ball."""
    from .solvers import homotopy_solve, solve_family

    k = _knobs(cfg)
    fam = _family(cfg, "shifted_ball")
    t0 = k["t0"]
    d = k["delta"]
    fr = solve_family(fam, [t0, t0 + d / 2, t0 + d], lambda t: _dz1, quad_n=k["quad_n"], workers=max_threads())
    if fr.failures:
        return [ReportRow("E7", t0, _res(quad_n=k["quad_n"]), "solve_failures", float(len(fr.failures)), 0.0)]
    u = [r.u for r in fr.reports]
    m_full = float(np.max(np.abs(u[2] - u[0])))
    m_half = float(np.max(np.abs(u[1] - u[0])))
    res = _res(quad_n=k["quad_n"], delta=d)
    rows = [
        ReportRow("E7", t0, res, "modulus_ratio", m_full / m_half, (1.5, 2.5)),
        ReportRow("E7", t0, res, "modulus_constant", m_full / d, 10.0),
    ]
    pts = fr.reports[0].points
    t1 = t0 + d
    a = homotopy_solve(fam, t1, lambda p: t1 * _dz1(p), pts, quad_n=k["quad_n"]).u
    b = homotopy_solve(fam, t1, _dz1, pts, quad_n=k["quad_n"]).u
    rows.append(ReportRow("E7", t1, res, "linearity_err", float(np.max(np.abs(a - t1 * b))), 1e-8))
    return rows


def _e8(cfg):
    """Cousin-I on a two-piece cover of a shifted disk, and the Oka-Weil step on the unit disk."""
    from .solvers import cousin1_solve, oka_weil_step

    k = _knobs(cfg)
    fam = _family(cfg, {"n": 1, "r": "abs2(z1 - 0.1*t) - 1", "box": 1.5, "name": "shifted_disk"})
    rows = []
    p = -0.6
    for name, fab in (("one", lambda z: np.ones(z.shape[:-1], complex)), ("pole", lambda z: 1.0 / (z[..., 0] - p))):
        for t in cfg.t_grid or [0.0, 0.5, 1.0]:
            res = cousin1_solve(fam, t, fab, m_rad=k["quad_n"], m_ang=2 * k["quad_n"])
            r = _res(f_ab=name, quad_n=k["quad_n"])
            rows.append(ReportRow("E8", t, r, "decomposition_err", res.decomposition_residual, 1e-6))
            rows.append(ReportRow("E8", t, r, "holomorphy_residual", max(res.holo_residual_a, res.holo_residual_b), 1e-3))
    disk = builtin_family("disk")
    h = lambda z: 1.0 / (1.05 - z[..., 0])  # noqa: E731
    errs = []
    for N in k["kernel_terms"]:
        ow = oka_weil_step(disk, 0.0, h, 0.81 - 1.0, 1.05**2 - 1.0, N, c_mid=0.95**2 - 1.0)
        errs.append(ow.sup_error)
        rows.append(ReportRow("E8", 0.0, _res(N=N), "oka_weil_sup_err", ow.sup_error, 1e-3 if N >= 256 else math.inf))
    mono = all(b < a for a, b in zip(errs[:-1], errs[1:]))
    rows.append(ReportRow("E8", 0.0, _res(N="/".join(map(str, k["kernel_terms"]))), "oka_weil_nonmonotone", 0.0 if mono else 1.0, 0.0))
    return rows


EXPERIMENTS = {"E1": _e1, "E2": _e2, "E3": _e3, "E4": _e4, "E5": _e5, "E6": _e6, "E7": _e7, "E8": _e8}

KNOBS = {
    "E1": {"quad_n": 128, "grid": 20},
    "E2": {"quad_n": 16, "homotopy_quad_n": 24, "points": 8, "refine": True, "holder_levels": 3},
    "E3": {"quad_n": 0},
    "E4": {"pairs": 10000, "distance": 0.3, "seed": 0, "tolerance": 1e-9},
    "E5": {"point": [1.0, 0.0, 0.0, 0.0]},
    "E6": {"N": 6},
    "E7": {"quad_n": 12, "t0": 0.5, "delta": 0.2},
    "E8": {"quad_n": 128, "kernel_terms": [64, 128, 256]},
}

# the metric a sweep tracks for each experiment
_SWEEP_METRIC = {"E1": "max_abs_err_pole", "E2": "residual", "E3": "err_poly", "E4": "min_slack", "E5": "min_real_hessian_eig",
                 "E6": "poly_reproduction_err", "E7": "linearity_err", "E8": "holomorphy_residual"}


def run_experiment(cfg) -> list[ReportRow]:
    """Run one experiment; writes CSV/JSON if the config names output paths."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    rows = EXPERIMENTS[cfg.experiment](cfg)
    if "csv" in cfg.output:
        Path(cfg.output["csv"]).write_text(rows_to_csv(rows))
    if "json" in cfg.output:
        Path(cfg.output["json"]).write_text(json.dumps(rows_to_json(rows), indent=2, sort_keys=True))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def rows_to_json(rows) -> dict:
    return {
        "rows": [dict(zip(CSV_HEADER, r.as_list())) for r in rows],
        "all_pass": all(r.passed for r in rows),
    }


def sweep(cfg, knob: str, values) -> list[dict]:
    """Run the experiment once per knob value; report the tracked metric and
    the empirical order log(e_k / e_{k+1}) / log(v_{k+1} / v_k)."""
    if not isinstance(cfg, ExperimentConfig):
        cfg = load_config(cfg)
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if knob not in KNOBS[cfg.experiment]:
        raise ConfigError(f"{knob!r} is not a resolution knob of {cfg.experiment}; known {sorted(KNOBS[cfg.experiment])}")
    metric = _SWEEP_METRIC[cfg.experiment]
    table = []
    for v in values:
        sub = ExperimentConfig(cfg.experiment, cfg.family, {**cfg.resolution, knob: v}, cfg.t_grid, {})
        rows = [r for r in EXPERIMENTS[cfg.experiment](sub) if r.metric == metric]
        table.append({"knob": knob, "value": v, "metric": metric, "error": max(abs(r.value) for r in rows),
                      "pass": all(r.passed for r in rows)})
    for a, b in zip(table[:-1], table[1:]):
        try:
            b["order"] = math.log(a["error"] / b["error"]) / math.log(float(b["value"]) / float(a["value"]))
        except (ValueError, ZeroDivisionError):
            b["order"] = float("nan")
    if table:
        table[0]["order"] = float("nan")
    return table
