"""Command line entry point ``crlab``.

    crlab run --config cfg.json
    crlab sweep --config cfg.json --knob quad_n --values 32,64,128
    crlab bump --family fam.json --point "1,0,0,0" --t 0.5 [--out DIR]
    crlab parse --expr "abs2(z1) + abs2(z2) - 1"

Exit status is 0 iff every report row passes (run, sweep) or the certificate
is valid (bump).  Configuration errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .domain import ConfigError, builtin_family, family_from_config


def _cmd_run(args) -> int:
    from .experiments import load_config, rows_to_csv, run_experiment

    cfg = load_config(args.config)
    rows = run_experiment(cfg)
    if "csv" not in cfg.output:
        sys.stdout.write(rows_to_csv(rows))
    failed = [r for r in rows if not r.passed]
    print(f"{cfg.experiment}: {len(rows) - len(failed)}/{len(rows)} rows pass", file=sys.stderr)
    return 0 if not failed else 1


def _parse_values(text: str):
    vals = [v for v in (s.strip() for s in text.split(",")) if v]
    if not vals:
        raise ConfigError("--values is empty")
    out = []
    for v in vals:
        try:
            out.append(int(v))
        except ValueError:
            out.append(float(v))
    return out


def _cmd_sweep(args) -> int:
    from .experiments import load_config, sweep

    cfg = load_config(args.config)
    table = sweep(cfg, args.knob, _parse_values(args.values))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["knob", "value", "metric", "error", "order", "pass"])
    for row in table:
        w.writerow([row["knob"], row["value"], row["metric"], f"{row['error']:.10g}", f"{row['order']:.4g}",
                    "true" if row["pass"] else "false"])
    return 0 if all(r["pass"] for r in table) else 1


def _load_family(spec: str):
    path = Path(spec)
    if path.exists():
        return family_from_config(path)
    return builtin_family(spec)


def _cmd_bump(args) -> int:
    from .convexify import bump_search
    from .domain import sample_boundary

    fam = _load_family(args.family)
    x = np.array([float(v) for v in args.point.split(",")])
    if x.size != 2 * fam.n:
        raise ConfigError(f"--point needs {2 * fam.n} real coordinates, got {x.size}")
    p = x[: fam.n] + 1j * x[fam.n :]
    chart, r_next, cert = bump_search(fam, args.t, p)
    out = cert.to_dict()
    out.update({"delta": chart.delta, "eps0": chart.eps0, "eps1": chart.eps1, "eps2": chart.eps2, "Cstar": chart.Cstar,
                "normal_form_residues": chart.residues, "r_next": str(r_next)})
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        _write_cloud(d / "patch.csv", cert.covered_boundary_patch)
        _write_cloud(d / "boundary.csv", sample_boundary(fam, args.t, 16).points)
        (d / "certificate.json").write_text(json.dumps(out, indent=2, sort_keys=True))
    return 0 if cert.valid else 1


def _write_cloud(path, z):
    n = z.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(n)] + [f"y{j + 1}" for j in range(n)])
        for row in np.concatenate([z.real, z.imag], axis=1):
            w.writerow([f"{v:.12g}" for v in row])


def _cmd_parse(args) -> int:
    n = args.n
    if n is None:
        idx = [int(k) for k in re.findall(r"z(\d+)", args.expr)]
        n = max(idx, default=1)
    e = ex.parse(args.expr, n)
    print(ex.to_text(e))
    print("\n".join(ex.tree_lines(e)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crlab", description="dbar solvers and bump constructions on families of domains")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="sweep a resolution knob")
    p.add_argument("--config", required=True)
    p.add_argument("--knob", required=True)
    p.add_argument("--values", required=True, help="comma separated")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bump", help="certify a bump at a boundary point")
    p.add_argument("--family", required=True, help="family JSON path or builtin name")
    p.add_argument("--point", required=True, help="real coordinates x1..xn,y1..yn")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--out", help="directory for CSV point clouds")
    p.set_defaults(func=_cmd_bump)

    p = sub.add_parser("parse", help="print the normalized expression tree")
    p.add_argument("--expr", required=True)
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=_cmd_parse)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ex.ExprSyntaxError) as exc:
        print(f"crlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
