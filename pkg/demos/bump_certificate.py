"""A Grauert bump at a boundary point, with its certificate.

At p the domain is put in normal form: a unitary change of coordinates, one
quadratic shear that removes the holomorphic Hessian and one that cancels the
term exp() creates.  The result r* is strictly convex near 0.  The bump lowers
r by delta near p.  The search halves delta until every check passes.
"""

import json

import numpy as np

from crlab.convexify import bump_search
from crlab.domain import builtin_family, sample_boundary

for name, t in (("ball", 0.0), ("perturbed_ball", 1.0), ("ellipsoid", 0.0)):
    fam = builtin_family(name)
    p = np.array([1.0 + 0j, 0j]) if name == "ball" else sample_boundary(fam, t, 4).points[1]
    chart, r_next, cert = bump_search(fam, t, p)
    print(f"\n{name} at p = {np.round(p, 4)}")
    print(f"  eps0={chart.eps0:g} eps1={chart.eps1:g} eps2={chart.eps2:g} C*={chart.Cstar:g} delta={chart.delta:g}")
    d = cert.to_dict()
    print("  " + json.dumps({k: d[k] for k in ("valid", "min_real_hessian_eig", "separation_gap", "min_levi_eig")}))
