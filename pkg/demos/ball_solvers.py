"""Two dbar solvers on the unit ball in C^2.

The homotopy solver integrates the Cauchy-Fantappie form Omega^01 over the
sphere and the Bochner-Martinelli kernel over the ball.  BMK instead extends
f across the boundary (Seeley) and adds a collar correction K, so it never
needs a Leray map.  Both report max |dbar u - f| at interior points, measured
with central differences.

The homotopy runs take seconds.  BMK at 16 nodes per direction takes a couple
of minutes, so it is off unless RUN_BMK=1 is set.
"""

import os
import time

import numpy as np

from crlab.domain import builtin_family
from crlab.solvers import bmk_solve, homotopy_solve, interior_check_points, leray_reproduce


def dz1(p):
    return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)


def z2dz1(p):
    return np.stack([p[..., 1], np.zeros(p.shape[:-1], complex)], -1)


ball = builtin_family("ball")
pts = interior_check_points(ball, 0.0, 6)

# the Leray kernel with g = conj(zeta) reproduces holomorphic functions
z = np.array([[0.3, 0.1]], complex)
v = leray_reproduce(ball, 0.0, lambda p: p[..., 0] * p[..., 1] + 3, z, 32)[0]
print(f"Leray reproduction of z1 z2 + 3 at (0.3, 0.1): {v.real:.12f}")

print("\nhomotopy solver, f = dzbar1")
for q in (8, 12, 16, 24):
    t0 = time.perf_counter()
    rep = homotopy_solve(ball, 0.0, dz1, pts, quad_n=q)
    print(f"  quad_n={q:>3}  residual {rep.residual:.2e}  ({time.perf_counter() - t0:.1f} s)")

if os.environ.get("RUN_BMK") == "1":
    for name, f in (("dzbar1", dz1), ("z2 dzbar1", z2dz1)):
        rep = bmk_solve(ball, 0.0, f, pts, quad_n=16)
        print(f"BMK, f = {name}: residual {rep.residual:.2e} ({rep.timing:.0f} s)")
