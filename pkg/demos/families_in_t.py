"""Families of domains: continuity in t, Cousin-I and the Oka-Weil step.

On the shifted ball |z - 0.1 t e1|^2 < 1 the homotopy solutions of
dbar u = dzbar1 move with t.  The sup-distance between u^t and u^{t+d} should
halve when d halves.

For n = 1 the first Cousin problem on a two-piece cover and one Oka-Weil
approximation step use the Cauchy-Pompeiu solver and Leray sums.
"""

import numpy as np

from crlab.domain import builtin_family
from crlab.solvers import cousin1_solve, oka_weil_step, solve_family


def dz1(p):
    return np.stack([np.ones(p.shape[:-1], complex), np.zeros(p.shape[:-1], complex)], -1)


fam = builtin_family("shifted_ball")
fr = solve_family(fam, [0.5, 0.55, 0.6, 0.7], lambda t: dz1, quad_n=12)
u0 = fr.reports[0].u
for r, t in zip(fr.reports[1:], fr.t_grid[1:]):
    d = t - 0.5
    print(f"d = {d:.2f}: sup |u^(t+d) - u^t| = {np.max(np.abs(r.u - u0)):.4f}   ratio to d: {np.max(np.abs(r.u - u0)) / d:.4f}")

disk = builtin_family("disk")
res = cousin1_solve(disk, 0.0, lambda z: 1.0 / (z[..., 0] + 0.6), m_rad=96, m_ang=192)
print(f"\nCousin-I with f_ab = 1/(z + 0.6): decomposition {res.decomposition_residual:.1e}, "
      f"holomorphy {max(res.holo_residual_a, res.holo_residual_b):.1e}")

print("\nOka-Weil: approximating 1/(1.05 - z) on |z| <= 0.9 by N simple fractions")
for N in (16, 32, 64, 128, 256):
    ow = oka_weil_step(disk, 0.0, lambda z: 1.0 / (1.05 - z[..., 0]), 0.81 - 1, 1.05**2 - 1, N, c_mid=0.95**2 - 1)
    print(f"  N={N:>4}  sup error {ow.sup_error:.2e}")
