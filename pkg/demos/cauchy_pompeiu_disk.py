"""Solving dbar u = f on the unit disk with the Cauchy-Pompeiu operator.

Two right-hand sides have closed-form answers:

    f = 1               ->  u = conj(z)
    f = 1/(conj(z) - a) ->  u = log(1 - conj(z)/a)      (a = 1.2, outside the disk)

The first is integrated exactly by the polar rule (the integrand is a
trigonometric polynomial in the angle), the second has a pole close to the
circle and shows how the error falls as the rule is refined.
"""

import numpy as np

from crlab.domain import builtin_family
from crlab.solvers import cauchy_pompeiu

disk = builtin_family("disk")
g = np.linspace(-0.7, 0.7, 12)
z = (g[:, None] + 1j * g[None, :]).reshape(-1, 1)
a = 1.2

u = cauchy_pompeiu(disk, 0.0, lambda p: np.ones(p.shape[:-1]), z, 64, 64)
print(f"f = 1: max |u - conj(z)| = {np.max(np.abs(u - np.conj(z[:, 0]))):.2e}")

print("\nf = 1/(conj(z) - a)")
print(f"{'nodes':>6}  {'max error':>10}")
exact = np.log(1.0 - np.conj(z[:, 0]) / a)
for m in (8, 16, 32, 64, 128):
    u = cauchy_pompeiu(disk, 0.0, lambda p: 1.0 / (np.conj(p[..., 0]) - a), z, m, m)
    print(f"{m:>6}  {np.max(np.abs(u - exact)):>10.2e}")
