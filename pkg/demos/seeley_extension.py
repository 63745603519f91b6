"""Seeley extension across s = 0.

E f(s) = sum_k a_k phi(b_k s) f(b_k s) for s < 0, with b_k = -2^k and the
a_k chosen so that sum a_k b_k^m = 1 for m < N.  Then E f matches f to order
N - 1 at s = 0.  The moment system is a Vandermonde system in the b_k and
loses accuracy fast as N grows, which is why N is capped.
"""

import numpy as np

from crlab.seeley import SeeleyConditioningError, make_seeley_sequences, seeley_extend_halfspace

for N in range(1, 9):
    try:
        s = make_seeley_sequences(N)
    except SeeleyConditioningError as exc:
        print(f"N={N}: refused ({exc})")
        continue
    print(f"N={N}: max |a_k| = {np.max(np.abs(s.a)):10.1f}   moment residual {s.residual:.1e}")

seq = make_seeley_sequences(4)
E = seeley_extend_halfspace(np.sin, seq)
h = 1e-4
f0, fr1, fr2, fl1, fl2 = E(np.array([0.0, h, 2 * h, -h, -2 * h]))
print("\none-sided differences of the extension of sin at 0 (errors are O(h))")
print(f"  first:  right {(fr1 - f0) / h:+.5f}  left {(f0 - fl1) / h:+.5f}")
print(f"  second: right {(fr2 - 2 * fr1 + f0) / h**2:+.5f}  left {(fl2 - 2 * fl1 + f0) / h**2:+.5f}")
