"""Half-space torsion function: closed form, identities and a 1-D cross-check.

Run with ``python demos/halfspace_walkthrough.py``.
"""

import numpy as np

from gausstorsion.gauss import isoperimetric_function
from gausstorsion.halfspace import (ClosedFormSolution, HalfSpaceProblem, bvp_cross_check,
                                    distribution_of_v, evaluate_v, fubini_constant,
                                    halfspace_torsion, v_min)

s, beta = 0.3, 1.0
hs = HalfSpaceProblem.from_measure(s, beta)
sol = ClosedFormSolution(hs)
print(f"half-space {{x1 > {hs.lam:.6f}}} of measure {hs.measure():.6f}, beta = {beta}")
print(f"v_m = R(lam)/beta = {v_min(hs):.12f}")

# v grows like log x1 and is concave
x = hs.lam + np.array([0.0, 0.5, 1.0, 2.0, 5.0, 20.0])
for xi, vi in zip(x, evaluate_v(sol, x)):
    print(f"  v({xi:8.4f}) = {vi:.12f}")

T = halfspace_torsion(hs)
print(f"T = int v phi = {T:.14f}")

# the identity behind the boundary minimum and the Fubini constant
lhs = v_min(hs) * float(isoperimetric_function(s))
print(f"v_m I(s) = {lhs:.15f}   s/beta = {s / beta:.15f}")
print(f"Fubini constant {fubini_constant(hs):.15f} vs s/(2 beta) = {s / (2 * beta):.15f}")

# distribution function: flat at s up to v_m, then h(v^{-1}(t))
t = np.linspace(0, 3, 7)
print("  t      mu(t)")
for ti, mi in zip(t, distribution_of_v(sol, t)):
    print(f"  {ti:4.2f}  {mi:.10f}")

# finite-volume solve of the 1-D Robin problem on (lam, lam + 10)
print("1-D finite-volume cross-check:")
prev = None
for dx in (8e-3, 4e-3, 2e-3, 1e-3):
    err = bvp_cross_check(hs, 10.0, dx).max_deviation(sol)
    rate = "" if prev is None else f"  order {np.log2(prev / err):.2f}"
    print(f"  dx = {dx:.0e}  max |v_fd - v| = {err:.2e}{rate}")
    prev = err
