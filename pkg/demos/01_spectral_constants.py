"""Spectral constants of a few matrices and what they control.

Run: python3 demos/01_spectral_constants.py
"""

import math

import numpy as np

from stabman.hypotheses import build_splitting, smallness_thresholds
from stabman.spectral import analyze_matrix, exp_growth_coefficient, matrix_exponential

# A saddle: two orthogonal eigenlines, so the angle is 90 degrees and
# c(F, G) = 1 / sin(45 deg) = sqrt 2.
sa = analyze_matrix(np.diag([-1.0, 1.0]))
sp = build_splitting(sa)
print("saddle diag(-1, 1)")
print(f"  family angle {math.degrees(sa.family_angle):.1f} deg, c_A = {sa.c_A:.6f}")
print(f"  K_A = {sa.K_A:.6f}, K'_A = {sa.Kp_A:.6f}")
print(f"  I_A = {sp.I_A}, gamma~ = {sp.gamma_tilde}, g_A = {sp.g_A}")

# The smallness thresholds that a quadratic nonlinearity with M2 = 2 must meet.
thr = smallness_thresholds(sp, sa, -0.5, 2.0, 1.0)
print("  thresholds at gamma = -1/2, M2 = 2, r = 1:")
for name in ("hyp3_bound", "prop_eps1_bound", "xi_tilde", "delta_tilde", "R_mu0"):
    print(f"    {name:16s} {getattr(thr, name):.6g}")

# Eigenlines closing in on each other make the constants blow up.
print("\nshear toward a double eigenvalue")
for eps in (1.0, 0.1, 0.01):
    A = np.array([[-1.0, 1.0], [0.0, -1.0 - eps]])
    s = analyze_matrix(A)
    print(f"  gap {eps:5.2f}: angle {math.degrees(s.family_angle):7.3f} deg, K_A = {s.K_A:10.3f}")

# The exponential bound ||exp(sA)|| <= B exp(alpha s) on a Jordan block.
J = np.array([[0.0, 1.0], [0.0, 0.0]])
sj = analyze_matrix(J)
B = exp_growth_coefficient(sj, 0.5)
worst = max(np.linalg.norm(matrix_exponential(J, s), 2) * math.exp(-0.5 * s)
            for s in np.linspace(0, 30, 301))
print(f"\nJordan block, alpha = 0.5: sup ||exp(sJ)|| e^(-alpha s) = {worst:.4f} <= B = {B:.4f}")
