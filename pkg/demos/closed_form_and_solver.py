"""Solve the semilinear problem on nested balls and compare with the closed form."""
import numpy as np

from invplan import (check_estimates, closed_form_m, closed_form_z, nested_solve,
                     validate_params, NEGATIVE_Z)

# alpha = N sigma^2 is the case with an explicit solution
params = validate_params(1, 1.0, 1.0)

pos = closed_form_m(params)
neg = closed_form_m(params, NEGATIVE_Z)
print(f"m (positive-z branch) = {pos.m:+.8f}   z(0) = {closed_form_z(0.0, pos):+.7f}")
print(f"m (negative-z branch) = {neg.m:+.8f}   z(0) = {closed_form_z(0.0, neg):+.7f}")

# monotone iteration on balls of radius 3..6 at h = 0.005
res = nested_solve([3, 4, 5, 6], 200, params, compare_radius=2.0)
for R, sol, err in zip(res.radii, res.solutions, res.oracle_errors):
    print(f"R = {R:.0f}: {sol.iterations_from_sub:4d} iterations, bracket width "
          f"{sol.bracket_width:.1e}, sup|z - z_exact| on r <= 2 = {err:.2e}")

# influence of the artificial boundary shrinks as the ball grows
print("consecutive differences on r <= 3:", np.array2string(np.array(res.inner_diffs),
                                                            precision=2))

vf = res.value_fields[-1]
rep = check_estimates(vf, params)
print(f"0 <= z <= r^2 + 2: {rep.lower_bound_ok and rep.upper_bound_ok}, "
      f"min curvature {rep.convexity_min:.4f}")

r = vf.grid.r
for x in (0.0, 0.5, 1.0, 2.0):
    i = int(round(x / vf.grid.h))
    print(f"r = {x:3.1f}   z = {vf.z_values[i]:.7f}   exact {closed_form_z(r[i], params):.7f}")
