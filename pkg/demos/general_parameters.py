"""Without a closed form: solve numerically and drive the simulation from the field."""
from invplan import (Policy, SimConfig, check_estimates, estimate_cost, measure_dt_bias,
                     nested_solve, validate_params, value_at)

# alpha != N sigma^2, so only the numerical solution is available
params = validate_params(2, 0.8, 1.5)
print("closed form available:", params.oracle_available)

res = nested_solve([4, 5, 6, 7], 100, params)
print("nested differences:", ', '.join(f"{d:.2e}" for d in res.inner_diffs))
vf = res.value_fields[-1]
rep = check_estimates(vf, params)
print(f"estimates hold: {rep.ok}; |z_r|/(1+r) <= {rep.gradient_constant_inner:.3f} on r <= R/2")

policy = Policy.from_field(vf)
y0 = (1.0, -0.5)
config = SimConfig(y0=y0, horizon=10.0, dt=0.005, n_paths=10000, master_seed=1,
                   checkpoint_times=(0.0, 10.0))
est = estimate_cost(policy, config, params)
bias = measure_dt_bias(policy, config, params, n_paths=2000)
target = float(value_at(vf, (y0[0] ** 2 + y0[1] ** 2) ** 0.5))
print(f"z(y0) from the field      {target:.4f}")
print(f"simulated cost            {est.mean:.4f} +/- {est.std_error:.4f}"
      f"  (dt bias ~ {bias.bias:.1e}, tail <= {est.truncation_bound:.1e})")
print("paths that left the grid:", est.exit_count)
