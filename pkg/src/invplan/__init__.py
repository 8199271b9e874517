"""Stochastic inventory planning with quadratic costs.

The optimal value function z of the infinite-horizon discounted problem
solves a Hamilton-Jacobi-Bellman equation; the logarithmic change of
variables u = exp(-z / (2 sigma^2)) turns it into a semilinear elliptic
problem that is solved here by monotone iteration between explicit sub- and
super-solutions. The resulting feedback policy is checked by Monte Carlo.
"""
from .errors import *  # noqa: F401,F403
from .model import (ModelParams, ClosedFormSolution, validate_params, u_from_z, z_from_u,
                    closed_form_m, closed_form_z, closed_form_dz_dr, closed_form_u,
                    closed_form_pde_residual, pde_residual_z, POSITIVE_Z, NEGATIVE_Z)
from .subsuper import (sub_coeffs, sub_solution, super_solution, nonlinearity,
                       analytic_operator)
from .pde_solver import (RadialGrid, BallSolution, ValueField, build_grid, solve_on_ball,
                         nested_solve, to_value_function, check_estimates, solve_full_grid_2d,
                         discrete_residual_norm, oracle_error)
from .policy import Policy, feedback_control, hamiltonian_reduction_check, value_at
from .mc_sim import (SimConfig, simulate_paths, simulate_policies, estimate_cost,
                     measure_dt_bias, martingale_diagnostic, transversality_and_moment_check,
                     compare_policies, default_horizon)

__version__ = '0.1.0'
