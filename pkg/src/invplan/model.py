"""Model parameters, the z <-> u change of variables and the closed-form case.

The value function z solves

    -2 sigma^2 Lap z + |grad z|^2 + 4 alpha z = 4 |x|^2     on R^N

and u = exp(-z / (2 sigma^2)) turns it into the semilinear problem

    -Lap u + |x|^2 u / sigma^4 = -(2 alpha / sigma^2) u ln u.

When alpha = N sigma^2 both equations have explicit quadratic-exponent
solutions u = exp(m (|x|^2 + 1)), which serve as the exact reference
throughout the test suite.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (NonPositiveAlpha, NonPositiveDim, NonPositiveSigma,
                     NonPositiveU, OracleUnavailable, UAboveOne)

__all__ = ['ModelParams', 'ClosedFormSolution', 'validate_params',
           'u_from_z', 'z_from_u', 'closed_form_m', 'closed_form_z',
           'closed_form_dz_dr', 'closed_form_u', 'closed_form_pde_residual',
           'pde_residual_z', 'POSITIVE_Z', 'NEGATIVE_Z']

POSITIVE_Z = 'positive-z'
NEGATIVE_Z = 'negative-z'
_BRANCHES = (POSITIVE_Z, NEGATIVE_Z)

ORACLE_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Dimension N (number of goods), volatility sigma and discount alpha."""
    dim: int
    sigma: float
    alpha: float

    @property
    def oracle_available(self):
        target = self.dim * self.sigma ** 2
        return abs(self.alpha - target) <= ORACLE_RTOL * max(abs(target), abs(self.alpha))

    @property
    def s2(self):
        return self.sigma ** 2

    def to_dict(self):
        return {'dim': self.dim, 'sigma': self.sigma, 'alpha': self.alpha}


def validate_params(dim, sigma, alpha):
    if isinstance(dim, bool) or int(dim) != dim or dim < 1:
        raise NonPositiveDim(f"dim must be an integer >= 1, got {dim!r}")
    sigma = float(sigma)
    alpha = float(alpha)
    if not (sigma > 0 and math.isfinite(sigma)):
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma!r}")
    if not (alpha > 0 and math.isfinite(alpha)):
        raise NonPositiveAlpha(f"alpha must be > 0, got {alpha!r}")
    return ModelParams(int(dim), sigma, alpha)


def u_from_z(z_value, params):
    """u = exp(-z / (2 sigma^2)); works elementwise on arrays."""
    return np.exp(-np.asarray(z_value, dtype=float) / (2.0 * params.s2))[()]


def z_from_u(u_value, params):
    """z = -2 sigma^2 ln u.

    Raises NonPositiveU for u <= 0. Values above one are allowed (they give a
    negative z) but emit a UAboveOne warning.
    """
    u = np.asarray(u_value, dtype=float)
    if np.any(~(u > 0)):
        raise NonPositiveU(f"u must be > 0, got min {np.min(u)!r}")
    if np.any(u > 1.0):
        warnings.warn(f"u = {np.max(u)!r} exceeds 1; z will be negative", UAboveOne,
                      stacklevel=2)
    return (-2.0 * params.s2 * np.log(u))[()]


@dataclass(frozen=True)
class ClosedFormSolution:
    """u = exp(m (|x|^2 + 1)) for the alpha = N sigma^2 case."""
    m: float
    branch: str
    params: ModelParams

    @property
    def z_coeff(self):
        # z = z_coeff * (|x|^2 + 1)
        return -2.0 * self.params.s2 * self.m

    def quadratic_residual(self):
        s2 = self.params.s2
        return 4.0 * s2 * s2 * self.m ** 2 - 2.0 * self.params.alpha * s2 * self.m - 1.0


def _require_oracle(params):
    if not params.oracle_available:
        raise OracleUnavailable(
            f"closed form needs alpha == dim*sigma^2; got alpha={params.alpha!r}, "
            f"dim*sigma^2={params.dim * params.s2!r}")


def closed_form_m(params, branch=POSITIVE_Z):
    _require_oracle(params)
    if branch not in _BRANCHES:
        raise ValueError(f"branch must be one of {_BRANCHES}, got {branch!r}")
    a = params.alpha
    root = math.sqrt(a * a + 4.0)
    if branch == POSITIVE_Z:
        m = (a - root) / (4.0 * params.s2)
    else:
        m = (a + root) / (4.0 * params.s2)
    return ClosedFormSolution(m, branch, params)


def _solution(params, branch):
    if isinstance(params, ClosedFormSolution):
        return params
    return closed_form_m(params, branch)


def closed_form_z(x_norm, params, branch=POSITIVE_Z):
    """z(|x|) = -2 sigma^2 m (|x|^2 + 1). Accepts params or a ClosedFormSolution."""
    sol = _solution(params, branch)
    r = np.asarray(x_norm, dtype=float)
    return (sol.z_coeff * (r * r + 1.0))[()]


def closed_form_dz_dr(x_norm, params, branch=POSITIVE_Z):
    sol = _solution(params, branch)
    return (2.0 * sol.z_coeff * np.asarray(x_norm, dtype=float))[()]


def closed_form_u(x_norm, params, branch=POSITIVE_Z):
    sol = _solution(params, branch)
    r = np.asarray(x_norm, dtype=float)
    return np.exp(sol.m * (r * r + 1.0))[()]


def pde_residual_z(z, grad_norm, laplacian, x_norm, params):
    """-2 sigma^2 Lap z + |grad z|^2 + 4 alpha z - 4 |x|^2."""
    return (-2.0 * params.s2 * laplacian + grad_norm ** 2 + 4.0 * params.alpha * z
            - 4.0 * np.asarray(x_norm, dtype=float) ** 2)


def closed_form_pde_residual(x_norm, params, branch=POSITIVE_Z):
    """Residual of the z-equation for the closed form, derivatives taken analytically.

    With z = k(r^2 + 1): grad z = 2 k x, so |grad z| = 2 k r, and Lap z = 2 k N.
    """
    sol = _solution(params, branch)
    p = sol.params
    k = sol.z_coeff
    r = np.asarray(x_norm, dtype=float)
    z = k * (r * r + 1.0)
    return pde_residual_z(z, 2.0 * k * r, 2.0 * k * p.dim, r, p)[()]
