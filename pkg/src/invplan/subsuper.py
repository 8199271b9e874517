"""Explicit sub- and super-solutions of the semilinear problem.

    G(u) := -Lap u + (|x|^2 / sigma^4) u + (2 alpha / sigma^2) u ln u

A sub-solution has G <= 0, a super-solution G >= 0. The pair used here is

    u_sub(x) = exp(a |x|^2 + b |x| + c),  a = -1/(2 sigma^2), b = 0,
                                           c = -1/(2 sigma^2) - N/(2 alpha)
    u_super(x) = 1
"""
from dataclasses import dataclass

import numpy as np

from .errors import UnknownFamily
from .model import closed_form_m

__all__ = ['SubSolutionCoeffs', 'sub_coeffs', 'sub_solution', 'super_solution',
           'analytic_operator', 'u_log_u', 'nonlinearity']


@dataclass(frozen=True)
class SubSolutionCoeffs:
    a: float
    b: float
    c: float


def sub_coeffs(params):
    s2 = params.s2
    return SubSolutionCoeffs(a=-1.0 / (2.0 * s2), b=0.0,
                             c=-1.0 / (2.0 * s2) - params.dim / (2.0 * params.alpha))


def sub_solution(x_norm, params):
    k = sub_coeffs(params)
    r = np.asarray(x_norm, dtype=float)
    return np.exp(k.a * r * r + k.b * r + k.c)[()]


def super_solution(x_norm):
    return np.ones_like(np.asarray(x_norm, dtype=float))[()]


def u_log_u(u):
    """u ln u with the continuous extension 0 ln 0 = 0 (and 0 for u < 0)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out[()]


def nonlinearity(u, r, params):
    """F(r, u) such that the equation reads -Lap u = F(r, u)."""
    r = np.asarray(r, dtype=float)
    return -(r * r / params.s2 ** 2) * u - (2.0 * params.alpha / params.s2) * u_log_u(u)


def analytic_operator(u_kind, x_norm, params):
    """G(u) at |x| for one of the analytic families 'sub', 'super', 'closed-form'.

    Derivatives are exact: for u = exp(a r^2 + c) one has
    Lap u = (2 a N + 4 a^2 r^2) u.
    """
    r = np.asarray(x_norm, dtype=float)
    s2 = params.s2
    N = params.dim
    if u_kind == 'super':
        return (r * r / (s2 * s2))[()]
    if u_kind == 'sub':
        k = sub_coeffs(params)
        a, expo = k.a, k.a * r * r + k.c
    elif u_kind == 'closed-form':
        m = closed_form_m(params).m
        a, expo = m, m * (r * r + 1.0)
    else:
        raise UnknownFamily(f"unknown family {u_kind!r}; expected sub, super or closed-form")
    u = np.exp(expo)
    lap = (2.0 * a * N + 4.0 * a * a * r * r) * u
    return (-lap + (r * r / (s2 * s2)) * u + (2.0 * params.alpha / s2) * u * expo)[()]
