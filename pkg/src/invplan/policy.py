"""Feedback production policies built from a value function.

Minimising p . grad z + |p|^2 over p gives p* = -grad z / 2, with minimum
-|grad z|^2 / 4. For a radial value function grad z(x) = z_r(|x|) x / |x|, so
every policy here has the form

    p(x) = -(factor / 2) z_r(|x|) x / |x|

with factor 0 for the zero policy and factor 1 for the optimal one.
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import StateOutsideGrid
from .model import ClosedFormSolution, closed_form_m, closed_form_z
from .pde_solver import ValueField

__all__ = ['Policy', 'HamiltonianCheck', 'feedback_control', 'hamiltonian_reduction_check',
           'value_at', 'radial_gradient']


class _FieldGradient:
    """Monotone cubic interpolant of nodal z_r, linear inside the first cell."""

    def __init__(self, vf):
        self.radius = vf.grid.radius
        self.h = vf.grid.h
        self.interp = PchipInterpolator(vf.grid.r, vf.z_r_values, extrapolate=False)
        self.z_interp = PchipInterpolator(vf.grid.r, vf.z_values, extrapolate=False)
        self.first = float(vf.z_r_values[1])

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = self.interp(r)
        near = r < self.h
        out[near] = self.first * r[near] / self.h
        return out


@dataclass(frozen=True, eq=False)
class Policy:
    source: object = None      # ValueField, ClosedFormSolution, or None for the zero policy
    factor: float = 1.0
    name: str = None

    @classmethod
    def zero(cls):
        return cls(None, 0.0, 'zero')

    @classmethod
    def closed_form(cls, params_or_solution):
        sol = params_or_solution
        if not isinstance(sol, ClosedFormSolution):
            sol = closed_form_m(sol)
        return cls(sol, 1.0)

    @classmethod
    def from_field(cls, value_field):
        return cls(value_field, 1.0)

    def scaled(self, factor):
        return Policy(self.source, self.factor * factor)

    @property
    def kind(self):
        if self.source is None or self.factor == 0.0:
            return 'zero'
        if self.factor != 1.0:
            return 'scaled'
        if isinstance(self.source, ValueField):
            return 'optimal-from-field'
        return 'optimal-closed-form'

    @property
    def label(self):
        if self.name:
            return self.name
        if self.kind == 'zero':
            return 'zero'
        if self.kind == 'scaled':
            return f'scaled({self.factor:g})'
        return 'optimal'

    @property
    def radius(self):
        """Largest |x| at which the policy can be evaluated."""
        if isinstance(self.source, ValueField) and self.factor != 0.0:
            return self.source.grid.radius
        return np.inf

    def _gradient(self):
        # cached per instance; dataclass is frozen so go through __dict__
        g = self.__dict__.get('_grad')
        if g is None:
            g = _FieldGradient(self.source)
            object.__setattr__(self, '_grad', g)
        return g


def radial_gradient(source, x_norm):
    """z_r(|x|) from a ValueField (interpolated) or a ClosedFormSolution (exact)."""
    r = np.asarray(x_norm, dtype=float)
    if isinstance(source, ClosedFormSolution):
        return 2.0 * source.z_coeff * r
    return Policy.from_field(source)._gradient()(r)


def value_at(source, x_norm):
    """z(|x|) from a ValueField or a ClosedFormSolution."""
    r = np.asarray(x_norm, dtype=float)
    if isinstance(source, ClosedFormSolution):
        return closed_form_z(r, source)
    if np.any(r > source.grid.radius):
        raise StateOutsideGrid(f"|x| = {np.max(r)!r} beyond grid radius {source.grid.radius}")
    return Policy.from_field(source)._gradient().z_interp(r)


def feedback_control(policy, x):
    """Production rate p(x); x has shape (N,) or (..., N)."""
    x = np.asarray(x, dtype=float)
    if policy.kind == 'zero':
        return np.zeros_like(x)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r > policy.radius):
        raise StateOutsideGrid(f"|x| = {np.max(r)!r} beyond grid radius {policy.radius}")
    src = policy.source
    if isinstance(src, ClosedFormSolution):
        # z_r = 2 k r, so -z_r x / (2 r) = -k x
        return -policy.factor * src.z_coeff * x
    g = policy._gradient()(np.atleast_1d(r))
    safe = np.where(r > 0, r, 1.0)
    scale = np.where(r > 0, -0.5 * policy.factor * g.reshape(r.shape) / safe, 0.0)
    return scale[..., None] * x


@dataclass
class HamiltonianCheck:
    inf_value: float
    argmin: np.ndarray
    sampled_min: float
    sampled_argmin: np.ndarray
    worst_undercut: float      # min over samples of (p.g + |p|^2) - inf_value

    @property
    def ok(self):
        return self.worst_undercut >= -1e-12


def hamiltonian_reduction_check(g, n_samples=1000, seed=0):
    """Closed-form inf of p.g + |p|^2, cross-checked by random sampling of p."""
    g = np.atleast_1d(np.asarray(g, dtype=float))
    inf_value = -0.25 * float(g @ g)
    argmin = -0.5 * g
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.linalg.norm(g)))
    # half the samples concentrate near the minimiser, half roam widely
    near = argmin + 1e-3 * scale * rng.standard_normal((n_samples // 2, g.size))
    far = argmin + scale * rng.standard_normal((n_samples - n_samples // 2, g.size))
    P = np.vstack([near, far])
    vals = P @ g + np.sum(P * P, axis=1)
    i = int(np.argmin(vals))
    return HamiltonianCheck(inf_value, argmin, float(vals[i]), P[i],
                            float(np.min(vals) - inf_value))
