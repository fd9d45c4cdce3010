"""Exact solutions and reference solvers for the shipped test problems.

Manufactured solutions come with closed-form jets (value, gradient, Hessian)
so that PDE sources can be built exactly and residuals checked against zero.
The regularized eikonal reference is a finite-difference solve of the
transformed linear problem, and the viscous Burgers reference evaluates the
Cole-Hopf integral formula by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "ExactSolution",
    "intro_tanh_1d",
    "two_bump_2d",
    "product_sines",
    "double_sines_2d",
    "eikonal_reference",
    "eikonal_viscosity_limit",
    "burgers_cole_hopf",
]


@dataclass
class ExactSolution:
    """Closed-form solution with batched jet callbacks.

    ``value(x)``, ``grad(x)`` and ``hess(x)`` accept points of shape (K, d)
    and return arrays of shape (K,), (K, d) and (K, d, d).
    """

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]

    def lap(self, x):
        h = self.hess(np.asarray(x, dtype=float))
        return np.trace(h, axis1=1, axis2=2)


def intro_tanh_1d() -> ExactSolution:
    """1D multi-scale tanh profile with two narrow interior transitions."""
    terms = [(1.0, 10.0, -0.2), (-1.0, 10.0, -1.0), (0.5, 30.0, 0.4), (-0.5, 30.0, 0.3)]

    def value(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.zeros_like(x)
        for a, k, b in terms:
            out += a * np.tanh(k * (x - b))
        return out

    def grad(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.zeros_like(x)
        for a, k, b in terms:
            out += a * k * (1.0 - np.tanh(k * (x - b)) ** 2)
        return out[:, None]

    def hess(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.zeros_like(x)
        for a, k, b in terms:
            t = np.tanh(k * (x - b))
            out += -2.0 * a * k**2 * t * (1.0 - t**2)
        return out[:, None, None]

    return ExactSolution(1, value, grad, hess)


def two_bump_2d() -> ExactSolution:
    """Two radial tanh bumps of distinct steepness on [-1, 1]^2.

    Each bump is ``tanh(k (R - |x - c|)) + 1``.  The profile has a cone point
    at each center (the radial distance is not differentiable there); all
    collocation/test grids avoid those two points.
    """
    bumps = [
        (np.array([0.3, 0.3]), 4.0, 0.30),
        (np.array([-0.3, -0.3]), 12.0, 0.15),
    ]

    def _parts(x):
        x = np.asarray(x, dtype=float)
        for c, k, radius in bumps:
            delta = x - c[None, :]
            r = np.sqrt(np.einsum("kj,kj->k", delta, delta))
            r = np.maximum(r, 1e-300)
            t = np.tanh(k * (radius - r))
            s = 1.0 - t**2
            yield delta, r, k, t, s

    def value(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        for _, r, k, t, _ in _parts(x):
            out += t + 1.0
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for delta, r, k, t, s in _parts(x):
            out += -k * (s / r)[:, None] * delta
        return out

    def hess(x):
        x = np.asarray(x, dtype=float)
        n, d = x.shape
        out = np.zeros((n, d, d))
        eye = np.eye(d)
        for delta, r, k, t, s in _parts(x):
            u = delta / r[:, None]
            uu = np.einsum("ki,kj->kij", u, u)
            out += -2.0 * k**2 * (t * s)[:, None, None] * uu
            out += -k * (s / r)[:, None, None] * (eye[None, :, :] - uu)
        return out

    return ExactSolution(2, value, grad, hess)


def product_sines(dim: int) -> ExactSolution:
    """Separable product of sines, sin(pi x_1) ... sin(pi x_d)."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.prod(np.sin(np.pi * x), axis=1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        s = np.sin(np.pi * x)
        c = np.cos(np.pi * x)
        full = np.prod(s, axis=1)
        out = np.empty_like(x)
        for j in range(dim):
            others = np.prod(np.delete(s, j, axis=1), axis=1)
            out[:, j] = np.pi * c[:, j] * others
        return out

    def hess(x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        s = np.sin(np.pi * x)
        c = np.cos(np.pi * x)
        out = np.empty((n, dim, dim))
        for i in range(dim):
            for j in range(dim):
                rest = [m for m in range(dim) if m not in (i, j)]
                others = np.prod(s[:, rest], axis=1) if rest else np.ones(n)
                if i == j:
                    out[:, i, j] = -np.pi**2 * s[:, i] * others
                else:
                    out[:, i, j] = np.pi**2 * c[:, i] * c[:, j] * others
        return out

    return ExactSolution(dim, value, grad, hess)


def double_sines_2d() -> ExactSolution:
    """sin(pi x1) sin(pi x2) + 2 sin(2 pi x1) sin(2 pi x2); vanishes on the
    boundary of [-1, 1]^2 but with nontrivial boundary derivatives."""

    def _modes(x):
        x = np.asarray(x, dtype=float)
        for amp, k in ((1.0, np.pi), (2.0, 2.0 * np.pi)):
            yield amp, k, np.sin(k * x), np.cos(k * x)

    def value(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        for amp, k, s, c in _modes(x):
            out += amp * s[:, 0] * s[:, 1]
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for amp, k, s, c in _modes(x):
            out[:, 0] += amp * k * c[:, 0] * s[:, 1]
            out[:, 1] += amp * k * s[:, 0] * c[:, 1]
        return out

    def hess(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((x.shape[0], 2, 2))
        for amp, k, s, c in _modes(x):
            out[:, 0, 0] += -amp * k**2 * s[:, 0] * s[:, 1]
            out[:, 1, 1] += -amp * k**2 * s[:, 0] * s[:, 1]
            out[:, 0, 1] += amp * k**2 * c[:, 0] * c[:, 1]
            out[:, 1, 0] += amp * k**2 * c[:, 0] * c[:, 1]
        return out

    return ExactSolution(2, value, grad, hess)


# ---------------------------------------------------------------------------
# Regularized eikonal reference: |grad u|^2 - eps * lap u = 1 on [-1, 1]^2,
# u = 0 on the boundary.  With v = exp(-u / eps) this becomes the linear
# problem eps^2 lap v = v with v = 1 on the boundary; the 5-point stencil
# system is solved exactly with a fast sine transform and u = -eps log v is
# interpolated bilinearly.
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _eikonal_grid_solution(eps: float, n: int):
    lo, hi = -1.0, 1.0
    h = (hi - lo) / (n - 1)
    m = n - 2  # interior points per dimension
    # (v - eps^2 lap_h v) = 0 with v = 1 + w, w = 0 on the boundary:
    # (I - eps^2 lap_h) w = -1 on the interior.
    rhs = -np.ones((m, m))
    rhs_hat = scipy.fft.dstn(rhs, type=1)
    j = np.arange(1, m + 1)
    mu = 4.0 / h**2 * np.sin(j * np.pi / (2 * (m + 1))) ** 2  # eigvals of -lap_h
    denom = 1.0 + eps**2 * (mu[:, None] + mu[None, :])
    w = scipy.fft.idstn(rhs_hat / denom, type=1)
    v = np.ones((n, n))
    v[1:-1, 1:-1] += w
    u = -eps * np.log(v)
    axis = np.linspace(lo, hi, n)
    return axis, u


def eikonal_reference(eps: float, n: int = 2000):
    """Bilinear interpolant of the finite-difference eikonal solution."""
    axis, u = _eikonal_grid_solution(float(eps), int(n))
    interp = RegularGridInterpolator((axis, axis), u, method="linear")

    def value(x):
        x = np.asarray(x, dtype=float)
        return interp(x)

    return value


def eikonal_viscosity_limit(x):
    """Distance to the boundary of [-1, 1]^2, the vanishing-viscosity limit."""
    x = np.asarray(x, dtype=float)
    return 1.0 - np.max(np.abs(x), axis=1)


# ---------------------------------------------------------------------------
# Viscous Burgers on [-1, 1] with u(0, x) = -sin(pi x) and u(t, +-1) = 0.
# The odd-periodic initial data makes the whole-line Cole-Hopf solution
# satisfy the Dirichlet conditions exactly.
# ---------------------------------------------------------------------------


def burgers_cole_hopf(nu: float, n_quad: int = 200):
    """Return ``u(t, x)`` evaluating the Cole-Hopf quadrature solution.

    u(t,x) = -int sin(pi(x-eta)) f(x-eta) G deta / int f(x-eta) G deta with
    f(y) = exp(-cos(pi y) / (2 pi nu)) and G the heat kernel at time t;
    Gauss-Hermite quadrature after eta = 2 sqrt(nu t) z.
    """
    z, wq = np.polynomial.hermite.hermgauss(n_quad)
    coef = 1.0 / (2.0 * np.pi * nu)

    def value(t, x):
        t = float(t)
        x = np.asarray(x, dtype=float).reshape(-1)
        if t <= 0.0:
            return -np.sin(np.pi * x)
        shift = x[:, None] - 2.0 * math.sqrt(nu * t) * z[None, :]
        # subtract the row max exponent for stable weights
        expo = -np.cos(np.pi * shift) * coef
        expo -= expo.max(axis=1, keepdims=True)
        f = np.exp(expo) * wq[None, :]
        num = -(np.sin(np.pi * shift) * f).sum(axis=1)
        den = f.sum(axis=1)
        return num / den

    return value
