"""Scaled Gaussian feature functions and their analytic derivatives.

The feature attached to a kernel node is the standard Gaussian density,
shifted to a center ``y``, dilated by a bandwidth ``sigma`` and multiplied
by the scale weight ``sigma**s_exp``:

    phi(x; y, sigma) = sigma**(s_exp - d) * ghat((x - y) / sigma),

where ``ghat`` is the standard Gaussian density on R^d.  For ``s_exp > d + 2``
the feature and its first two spatial derivatives all vanish as
``sigma -> 0``, which is what keeps arbitrarily narrow kernels harmless.

The bandwidth is never optimized directly.  It is parameterized by an
unconstrained variable ``s_var`` through a sigmoid squashed into
``(sigma_min, sigma_max)`` (see :func:`sigma_reparam`), and every derivative
with respect to ``s_var`` carries the chain factor ``dsigma/ds``.

Everything in this module is a pure function; derivatives are closed-form
(no automatic differentiation anywhere).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeatureParams",
    "SigmaJet",
    "FeatureJet",
    "sigma_reparam",
    "sigma_inverse",
    "eval_feature",
    "feature_jet",
]

DEFAULT_SIGMA_BOUNDS = (1e-3, 1.0)


def default_s_exp(dim: int) -> float:
    """Feature scaling exponent used everywhere: s = d + 2 + 0.01."""
    return dim + 2.01


@dataclass
class FeatureParams:
    """Parameters of one scaled Gaussian feature.

    Attributes
    ----------
    y : ndarray, shape (d,)
        Center coordinates.
    s_var : float
        Unconstrained bandwidth variable; ``sigma = sigma(s_var)``.
    sigma_bounds : (float, float)
        Open interval ``(sigma_min, sigma_max)`` that contains sigma for
        every finite ``s_var``.
    s_exp : float
        Scaling exponent; must satisfy ``s_exp >= d`` for pointwise-defined
        features.  Defaults to ``d + 2 + 0.01``.
    """

    y: np.ndarray
    s_var: float
    sigma_bounds: tuple[float, float] = DEFAULT_SIGMA_BOUNDS
    s_exp: float = field(default=-1.0)

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.y.ndim != 1:
            raise ValueError("center y must be a 1-d coordinate array")
        lo, hi = self.sigma_bounds
        if not (0.0 < lo < hi):
            raise ValueError(f"invalid sigma bounds {self.sigma_bounds}")
        if self.s_exp < 0:
            self.s_exp = default_s_exp(self.dim)
        if self.s_exp < self.dim:
            raise ValueError(f"s_exp={self.s_exp} below ambient dimension {self.dim}")

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    @property
    def sigma(self) -> float:
        return sigma_reparam(self.s_var, self.sigma_bounds)[0]


@dataclass
class SigmaJet:
    """Derivative of ``(value, grad_x, hess_x)`` with respect to one scalar."""

    value: float
    grad_x: np.ndarray
    hess_x: np.ndarray


@dataclass
class FeatureJet:
    """Feature value with spatial derivatives up to second order plus
    first-order sensitivities in the center and the bandwidth.

    ``grad_y`` is the center-gradient of the value and always equals
    ``-grad_x`` (translation symmetry of the radial kernel).  ``grad_sigma``
    holds the sigma-derivative of each of value/grad_x/hess_x as a parallel
    jet, and ``grad_svar`` is the same jet scaled by ``dsigma/ds``.
    """

    value: float
    grad_x: np.ndarray
    hess_x: np.ndarray
    grad_y: np.ndarray
    grad_sigma: SigmaJet
    grad_svar: SigmaJet


def sigma_reparam(s_var, bounds=DEFAULT_SIGMA_BOUNDS):
    """Map the unconstrained bandwidth variable to ``(sigma, dsigma_ds)``.

    sigma(s) = sigma_min + (sigma_max - sigma_min) * tau(s) with the sigmoid
    tau(t) = 1 / (1 + exp(-t)); the derivative is
    (sigma_max - sigma_min) * tau * (1 - tau) > 0.
    """
    lo, hi = bounds
    if not lo < hi:
        raise ValueError(f"invalid sigma bounds {bounds}")
    s_var = np.asarray(s_var, dtype=float)
    # Evaluate the sigmoid on the non-positive side to avoid overflow.
    t = np.where(s_var >= 0, s_var, -s_var)
    e = np.exp(-t)
    tau_pos = 1.0 / (1.0 + e)
    tau = np.where(s_var >= 0, tau_pos, 1.0 - tau_pos)
    sigma = lo + (hi - lo) * tau
    dsigma = (hi - lo) * tau * (1.0 - tau)
    if sigma.ndim == 0:
        return float(sigma), float(dsigma)
    return sigma, dsigma


def sigma_inverse(sigma, bounds=DEFAULT_SIGMA_BOUNDS):
    """Inverse of :func:`sigma_reparam`: the ``s_var`` with that sigma."""
    lo, hi = bounds
    tau = (np.asarray(sigma, dtype=float) - lo) / (hi - lo)
    if np.any(tau <= 0) or np.any(tau >= 1):
        raise ValueError("sigma outside the open bounds interval")
    out = np.log(tau) - np.log1p(-tau)
    return float(out) if out.ndim == 0 else out


def _norm_const(dim: int) -> float:
    return (2.0 * math.pi) ** (-0.5 * dim)


def eval_feature(x, p: FeatureParams) -> float:
    """Evaluate the scaled Gaussian feature at one point.

    Returns ``sigma**s / (sqrt(2*pi)*sigma)**d * exp(-|x-y|^2 / (2 sigma^2))``,
    which is strictly positive.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != p.y.shape:
        raise ValueError(f"point dimension {x.shape} != center dimension {p.y.shape}")
    sigma, _ = sigma_reparam(p.s_var, p.sigma_bounds)
    d = p.dim
    r2 = float(np.sum((x - p.y) ** 2))
    return _norm_const(d) * sigma ** (p.s_exp - d) * math.exp(-0.5 * r2 / sigma**2)


def feature_jet(x, p: FeatureParams) -> FeatureJet:
    """Feature value and all first/second derivatives needed by the solver.

    Closed forms, with delta = x - y and v the feature value:

        grad_x  = -delta / sigma^2 * v
        hess_x  = (delta delta^T / sigma^4 - I / sigma^2) * v
        d v/d sigma = ((s - d)/sigma + |delta|^2/sigma^3) * v

    and the sigma-derivatives of grad_x/hess_x by the product rule.  The
    ``grad_svar`` jet is ``grad_sigma`` times ``dsigma/ds``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != p.y.shape:
        raise ValueError(f"point dimension {x.shape} != center dimension {p.y.shape}")
    sigma, dsigma = sigma_reparam(p.s_var, p.sigma_bounds)
    d = p.dim
    delta = x - p.y
    r2 = float(delta @ delta)
    inv2 = 1.0 / sigma**2
    v = _norm_const(d) * sigma ** (p.s_exp - d) * math.exp(-0.5 * r2 * inv2)

    grad_x = -delta * inv2 * v
    outer = np.outer(delta, delta)
    eye = np.eye(d)
    hess_x = (outer * inv2**2 - eye * inv2) * v

    # sigma-derivatives: v' = A v with A = (s-d)/sigma + r^2/sigma^3
    a = (p.s_exp - d) / sigma + r2 / sigma**3
    dv = a * v
    dgrad = -delta * (inv2 * dv) + delta * (2.0 / sigma**3) * v
    dhess = (outer * inv2**2 - eye * inv2) * dv + (
        -4.0 * outer / sigma**5 + 2.0 * eye / sigma**3
    ) * v

    gs = SigmaJet(value=dv, grad_x=dgrad, hess_x=dhess)
    gsv = SigmaJet(value=dv * dsigma, grad_x=dgrad * dsigma, hess_x=dhess * dsigma)
    return FeatureJet(
        value=v,
        grad_x=grad_x,
        hess_x=hess_x,
        grad_y=-grad_x,
        grad_sigma=gs,
        grad_svar=gsv,
    )


# ---------------------------------------------------------------------------
# Batched internals shared by the network/optimizer hot paths.  These work on
# one feature against many points and return plain arrays.
# ---------------------------------------------------------------------------


def batch_value_grad_lap(x, y, sigma, s_exp):
    """Feature value, spatial gradient and Laplacian at many points.

    Parameters are one feature (``y`` shape (d,), scalars sigma/s_exp);
    ``x`` has shape (K, d).  Returns ``(v, grad, lap)`` with shapes
    (K,), (K, d), (K,).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    delta = x - y[None, :]
    r2 = np.einsum("kj,kj->k", delta, delta)
    v = _norm_const(d) * sigma ** (s_exp - d) * np.exp(-0.5 * r2 / sigma**2)
    grad = -delta * (v / sigma**2)[:, None]
    lap = v * (r2 / sigma**4 - d / sigma**2)
    return v, grad, lap
