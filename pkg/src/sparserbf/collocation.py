"""Collocation points on box domains and the diagonal quadrature weights.

Interior and boundary points carry quadrature weights that sum to the domain
volume ``|D|`` and the boundary measure ``|bd D|``; the boundary rows of the
combined weight matrix are additionally scaled by the penalty ``lam``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CollocationSet", "WeightMatrix", "make_grid", "make_random", "weight_matrix"]


@dataclass
class CollocationSet:
    """Interior/boundary quadrature points for one box domain.

    ``candidate_box`` is the enlarged box from which new kernel centers are
    sampled (the domain scaled by 2 about its center unless overridden).
    """

    interior: np.ndarray        # (K1, d)
    boundary: np.ndarray        # (K2, d)
    w_interior: np.ndarray      # (K1,)
    w_boundary: np.ndarray      # (K2,)
    lam: float
    domain: tuple[float, float]
    candidate_box: tuple[float, float] = field(default=None)

    def __post_init__(self):
        if self.candidate_box is None:
            lo, hi = self.domain
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            self.candidate_box = (mid - 2.0 * half, mid + 2.0 * half)

    @property
    def dim(self) -> int:
        return self.interior.shape[1]

    @property
    def k1(self) -> int:
        return self.interior.shape[0]

    @property
    def k2(self) -> int:
        return self.boundary.shape[0]


@dataclass
class WeightMatrix:
    """Diagonal of the combined weight matrix W, fixed during optimization.

    Entries are the interior weights followed by ``lam * w2`` for every
    boundary row (tangential rows reuse the weight of their point).
    """

    diag: np.ndarray

    def __post_init__(self):
        if np.any(self.diag < 0):
            raise ValueError("weight matrix entries must be non-negative")


def _box_measures(domain, dim):
    lo, hi = domain
    side = hi - lo
    vol = side**dim
    area = 2.0 * dim * side ** (dim - 1)
    return vol, area


def make_grid(n_per_dim: int, domain=(-1.0, 1.0), lam: float = 1.0, dim: int = 2,
              candidate_box=None) -> CollocationSet:
    """Tensor-product grid with ``n_per_dim`` points per dimension.

    The grid includes the boundary: interior count is ``(n-2)**d`` and the
    boundary count is ``n**d - (n-2)**d``.  Weights are uniform,
    ``|D|/K1`` inside and ``|bd D|/K2`` on the boundary.
    """
    if n_per_dim < 3:
        raise ValueError("need n_per_dim >= 3 to have interior points")
    lo, hi = domain
    axis = np.linspace(lo, hi, n_per_dim)
    pts = np.array(list(itertools.product(axis, repeat=dim)), dtype=float)
    on_bnd = np.any(np.isclose(pts, lo) | np.isclose(pts, hi), axis=1)
    interior = pts[~on_bnd]
    boundary = pts[on_bnd]
    vol, area = _box_measures(domain, dim)
    w1 = np.full(len(interior), vol / len(interior))
    w2 = np.full(len(boundary), area / len(boundary))
    return CollocationSet(interior, boundary, w1, w2, lam, domain, candidate_box)


def make_random(k1: int, k2: int, domain=(-1.0, 1.0), lam: float = 1.0, dim: int = 2,
                seed: int = 0, candidate_box=None) -> CollocationSet:
    """Uniform random interior points and facet-uniform boundary points.

    Boundary samples pick one of the ``2 d`` facets uniformly (all facets of
    a box have equal measure) and then a uniform point on it.  Deterministic
    under ``seed``.
    """
    if k1 < 1 or k2 < 1:
        raise ValueError("need at least one interior and one boundary point")
    rng = np.random.default_rng(seed)
    lo, hi = domain
    interior = rng.uniform(lo, hi, size=(k1, dim))
    boundary = rng.uniform(lo, hi, size=(k2, dim))
    facet_dim = rng.integers(0, dim, size=k2)
    facet_side = rng.integers(0, 2, size=k2)
    boundary[np.arange(k2), facet_dim] = np.where(facet_side == 0, lo, hi)
    vol, area = _box_measures(domain, dim)
    w1 = np.full(k1, vol / k1)
    w2 = np.full(k2, area / k2)
    return CollocationSet(interior, boundary, w1, w2, lam, domain, candidate_box)


def weight_matrix(pts: CollocationSet, boundary_point_index=None) -> WeightMatrix:
    """Assemble the diagonal weight matrix for the expanded row system.

    ``boundary_point_index`` lists, for every boundary row in order, the
    index of the boundary point the row belongs to (value rows first, then
    any tangential rows).  ``None`` or an empty list means mask mode with no
    boundary rows at all.
    """
    if boundary_point_index is None or len(boundary_point_index) == 0:
        return WeightMatrix(diag=pts.w_interior.copy())
    idx = np.asarray(boundary_point_index, dtype=int)
    diag = np.concatenate([pts.w_interior, pts.lam * pts.w_boundary[idx]])
    return WeightMatrix(diag=diag)
