"""Finite sparse RBF networks: pointwise jets, batched operator rows and the
residual Jacobian.

The network is ``u(x) = sum_n c_n phi(x; omega_n)`` with one scaled Gaussian
feature per node.  Assembly works against a prepared row context (built in
:mod:`sparserbf.problems`) that stores, for every collocation row, the
effective linear-operator coefficients ``(h0, h1, ha)`` acting on the feature
jet:

    row value contributed by a unit feature at omega =
        h0 * phi + h1 . grad_x phi + ha * lap phi.

Because every shipped operator's second-order part is a multiple of the
Laplacian, columns of the Jacobian and the dual variable reduce to closed
forms in the pairwise distances, with no d x d x d tensors anywhere.

Jacobian column order is ``[c_1 .. c_N, then per node (y_1 .. y_d, s_var)]``;
the bandwidth columns carry the ``dsigma/ds`` chain factor.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    DEFAULT_SIGMA_BOUNDS,
    FeatureParams,
    batch_value_grad_lap,
    default_s_exp,
    sigma_reparam,
)

__all__ = [
    "KernelNode",
    "RbfNetwork",
    "SolutionJet",
    "eval_jet",
    "batch_linear_ops",
    "assemble_residual",
    "assemble_jacobian",
    "assemble_residual_and_jacobian",
    "dual_batch",
    "write_solution_dump",
]


@dataclass
class KernelNode:
    """One node: outer weight ``c``, Robinson variable ``q`` and the feature
    parameters.  The optimizer maintains ``c = soft_threshold(q, alpha)``."""

    c: float
    q: float
    params: FeatureParams


@dataclass
class RbfNetwork:
    """Ordered collection of kernel nodes sharing dimension and exponent.

    Stored as flat arrays for fast batched evaluation; ``nodes`` materializes
    the per-node view.
    """

    dim: int
    s_exp: float = field(default=-1.0)
    sigma_bounds: tuple[float, float] = DEFAULT_SIGMA_BOUNDS
    c: np.ndarray = field(default=None)
    q: np.ndarray = field(default=None)
    centers: np.ndarray = field(default=None)
    s_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.s_exp < 0:
            self.s_exp = default_s_exp(self.dim)
        if self.c is None:
            self.c = np.zeros(0)
            self.q = np.zeros(0)
            self.centers = np.zeros((0, self.dim))
            self.s_var = np.zeros(0)
        self.c = np.asarray(self.c, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, self.dim)
        self.s_var = np.asarray(self.s_var, dtype=float)

    @classmethod
    def empty(cls, dim, s_exp=-1.0, sigma_bounds=DEFAULT_SIGMA_BOUNDS):
        return cls(dim=dim, s_exp=s_exp, sigma_bounds=sigma_bounds)

    @classmethod
    def from_nodes(cls, nodes, dim=None):
        if not nodes and dim is None:
            raise ValueError("dimension required for an empty node list")
        dim = dim if dim is not None else nodes[0].params.dim
        net = cls.empty(dim)
        if nodes:
            net.s_exp = nodes[0].params.s_exp
            net.sigma_bounds = nodes[0].params.sigma_bounds
            net.c = np.array([n.c for n in nodes], dtype=float)
            net.q = np.array([n.q for n in nodes], dtype=float)
            net.centers = np.array([n.params.y for n in nodes], dtype=float)
            net.s_var = np.array([n.params.s_var for n in nodes], dtype=float)
        return net

    @property
    def n_nodes(self) -> int:
        return self.c.shape[0]

    @property
    def nodes(self) -> list[KernelNode]:
        return [
            KernelNode(
                c=float(self.c[n]),
                q=float(self.q[n]),
                params=FeatureParams(
                    y=self.centers[n].copy(),
                    s_var=float(self.s_var[n]),
                    sigma_bounds=self.sigma_bounds,
                    s_exp=self.s_exp,
                ),
            )
            for n in range(self.n_nodes)
        ]

    def sigmas(self):
        return sigma_reparam(self.s_var, self.sigma_bounds)

    def copy(self) -> "RbfNetwork":
        return RbfNetwork(
            dim=self.dim,
            s_exp=self.s_exp,
            sigma_bounds=self.sigma_bounds,
            c=self.c.copy(),
            q=self.q.copy(),
            centers=self.centers.copy(),
            s_var=self.s_var.copy(),
        )

    def append_node(self, c, q, y, s_var):
        self.c = np.append(self.c, c)
        self.q = np.append(self.q, q)
        self.centers = np.vstack([self.centers, np.asarray(y, dtype=float)])
        self.s_var = np.append(self.s_var, s_var)

    def keep(self, mask):
        """Restrict to the nodes selected by a boolean mask, order preserved."""
        self.c = self.c[mask]
        self.q = self.q[mask]
        self.centers = self.centers[mask]
        self.s_var = self.s_var[mask]

    def n_params(self) -> int:
        return self.n_nodes * (self.dim + 2)


@dataclass
class SolutionJet:
    """Network value, gradient and Hessian at one point (linear in c)."""

    u: float
    grad: np.ndarray
    hess: np.ndarray


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def eval_value_grad_lap(net: RbfNetwork, x):
    """Raw network value, gradient and Laplacian at points ``x`` (K, d)."""
    x = np.asarray(x, dtype=float)
    k = x.shape[0]
    u = np.zeros(k)
    g = np.zeros((k, net.dim))
    lap = np.zeros(k)
    if net.n_nodes == 0:
        return u, g, lap
    sig, _ = net.sigmas()
    for n in range(net.n_nodes):
        v, gv, lv = batch_value_grad_lap(x, net.centers[n], sig[n], net.s_exp)
        u += net.c[n] * v
        g += net.c[n] * gv
        lap += net.c[n] * lv
    return u, g, lap


def eval_batch_jets(net: RbfNetwork, x):
    """Raw network value, gradient and full Hessian at points ``x`` (K, d)."""
    x = np.asarray(x, dtype=float)
    k, d = x.shape
    u = np.zeros(k)
    g = np.zeros((k, d))
    h = np.zeros((k, d, d))
    if net.n_nodes == 0:
        return u, g, h
    sig, _ = net.sigmas()
    eye = np.eye(d)
    for n in range(net.n_nodes):
        delta = x - net.centers[n][None, :]
        v, gv, _ = batch_value_grad_lap(x, net.centers[n], sig[n], net.s_exp)
        outer = np.einsum("ki,kj->kij", delta, delta)
        hv = (outer / sig[n] ** 4 - eye[None, :, :] / sig[n] ** 2) * v[:, None, None]
        u += net.c[n] * v
        g += net.c[n] * gv
        h += net.c[n] * hv
    return u, g, h


def eval_jet(net: RbfNetwork, x) -> SolutionJet:
    """Jet of the raw network at one point; the empty network gives zeros."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u, g, h = eval_batch_jets(net, x)
    return SolutionJet(u=float(u[0]), grad=g[0], hess=h[0])


def batch_linear_ops(net: RbfNetwork, pts, prob):
    """Linear-operator evaluations ``l_k`` of the solution ansatz.

    Returns ``(l_interior, l_boundary)`` of shapes (K1, n_e) and (K2, n_b).
    For mask-mode problems the ansatz is ``fbar + gamma * net`` and the
    interior rows include the transform; boundary rows apply the raw
    boundary operator to the ansatz.
    """
    if prob.dim != net.dim:
        raise ValueError("problem and network dimension mismatch")
    cc, bb, aa, const = prob.interior_tables(pts.interior)
    u, g, lap = eval_value_grad_lap(net, pts.interior)
    l_int = (
        cc * u[:, None]
        + np.einsum("kij,kj->ki", bb, g)
        + aa * lap[:, None]
        + const
    )
    ub, gb, _ = eval_value_grad_lap(net, pts.boundary)
    if prob.boundary_mode == "mask":
        gv, gg, _ = prob.mask_gamma_jets(pts.boundary)
        fv, fg, _ = prob.fbar_jets(pts.boundary)
        ub, gb = fv + gv * ub, fg + gv[:, None] * gb + ub[:, None] * gg
    ops = prob.boundary_ops
    l_bnd = ops.c[None, :] * ub[:, None] + np.einsum("ij,kj->ki", ops.b, gb)
    return l_int, l_bnd


# ---------------------------------------------------------------------------
# Residual and Jacobian assembly against a row context.
#
# The context (see problems.build_context) provides:
#   x_int (K1,d), x_bnd (Kb,d), x_all (K,d), w (K,)
#   cc (K1,n_e), bb (K1,n_e,d), aa (K1,n_e), const (K1,n_e)
#   residual_e(x, l) -> (r, dr)
#   b_c (Kb,), b_b (Kb,d), b_data (Kb,)
# ---------------------------------------------------------------------------


def assemble_residual(net: RbfNetwork, ctx):
    """Residual vector and the per-row jet coefficients of its linearization.

    Returns ``(R, (h0, h1, ha))`` where the h-tables contract a unit feature's
    (value, grad, lap) into each row's residual derivative.
    """
    k1 = ctx.x_int.shape[0]
    u, g, lap = eval_value_grad_lap(net, ctx.x_all)
    l_int = (
        ctx.cc * u[:k1, None]
        + np.einsum("kij,kj->ki", ctx.bb, g[:k1])
        + ctx.aa * lap[:k1, None]
        + ctx.const
    )
    r_int, dr = ctx.residual_e(ctx.x_int, l_int)
    h0_int = np.einsum("ki,ki->k", dr, ctx.cc)
    h1_int = np.einsum("ki,kij->kj", dr, ctx.bb)
    ha_int = np.einsum("ki,ki->k", dr, ctx.aa)
    if ctx.x_bnd.shape[0]:
        val = ctx.b_c * u[k1:] + np.einsum("kj,kj->k", ctx.b_b, g[k1:])
        r_bnd = val - ctx.b_data
        h0 = np.concatenate([h0_int, ctx.b_c])
        h1 = np.vstack([h1_int, ctx.b_b])
        ha = np.concatenate([ha_int, np.zeros(len(r_bnd))])
        return np.concatenate([r_int, r_bnd]), (h0, h1, ha)
    return r_int, (h0_int, h1_int, ha_int)


def _column_blocks(x, h0, h1, ha, y, sigma, dsigma, s_exp, with_params):
    """Row values (and parameter derivatives) of one unit feature's
    contribution to every residual row.

    F = v * gq with gq = h0 + h1.(y-x)/sigma^2 + ha (r^2/sigma^4 - d/sigma^2);
    the y and sigma derivatives are closed forms in the same quantities.
    """
    d = x.shape[1]
    delta = x - y[None, :]
    r2 = np.einsum("kj,kj->k", delta, delta)
    inv2 = 1.0 / sigma**2
    v = (2.0 * np.pi) ** (-0.5 * d) * sigma ** (s_exp - d) * np.exp(-0.5 * r2 * inv2)
    dot = np.einsum("kj,kj->k", h1, delta)
    gq = h0 - dot * inv2 + ha * (r2 * inv2**2 - d * inv2)
    f = v * gq
    if not with_params:
        return f, None, None
    dy = v[:, None] * (
        delta * (gq * inv2)[:, None]
        + h1 * inv2
        - delta * (2.0 * ha * inv2**2)[:, None]
    )
    a = (s_exp - d) / sigma + r2 / sigma**3
    dsig = v * (
        a * gq
        + 2.0 * dot / sigma**3
        - 4.0 * ha * r2 / sigma**5
        + 2.0 * ha * d / sigma**3
    )
    return f, dy, dsig * dsigma


def assemble_jacobian(net: RbfNetwork, ctx, htables):
    """Jacobian of the residual in ``[c; per-node (y, s_var)]`` order."""
    h0, h1, ha = htables
    n, d = net.n_nodes, net.dim
    j = np.zeros((ctx.x_all.shape[0], n * (d + 2)))
    sig, dsig = net.sigmas()
    for m in range(n):
        f, dy, ds = _column_blocks(
            ctx.x_all, h0, h1, ha, net.centers[m], sig[m], dsig[m], net.s_exp, True
        )
        j[:, m] = f
        base = n + m * (d + 1)
        j[:, base : base + d] = net.c[m] * dy
        j[:, base + d] = net.c[m] * ds
    return j


def assemble_residual_and_jacobian(net: RbfNetwork, ctx):
    """Convenience wrapper returning ``(R, J)`` for the current network."""
    r, ht = assemble_residual(net, ctx)
    return r, assemble_jacobian(net, ctx, ht)


def node_center_grads(net: RbfNetwork, ctx, htables, wr):
    """Per-node euclidean norms of the loss gradient in the center variables.

    ``wr`` is the weighted residual ``W R``; the gradient of the loss in
    ``y_n`` is the contraction of the node's center columns with ``wr``.
    """
    h0, h1, ha = htables
    sig, dsig = net.sigmas()
    out = np.zeros(net.n_nodes)
    for m in range(net.n_nodes):
        _, dy, _ = _column_blocks(
            ctx.x_all, h0, h1, ha, net.centers[m], sig[m], dsig[m], net.s_exp, True
        )
        out[m] = np.linalg.norm(net.c[m] * (wr @ dy))
    return out


def dual_batch(y_cand, sigma_cand, ctx, coef, htables, s_exp, chunk=2048):
    """Dual variable at many candidate features.

    ``coef`` is ``W R``; the dual at omega is the contraction of the
    candidate's row values with ``coef``, evaluated with two matrix products
    per chunk of candidates.
    """
    h0, h1, ha = htables
    x = ctx.x_all
    d = x.shape[1]
    g0 = coef * h0
    g1 = h1 * coef[:, None]
    ga = coef * ha
    x2 = np.einsum("kj,kj->k", x, x)
    g1x = np.einsum("kj,kj->k", g1, x)
    out = np.empty(len(y_cand))
    for lo in range(0, len(y_cand), chunk):
        hi = min(lo + chunk, len(y_cand))
        y = y_cand[lo:hi]
        s = sigma_cand[lo:hi]
        r2 = x2[None, :] + np.einsum("mj,mj->m", y, y)[:, None] - 2.0 * (y @ x.T)
        np.maximum(r2, 0.0, out=r2)
        inv2 = (1.0 / s**2)[:, None]
        v = (2.0 * np.pi) ** (-0.5 * d) * (s ** (s_exp - d))[:, None] * np.exp(
            -0.5 * r2 * inv2
        )
        # gq = g0 - g1.(x - y)/sigma^2 + ga (r^2/sigma^4 - d/sigma^2)
        dot = g1x[None, :] - y @ g1.T
        gq = g0[None, :] - dot * inv2 + ga[None, :] * (r2 * inv2**2 - d * inv2)
        out[lo:hi] = np.einsum("mk,mk->m", v, gq)
    return out


def write_solution_dump(net: RbfNetwork, path=None) -> str:
    """Delimited text dump, one row per node: c, y_1..y_d, sigma."""
    buf = io.StringIO()
    cols = ["c"] + [f"y_{j + 1}" for j in range(net.dim)] + ["sigma"]
    buf.write(",".join(cols) + "\n")
    sig, _ = net.sigmas()
    for n in range(net.n_nodes):
        row = [net.c[n], *net.centers[n], sig[n]]
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    text = buf.getvalue()
    if path is not None:
        from .fileio import atomic_write_text

        atomic_write_text(path, text)
    return text
