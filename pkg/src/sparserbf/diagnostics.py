"""Error metrics, train/test losses and the finite-difference oracles.

The oracles are deliberately independent of the analytic derivative code
paths: they only re-evaluate residual vectors and losses at perturbed
parameters and difference them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .collocation import CollocationSet, make_grid
from .kernel import FeatureParams
from .network import assemble_residual, assemble_residual_and_jacobian
from .optimizer import SolverConfig, dual_variable, empirical_loss
from .problems import PdeProblem, build_context

__all__ = [
    "Metrics",
    "test_grid_points",
    "error_metrics",
    "fd_jacobian_oracle",
    "fd_dual_oracle",
    "optimality_report",
    "metrics_csv_row",
    "METRICS_CSV_HEADER",
]

DEFAULT_TEST_N = {1: 200, 2: 100, 4: 20}


@dataclass
class Metrics:
    """Solution quality summary for one run."""

    l2_error: float
    linf_error: float
    loss_train: float
    loss_test: float
    n_kernels: int


def test_grid_points(dim, domain=(-1.0, 1.0), n_per_dim=None):
    """Uniform test grid (boundary included) with uniform measure weights."""
    n = n_per_dim or DEFAULT_TEST_N[dim]
    axis = np.linspace(domain[0], domain[1], n)
    if dim == 1:
        pts = axis[:, None]
    else:
        grids = np.meshgrid(*([axis] * dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    vol = (domain[1] - domain[0]) ** dim
    w = np.full(len(pts), vol / len(pts))
    return pts, w


def _empirical_loss_on(net, prob, pts):
    ctx = build_context(prob, pts)
    r, _ = assemble_residual(net, ctx)
    return empirical_loss(r, ctx.w)


def error_metrics(net, prob: PdeProblem, pts_train: CollocationSet,
                  test_n=None) -> Metrics:
    """L2/Linf errors on the test grid plus train/test empirical losses.

    The L2 error is the measure-weighted discrete norm
    sqrt(sum_t w_t (u - u*)^2) with uniform weights |D|/T (absolute, not
    relative).  The test loss re-evaluates the empirical loss on a test
    collocation grid of the same layout with its own uniform weights.
    """
    if prob.exact_value is None:
        raise ValueError("error metrics need an exact/reference solution")
    n = test_n or DEFAULT_TEST_N[prob.dim]
    xs, w = test_grid_points(prob.dim, pts_train.domain, n)
    diff = prob.solution_value(net, xs) - prob.exact_value(xs)
    l2 = float(np.sqrt(np.sum(w * diff**2)))
    linf = float(np.max(np.abs(diff)))
    test_pts = make_grid(n, pts_train.domain, pts_train.lam, prob.dim)
    return Metrics(
        l2_error=l2,
        linf_error=linf,
        loss_train=_empirical_loss_on(net, prob, pts_train),
        loss_test=_empirical_loss_on(net, prob, test_pts),
        n_kernels=net.n_nodes,
    )


# ---------------------------------------------------------------------------
# Finite-difference oracles
# ---------------------------------------------------------------------------


def fd_jacobian_oracle(net, pts, prob, step=1e-6, c_columns_only=False):
    """Max deviation of the assembled Jacobian from central differences of R.

    Per-entry deviation is normalized by max(1, |J|); the maximum over all
    tested columns is returned.
    """
    if net.n_nodes == 0:
        raise ValueError("oracle needs a nonempty network")
    ctx = build_context(prob, pts)
    r0, jac = assemble_residual_and_jacobian(net, ctx)

    n, d = net.n_nodes, net.dim

    def residual_at(c, centers, s_var):
        trial = net.copy()
        trial.c, trial.centers, trial.s_var = c, centers, s_var
        r, _ = assemble_residual(trial, ctx)
        return r

    cols = range(n) if c_columns_only else range(n * (d + 2))
    worst = 0.0
    for col in cols:
        c = net.c.copy()
        centers = net.centers.copy()
        s_var = net.s_var.copy()
        if col < n:
            c[col] += step
            r_plus = residual_at(c, centers, s_var)
            c[col] -= 2 * step
            r_minus = residual_at(c, centers, s_var)
        else:
            node, comp = divmod(col - n, d + 1)
            if comp < d:
                centers[node, comp] += step
                r_plus = residual_at(c, centers, s_var)
                centers[node, comp] -= 2 * step
                r_minus = residual_at(c, centers, s_var)
            else:
                s_var[node] += step
                r_plus = residual_at(c, centers, s_var)
                s_var[node] -= 2 * step
                r_minus = residual_at(c, centers, s_var)
        fd = (r_plus - r_minus) / (2 * step)
        dev = np.abs(fd - jac[:, col]) / np.maximum(1.0, np.abs(jac[:, col]))
        worst = max(worst, float(dev.max()))
    return worst


def fd_dual_oracle(net, pts, prob, omega: FeatureParams, tau=1e-6):
    """Deviation of the dual variable from the symmetric loss difference
    quotient along the candidate feature (mask direction included, since the
    loss evaluation itself applies the mask)."""
    p = dual_variable(net, pts, prob, omega)
    ctx = build_context(prob, pts)

    def loss_with_weight(c_new):
        trial = net.copy()
        trial.append_node(c=c_new, q=0.0, y=omega.y, s_var=omega.s_var)
        r, _ = assemble_residual(trial, ctx)
        return empirical_loss(r, ctx.w)

    fd = (loss_with_weight(tau) - loss_with_weight(-tau)) / (2 * tau)
    return abs(fd - p) / max(1.0, abs(p))


def optimality_report(net, pts, prob, cfg: SolverConfig, n_probe=10_000,
                      seed=0):
    """Post-convergence support-condition check.

    Returns ``(max_active_gap, max_candidate_dual)`` where the active gap is
    max_n |p(omega_n) + alpha sign(c_n)| (zero exactly when the dual sits at
    -alpha sign(c) on every active node, covering both the magnitude and the
    sign condition) and the candidate dual is the max |p| over fresh uniform
    probes.
    """
    from .network import dual_batch
    from .optimizer import _sample_candidates

    ctx = build_context(prob, pts)
    r, ht = assemble_residual(net, ctx)
    coef = ctx.w * r
    if net.n_nodes:
        sig, _ = net.sigmas()
        p_act = dual_batch(net.centers, sig, ctx, coef, ht, net.s_exp)
        gap = float(np.max(np.abs(p_act + cfg.alpha * np.sign(net.c))))
    else:
        gap = 0.0
    rng = np.random.default_rng(seed)
    probe_cfg = SolverConfig(alpha=cfg.alpha, m_candidates=n_probe)
    y_c, sig_c = _sample_candidates(probe_cfg, pts, net.sigma_bounds, rng)
    p_c = dual_batch(y_c, sig_c, ctx, coef, ht, net.s_exp)
    return gap, float(np.max(np.abs(p_c)))


# ---------------------------------------------------------------------------
# Metrics CSV
# ---------------------------------------------------------------------------

METRICS_CSV_HEADER = (
    "config_hash,seed,problem,k,alpha,lambda,"
    "l2_error,linf_error,loss_train,loss_test,n_kernels,wall_time_s"
)


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def metrics_csv_row(cfg_hash, seed, problem, k, alpha, lam, metrics: Metrics,
                    wall_time: float) -> str:
    vals = [
        cfg_hash, str(seed), problem, str(k), f"{alpha:g}", f"{lam:g}",
        f"{metrics.l2_error:.10g}", f"{metrics.linf_error:.10g}",
        f"{metrics.loss_train:.10g}", f"{metrics.loss_test:.10g}",
        str(metrics.n_kernels), f"{wall_time:.3f}",
    ]
    return ",".join(vals)
