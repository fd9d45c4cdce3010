"""Three-phase adaptive solver: dual-guided insertion, semismooth
Gauss-Newton on the Robinson normal map, and pruning.

One outer iteration runs

* **Phase I**   sample candidate features uniformly over the enlarged box and
  the bandwidth interval; the candidate with the largest absolute dual
  variable is inserted when it beats ``max(alpha, threshold)``, where the
  threshold augments the duals of existing nodes with their center-gradient
  norms.  A Metropolis draw may admit near-threshold candidates early on.
* **Phase II**  one semismooth Gauss-Newton step on ``(q, omega)`` for the
  normal map ``G(q, omega) = (q - prox(q), 0) + grad loss(prox(q), omega)``,
  with the Gauss-Newton surrogate ``J^T W J`` plus a Levenberg-Marquardt
  style diagonal correction, followed by a shrinking line search on the
  regularized objective.
* **Phase III** removal of nodes whose outer weight is exactly zero.

The iteration stops when neither the step nor the best fresh candidate can
produce an appreciable decrease.  ``continuation_solve`` chains solves over a
decreasing ladder of l1 weights, and ``time_march`` drives the
backward-Euler Burgers sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .collocation import CollocationSet
from .kernel import FeatureParams, sigma_inverse
from .network import (
    RbfNetwork,
    assemble_jacobian,
    assemble_residual,
    dual_batch,
    node_center_grads,
)
from .problems import AssemblyContext, PdeProblem, build_context, make_burgers_step

__all__ = [
    "SolverFault",
    "SolverConfig",
    "IterTrace",
    "SolveReport",
    "prox",
    "dprox",
    "dual_variable",
    "phase1_insert",
    "normal_map",
    "gauss_newton_step",
    "phase3_prune",
    "stopping_check",
    "solve",
    "continuation_solve",
    "time_march",
]

THETA_SHRINK = 2.0 / 3.0
THETA_FLOOR_POWER = 30


class SolverFault(RuntimeError):
    """Unrecoverable solver state (singular corrected system, non-finite)."""


def prox(q, alpha):
    """Soft threshold sign(q) * max(|q| - alpha, 0), componentwise."""
    q = np.asarray(q, dtype=float)
    out = np.sign(q) * np.maximum(np.abs(q) - alpha, 0.0)
    return float(out) if out.ndim == 0 else out


def dprox(q, alpha):
    """Generalized derivative of the soft threshold: 1 iff |q| >= alpha.

    The boundary convention at |q| = alpha is 1, which is what lets a
    freshly inserted node (q = -alpha sign p) activate immediately.
    """
    q = np.asarray(q, dtype=float)
    out = (np.abs(q) >= alpha).astype(float)
    return float(out) if out.ndim == 0 else out


@dataclass
class SolverConfig:
    """Solver hyperparameters; defaults follow the shipped experiments."""

    alpha: float = 1e-4
    alpha_ladder: Optional[tuple] = None
    lam: float = 1.0
    m_candidates: int = 10_000
    eta: float = 0.01
    metropolis_t0: float = 1.0
    linesearch_h: float = 0.2
    lm_eps: float = 1e-6
    stop_eps: float = 1e-4
    max_outer: int = 200
    gn_inner: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.alpha_ladder is not None:
            ladder = tuple(self.alpha_ladder)
            if any(b >= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("alpha ladder must be strictly decreasing")
            self.alpha_ladder = ladder
        if not 0 < self.linesearch_h < 1:
            raise ValueError("line search h must be in (0, 1)")
        if self.lm_eps <= 0 or self.m_candidates < 1:
            raise ValueError("invalid solver configuration")


@dataclass
class IterTrace:
    """One outer-iteration record of the convergence trace."""

    iter: int
    loss: float
    reg_objective: float
    n_nodes: int
    max_dual_active: float
    max_dual_candidate: float
    accepted_insertion: bool
    step_size: float

    FIELDS = (
        "iter", "loss", "reg_objective", "n_nodes", "max_dual_active",
        "max_dual_candidate", "accepted_insertion", "step_size",
    )

    def row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class SolveReport:
    """Trace of one solve at a fixed l1 weight."""

    alpha: float
    trace: list = field(default_factory=list)
    stopped: bool = False

    @property
    def n_iters(self):
        return len(self.trace)


def trace_dump(traces) -> str:
    """Delimited text, one row per outer iteration."""
    lines = [",".join(IterTrace.FIELDS)]
    for t in traces:
        vals = []
        for v in t.row():
            if isinstance(v, bool):
                vals.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                vals.append(str(int(v)))
            else:
                vals.append(f"{v:.17g}")
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Loss / objective helpers
# ---------------------------------------------------------------------------


def empirical_loss(r, w):
    return 0.5 * float(r @ (w * r))


def reg_objective(net, ctx, alpha):
    r, _ = assemble_residual(net, ctx)
    return empirical_loss(r, ctx.w) + alpha * float(np.abs(net.c).sum())


def dual_variable(net, pts, prob, omega: FeatureParams) -> float:
    """Dual variable (loss directional derivative) at one candidate feature."""
    ctx = build_context(prob, pts)
    r, ht = assemble_residual(net, ctx)
    sig = omega.sigma
    p = dual_batch(
        omega.y[None, :], np.array([sig]), ctx, ctx.w * r, ht, net.s_exp
    )
    return float(p[0])


# ---------------------------------------------------------------------------
# Phase I: insertion
# ---------------------------------------------------------------------------


def _sample_candidates(cfg, pts: CollocationSet, bounds, rng):
    lo, hi = pts.candidate_box
    y = rng.uniform(lo, hi, size=(cfg.m_candidates, pts.dim))
    u = np.clip(rng.uniform(size=cfg.m_candidates), 1e-12, 1.0 - 1e-12)
    sig = bounds[0] + (bounds[1] - bounds[0]) * u
    return y, sig


def _phase1(net, ctx, cfg, rng, r, ht, loss_init):
    """Insert at most one node; returns (inserted, p_hat, p_active_max)."""
    coef = ctx.w * r
    y_c, sig_c = _sample_candidates(cfg, ctx.pts, net.sigma_bounds, rng)
    p_c = dual_batch(y_c, sig_c, ctx, coef, ht, net.s_exp)
    best = int(np.argmax(np.abs(p_c)))
    p_hat = float(abs(p_c[best]))
    if net.n_nodes:
        sig_act, _ = net.sigmas()
        p_act = dual_batch(net.centers, sig_act, ctx, coef, ht, net.s_exp)
        grad_norms = node_center_grads(net, ctx, ht, coef)
        threshold = float(np.max(np.abs(p_act) + cfg.eta * grad_norms))
        p_active_max = float(np.max(np.abs(p_act)))
    else:
        threshold = 0.0
        p_active_max = 0.0

    inserted = False
    if p_hat > cfg.alpha:
        if p_hat > threshold:
            inserted = True
        elif cfg.metropolis_t0 > 0:
            temp = max(1.0, -math.log(cfg.alpha)) * cfg.metropolis_t0
            loss_now = empirical_loss(r, ctx.w)
            anneal = math.sqrt(loss_now / max(loss_init, 1e-12))
            anneal = min(max(anneal, 1e-6), 1.0)
            accept_pr = math.exp(-(threshold - p_hat) / (temp * anneal))
            inserted = bool(rng.uniform() < accept_pr)
    if inserted:
        s_var = sigma_inverse(sig_c[best], net.sigma_bounds)
        net.append_node(
            c=0.0, q=-cfg.alpha * np.sign(p_c[best]), y=y_c[best], s_var=s_var
        )
    return inserted, p_hat, p_active_max


def phase1_insert(net, pts, prob, cfg, rng):
    """Public insertion step; returns the (possibly grown) copy and a flag."""
    net = net.copy()
    ctx = build_context(prob, pts)
    r, ht = assemble_residual(net, ctx)
    inserted, _, _ = _phase1(net, ctx, cfg, rng, r, ht, empirical_loss(r, ctx.w))
    return net, inserted


# ---------------------------------------------------------------------------
# Phase II: semismooth Gauss-Newton
# ---------------------------------------------------------------------------


def _normal_map_parts(net, ctx, cfg):
    """G, the Gauss-Newton Hessian, the correction diagonal and the
    proximal-derivative diagonal at the current iterate (c = prox(q))."""
    if net.n_nodes == 0:
        raise ValueError("normal map needs at least one node")
    r, ht = assemble_residual(net, ctx)
    jac = assemble_jacobian(net, ctx, ht)
    wr = ctx.w * r
    grad = jac.T @ wr
    n, d = net.n_nodes, net.dim
    g = grad.copy()
    g[:n] += net.q - prox(net.q, cfg.alpha)
    h = jac.T @ (jac * ctx.w[:, None])
    # Correction diag{eps x N, |c_1| x (d+1), ...}; the omega entries are
    # floored at eps, otherwise nodes with |q| barely above alpha (c ~ 0)
    # get an undamped singular omega block whose Gauss-Newton curvature
    # (~ c^2) wildly underestimates the true one and stalls the line search.
    cor = np.empty(n * (d + 2))
    cor[:n] = cfg.lm_eps
    cor[n:] = np.repeat(np.maximum(np.abs(net.c), cfg.lm_eps), d + 1)
    cor *= 0.1 * float(np.abs(wr).sum())
    dp = np.concatenate([dprox(net.q, cfg.alpha), np.ones(n * (d + 1))])
    return g, h, cor, dp, r, ht


def _assemble_dg(h, cor, dp, lm_mult):
    dg = (h + np.diag(lm_mult * cor)) * dp[None, :]
    dg[np.diag_indices_from(dg)] += 1.0 - dp
    return dg


def _normal_map(net, ctx, cfg, lm_mult=1.0):
    g, h, cor, dp, r, ht = _normal_map_parts(net, ctx, cfg)
    return g, _assemble_dg(h, cor, dp, lm_mult), dp, r, ht


def normal_map(net, pts, prob, cfg):
    """Spec surface: the Robinson normal map and its generalized derivative."""
    ctx = build_context(prob, pts)
    g, dg, _, _, _ = _normal_map(net, ctx, cfg)
    return g, dg


def _solve_direction(net, dg, g, cfg):
    """Search direction z = -DG^{-1} G restricted to structurally active
    columns.

    The omega block of a zero-weight node contributes exactly zero rows and
    columns to the Gauss-Newton system (its Jacobian columns carry the factor
    c_n = 0 and the diagonal correction is |c_n| = 0), so those components
    are fixed at zero and the rest is solved densely.
    """
    n, d = net.n_nodes, net.dim
    active = np.ones(n * (d + 2), dtype=bool)
    for m in np.flatnonzero(net.c == 0.0):
        base = n + m * (d + 1)
        active[base : base + d + 1] = False
    z = np.zeros_like(g)
    try:
        z[active] = np.linalg.solve(dg[np.ix_(active, active)], -g[active])
    except np.linalg.LinAlgError as err:
        raise SolverFault(f"singular corrected system: {err}") from err
    if not np.all(np.isfinite(z)):
        raise SolverFault("non-finite search direction")
    return z


LM_GROW = 10.0
LM_DECAY = 0.3
LM_ATTEMPTS = 8


def _try_step(net, ctx, cfg, g, dp, z, f0, n_shrink):
    """Shrinking line search on the regularized objective along z.

    Accepts the largest theta in {1, 2/3, (2/3)^2, ...} with
    F(new) - F(old) <= h * theta * G^T(DP z); when the predicted change is
    not a descent (rare), falls back to requiring plain decrease.
    """
    pred = float(g @ (dp * z))
    n, d = net.n_nodes, net.dim
    q0, centers0, svar0 = net.q.copy(), net.centers.copy(), net.s_var.copy()
    z_q = z[:n]
    z_w = z[n:].reshape(n, d + 1)
    theta = 1.0
    for _ in range(n_shrink + 1):
        net.q = q0 + theta * z_q
        net.centers = centers0 + theta * z_w[:, :d]
        net.s_var = svar0 + theta * z_w[:, d]
        net.c = prox(net.q, cfg.alpha)
        r_new, ht_new = assemble_residual(net, ctx)
        loss_new = empirical_loss(r_new, ctx.w)
        f_new = loss_new + cfg.alpha * float(np.abs(net.c).sum())
        if np.isfinite(f_new):
            if pred <= 0 and f_new - f0 <= cfg.linesearch_h * theta * pred:
                return theta, pred, r_new, ht_new, loss_new
            if pred > 0 and f_new < f0:
                return theta, pred, r_new, ht_new, loss_new
        theta *= THETA_SHRINK
    net.q, net.centers, net.s_var = q0, centers0, svar0
    net.c = prox(net.q, cfg.alpha)
    return 0.0, pred, None, None, None


def _gauss_newton_step(net, ctx, cfg):
    """One Phase II step in place.

    Returns ``(theta, estimated_descent, r, ht, loss)`` at the accepted
    point (or at the unchanged point when every trial is rejected; then
    theta = 0).  ``estimated_descent`` is |G^T (DP z)| at theta = 1 for the
    nominal system.  When the line search rejects a direction, the diagonal
    correction is scaled up tenfold and the direction re-solved
    (Levenberg-Marquardt adaptation); each step starts again from the
    nominal correction.
    """
    g, h, cor, dp, r0, ht0 = _normal_map_parts(net, ctx, cfg)
    loss0 = empirical_loss(r0, ctx.w)
    f0 = loss0 + cfg.alpha * float(np.abs(net.c).sum())
    est_first = None
    lm_mult = 1.0
    for attempt in range(LM_ATTEMPTS):
        dg = _assemble_dg(h, cor, dp, lm_mult)
        z = _solve_direction(net, dg, g, cfg)
        n_shrink = THETA_FLOOR_POWER if attempt == LM_ATTEMPTS - 1 else 12
        theta, pred, r_new, ht_new, loss_new = _try_step(
            net, ctx, cfg, g, dp, z, f0, n_shrink
        )
        if est_first is None:
            est_first = abs(pred)
        if theta > 0.0:
            return theta, est_first, r_new, ht_new, loss_new
        lm_mult *= LM_GROW
    return 0.0, est_first, r0, ht0, loss0


def gauss_newton_step(net, pts, prob, cfg):
    """Public single Gauss-Newton step; returns (updated copy, accepted theta)."""
    net = net.copy()
    ctx = build_context(prob, pts)
    theta, _, _, _, _ = _gauss_newton_step(net, ctx, cfg)
    return net, theta


def phase3_prune(net: RbfNetwork) -> RbfNetwork:
    """Drop exactly the nodes with zero outer weight, preserving order."""
    net = net.copy()
    net.keep(net.c != 0.0)
    return net


def stopping_check(last_estimated_descent, best_candidate_dual, cfg) -> bool:
    """Stop when neither optimizing existing nodes nor inserting the best
    fresh candidate can produce an appreciable decrease."""
    return (
        last_estimated_descent < cfg.stop_eps
        and best_candidate_dual - cfg.alpha < cfg.stop_eps
    )


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


def solve(net0: RbfNetwork, pts: CollocationSet, prob: PdeProblem,
          cfg: SolverConfig, rng=None, ctx: AssemblyContext = None):
    """Run Phase I -> II -> III until the stopping test or the iteration cap.

    Returns ``(network, SolveReport)``.  The representation invariant
    ``c = prox(q, alpha)`` is restored on entry, so warm starts across
    alpha stages are just a matter of passing the previous network in.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if ctx is None:
        ctx = build_context(prob, pts)
    net = net0.copy()
    net.c = prox(net.q, cfg.alpha)
    net = phase3_prune(net)

    r, ht = assemble_residual(net, ctx)
    loss = empirical_loss(r, ctx.w)
    loss_init = loss
    report = SolveReport(alpha=cfg.alpha)

    for it in range(cfg.max_outer):
        inserted, p_hat, p_active = _phase1(net, ctx, cfg, rng, r, ht, loss_init)
        theta, est = 0.0, 0.0
        if net.n_nodes:
            theta, est, r, ht, loss = _gauss_newton_step(net, ctx, cfg)
            for _ in range(cfg.gn_inner - 1):
                if theta == 0.0 or est < cfg.stop_eps:
                    break
                theta2, est2, r, ht, loss = _gauss_newton_step(net, ctx, cfg)
                if theta2 == 0.0:
                    break
                theta, est = theta2, est2
        keep_mask = net.c != 0.0
        net.keep(keep_mask)
        f_now = loss + cfg.alpha * float(np.abs(net.c).sum())
        report.trace.append(
            IterTrace(
                iter=it,
                loss=loss,
                reg_objective=f_now,
                n_nodes=net.n_nodes,
                max_dual_active=p_active,
                max_dual_candidate=p_hat,
                accepted_insertion=inserted,
                step_size=theta,
            )
        )
        est_for_stop = est if theta > 0.0 else 0.0
        if stopping_check(est_for_stop, p_hat, cfg):
            report.stopped = True
            break
    return net, report


def continuation_solve(pts, prob, cfg: SolverConfig, net0: RbfNetwork = None,
                       rng=None):
    """Solve along the decreasing alpha ladder, warm-starting each stage.

    Surviving nodes keep their Robinson variable q; the outer weights are
    re-derived by the proximal map with the next alpha.  A single-entry
    ladder is a plain solve.
    """
    ladder = cfg.alpha_ladder if cfg.alpha_ladder else (cfg.alpha,)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ctx = build_context(prob, pts)
    net = net0.copy() if net0 is not None else RbfNetwork.empty(pts.dim)
    reports = []
    for alpha in ladder:
        stage_cfg = replace(cfg, alpha=alpha, alpha_ladder=None)
        net, rep = solve(net, pts, prob, stage_cfg, rng=rng, ctx=ctx)
        reports.append(rep)
    return net, reports


# ---------------------------------------------------------------------------
# Burgers time march
# ---------------------------------------------------------------------------


def initial_condition(x):
    """u(0, x) = -sin(pi x), evaluated analytically."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return -np.sin(np.pi * x)


@dataclass
class MarchResult:
    dt: float
    nu: float
    networks: list          # network after step n = 1..n_steps
    reports: list
    problems: list
    completed: bool

    def solution_at(self, t, x):
        """Linear-in-time interpolation between stored step solutions."""
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        n_steps = len(self.networks)

        def level(n):
            if n == 0:
                return initial_condition(x)
            prob = self.problems[n - 1]
            return prob.solution_value(self.networks[n - 1], x)

        pos = t / self.dt
        n0 = int(min(max(np.floor(pos), 0), n_steps))
        n1 = min(n0 + 1, n_steps)
        if n0 == n1:
            return level(n0)
        w = pos - n0
        return (1.0 - w) * level(n0) + w * level(n1)


def time_march(pts: CollocationSet, cfg: SolverConfig, dt: float, nu: float,
               t_end: float, rng=None, scaled=True) -> MarchResult:
    """Backward-Euler sequence of solves, each warm-started from the last.

    The scaled step residual is used, so the l1 weight and the stopping
    tolerance are both multiplied by dt^2 to keep thresholds commensurate.
    A step that exhausts ``max_outer`` without meeting the stopping test
    aborts the march and returns the partial sequence.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n_steps = int(math.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    scale = dt**2 if scaled else 1.0
    step_cfg = replace(
        cfg, alpha=cfg.alpha * scale, alpha_ladder=None,
        stop_eps=cfg.stop_eps * scale,
    )
    result = MarchResult(dt=dt, nu=nu, networks=[], reports=[], problems=[],
                         completed=True)
    net = RbfNetwork.empty(1)
    u_prev: Callable = initial_condition
    for _ in range(n_steps):
        prob = make_burgers_step(u_prev, dt, nu, scaled=scaled)
        net, rep = solve(net, pts, prob, step_cfg, rng=rng)
        result.networks.append(net.copy())
        result.reports.append(rep)
        result.problems.append(prob)
        if not rep.stopped:
            result.completed = False
            break
        frozen_net, frozen_prob = net.copy(), prob
        u_prev = lambda x, _n=frozen_net, _p=frozen_prob: _p.solution_value(  # noqa: E731
            _n, np.asarray(x, dtype=float).reshape(-1, 1)
        )
    return result
