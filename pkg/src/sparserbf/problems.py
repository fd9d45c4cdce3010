"""PDE residual definitions, boundary treatments and the assembled row system.

Each problem describes its interior operator rows through constant
coefficients ``l_i = c_i u + b_i . grad u + a_i lap u`` (every shipped
second-order term is a multiple of the Laplacian), a nonlinear residual
``r(x, l)`` with its gradient in ``l``, Dirichlet boundary data, and one of
three boundary treatments:

* ``l2``   -- one value row per boundary point, weighted by lambda;
* ``h1``   -- value rows plus a tangential-derivative row per non-corner
              boundary point of a 2-d box (same lambda weight);
* ``mask`` -- no boundary rows; the ansatz is ``u = fbar + gamma * v`` with a
              smooth ``gamma`` vanishing on the boundary, so the data holds
              exactly.

``build_context`` freezes everything assembly needs for one collocation set:
row points, the combined diagonal weights, and per-row effective operator
coefficients (with the mask product rule folded in).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import exact as exact_mod
from .collocation import CollocationSet, weight_matrix
from .exact import ExactSolution
from .network import SolutionJet

__all__ = [
    "LinearOps",
    "BoundaryRowSpec",
    "PdeProblem",
    "AssemblyContext",
    "semilinear_residual",
    "eikonal_residual",
    "burgers_step_residual",
    "mask_transform",
    "boundary_rows",
    "build_context",
    "make_problem",
    "make_burgers_step",
    "PROBLEM_NAMES",
]

BOUNDARY_MODES = ("l2", "h1", "mask")


@dataclass(frozen=True)
class LinearOps:
    """Constant-coefficient operator rows l_i = c_i u + b_i . grad u + a_i lap u."""

    c: np.ndarray  # (n_ops,)
    b: np.ndarray  # (n_ops, d)
    a: np.ndarray  # (n_ops,)

    @property
    def n_ops(self) -> int:
        return self.c.shape[0]


@dataclass
class BoundaryRowSpec:
    """One boundary residual row: a value row or a tangential-derivative row."""

    kind: str                       # "value" | "tangential_deriv"
    point_index: int
    tangent: Optional[np.ndarray] = None


@dataclass
class PdeProblem:
    """A PDE residual family over one box domain.

    ``residual_e(x, l)`` is vectorized: points (K, d) and operator values
    (K, n_e) map to residuals (K,) and gradients (K, n_e).  ``exact`` carries
    analytic jets when the problem is manufactured; ``exact_value`` is always
    available for error metrics (for the eikonal it is the finite-difference
    reference).
    """

    name: str
    dim: int
    interior_ops: LinearOps
    boundary_ops: LinearOps
    residual_e: Callable
    boundary_data: Callable
    boundary_mode: str = "l2"
    supported_modes: tuple = BOUNDARY_MODES
    exact: Optional[ExactSolution] = None
    exact_value: Optional[Callable] = None
    gamma: Optional[ExactSolution] = None
    fbar: Optional[ExactSolution] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.boundary_mode not in self.supported_modes:
            raise ValueError(
                f"problem {self.name!r} does not support boundary mode "
                f"{self.boundary_mode!r} (supported: {self.supported_modes})"
            )
        if self.boundary_mode == "mask" and self.gamma is None:
            raise ValueError("mask mode requires a mask function")
        if self.exact_value is None and self.exact is not None:
            self.exact_value = self.exact.value

    @property
    def n_e(self) -> int:
        return self.interior_ops.n_ops

    @property
    def n_b(self) -> int:
        return self.boundary_ops.n_ops

    # -- residuals ---------------------------------------------------------

    def residual_b(self, x, l):
        """Boundary residual u - f_B for value rows; linear with unit slope."""
        x = np.asarray(x, dtype=float)
        r = l[:, 0] - self.boundary_data(x)
        return r, np.ones_like(l)

    # -- mask helpers --------------------------------------------------------

    def mask_gamma_jets(self, x):
        x = np.asarray(x, dtype=float)
        if self.gamma is None:
            k = x.shape[0]
            return np.ones(k), np.zeros((k, self.dim)), np.zeros(k)
        return self.gamma.value(x), self.gamma.grad(x), self.gamma.lap(x)

    def fbar_jets(self, x):
        x = np.asarray(x, dtype=float)
        k = x.shape[0]
        if self.fbar is None:
            return np.zeros(k), np.zeros((k, self.dim)), np.zeros(k)
        return self.fbar.value(x), self.fbar.grad(x), self.fbar.lap(x)

    # -- effective operator tables ------------------------------------------

    def interior_tables(self, x):
        """Per-point interior operator coefficients acting on the raw network.

        In mask mode the product rule for ``u = fbar + gamma v`` turns the
        constant coefficients into point-dependent ones,

            c~ = c gamma + b . grad gamma + a lap gamma
            b~ = gamma b + 2 a grad gamma
            a~ = a gamma

        plus a constant offset from ``fbar``.
        """
        x = np.asarray(x, dtype=float)
        k = x.shape[0]
        ops = self.interior_ops
        if self.boundary_mode != "mask":
            cc = np.broadcast_to(ops.c, (k, ops.n_ops)).copy()
            bb = np.broadcast_to(ops.b, (k, ops.n_ops, self.dim)).copy()
            aa = np.broadcast_to(ops.a, (k, ops.n_ops)).copy()
            const = np.zeros((k, ops.n_ops))
            return cc, bb, aa, const
        gv, gg, glap = self.mask_gamma_jets(x)
        fv, fg, flap = self.fbar_jets(x)
        cc = (
            ops.c[None, :] * gv[:, None]
            + np.einsum("ij,kj->ki", ops.b, gg)
            + ops.a[None, :] * glap[:, None]
        )
        bb = ops.b[None, :, :] * gv[:, None, None] + 2.0 * np.einsum(
            "i,kj->kij", ops.a, gg
        )
        aa = ops.a[None, :] * gv[:, None]
        const = (
            ops.c[None, :] * fv[:, None]
            + np.einsum("ij,kj->ki", ops.b, fg)
            + ops.a[None, :] * flap[:, None]
        )
        return cc, bb, aa, const

    def solution_value(self, net, x):
        """Value of the solution ansatz (mask transform applied if any)."""
        from .network import eval_value_grad_lap

        x = np.asarray(x, dtype=float)
        u, _, _ = eval_value_grad_lap(net, x)
        if self.boundary_mode != "mask":
            return u
        gv, _, _ = self.mask_gamma_jets(x)
        fv, _, _ = self.fbar_jets(x)
        return fv + gv * u


# ---------------------------------------------------------------------------
# Residual families (scalar spec surface + vectorized closures)
# ---------------------------------------------------------------------------


def semilinear_residual(x, l, f_e):
    """Semilinear Poisson residual r = -lap + u^3 - f_E(x), grad (3u^2, -1)."""
    u, lap = float(l[0]), float(l[1])
    fe = f_e(np.atleast_2d(np.asarray(x, dtype=float)))[0] if callable(f_e) else f_e
    return -lap + u**3 - fe, np.array([3.0 * u**2, -1.0])


def eikonal_residual(x, l, eps, f=1.0):
    """Regularized eikonal residual and its gradient in the operator values.

    r = |grad u|^2 - eps * lap u - f(x)^2 with grad (2 grad_u, -eps).  The
    sign on the viscosity term matches the transformed reference problem
    eps^2 lap v = f^2 v, v = 1 on the boundary, u = -eps log v, whose
    solutions decrease to the boundary-distance function as eps -> 0.
    """
    l = np.asarray(l, dtype=float)
    g, lap = l[:-1], float(l[-1])
    fx = f(x) if callable(f) else f
    r = float(g @ g) - eps * lap - fx**2
    return r, np.concatenate([2.0 * g, [-eps]])


def burgers_step_residual(x, l, u_prev, dt, nu, scaled=False):
    """One backward-Euler step residual for viscous Burgers.

    Unscaled: r = (u - u_prev)/dt + u u_x - nu u_xx with gradient
    (1/dt + u_x, u, -nu); the scaled variant multiplies both by dt (the
    driver then scales the l1 weight by dt^2).
    """
    u, ux, uxx = (float(v) for v in l)
    up = u_prev.u if isinstance(u_prev, SolutionJet) else float(u_prev)
    r = (u - up) / dt + u * ux - nu * uxx
    grad = np.array([1.0 / dt + ux, u, -nu])
    if scaled:
        return dt * r, dt * grad
    return r, grad


def mask_transform(raw_jet: SolutionJet, x, gamma_jet: SolutionJet,
                   fbar_jet: SolutionJet | None = None) -> SolutionJet:
    """Jet of ``u = fbar + gamma * v`` from the raw network jet ``v``.

    Product rule: grad u = grad fbar + gamma grad v + v grad gamma and
    hess u = hess fbar + gamma hess v + grad gamma grad v^T
    + grad v grad gamma^T + v hess gamma.  Linear in the raw jet, so Jacobian
    columns transform identically.
    """
    g, v = gamma_jet, raw_jet
    if fbar_jet is None:
        d = len(v.grad)
        fbar_jet = SolutionJet(0.0, np.zeros(d), np.zeros((d, d)))
    f = fbar_jet
    u = f.u + g.u * v.u
    grad = f.grad + g.u * v.grad + v.u * g.grad
    cross = np.outer(g.grad, v.grad)
    hess = f.hess + g.u * v.hess + cross + cross.T + v.u * g.hess
    return SolutionJet(u=u, grad=grad, hess=hess)


# ---------------------------------------------------------------------------
# Boundary row expansion
# ---------------------------------------------------------------------------


def boundary_rows(pts: CollocationSet, mode: str) -> list[BoundaryRowSpec]:
    """Expand boundary points into residual rows for the given treatment.

    ``l2`` emits one value row per point.  ``h1`` adds one tangential
    derivative row per non-corner point of a 2-d box, the tangent being the
    facet direction; corners are skipped (value rows still constrain them).
    ``mask`` emits nothing.
    """
    if mode == "mask":
        return []
    rows = [BoundaryRowSpec("value", i) for i in range(pts.k2)]
    if mode == "l2":
        return rows
    if mode != "h1":
        raise ValueError(f"unknown boundary mode {mode!r}")
    if pts.dim != 2:
        raise ValueError("h1 boundary loss is only supported on 2-d box domains")
    lo, hi = pts.domain
    for i, x in enumerate(pts.boundary):
        on_facet = np.isclose(x, lo) | np.isclose(x, hi)
        if on_facet.sum() != 1:
            continue  # corner: tangent ambiguous
        tangent = np.zeros(2)
        tangent[int(np.argmin(on_facet))] = 1.0
        rows.append(BoundaryRowSpec("tangential_deriv", i, tangent))
    return rows


# ---------------------------------------------------------------------------
# Assembly context
# ---------------------------------------------------------------------------


@dataclass
class AssemblyContext:
    """Everything row assembly needs for one (problem, collocation) pair."""

    prob: PdeProblem
    pts: CollocationSet
    x_int: np.ndarray
    x_bnd: np.ndarray
    x_all: np.ndarray
    w: np.ndarray
    cc: np.ndarray
    bb: np.ndarray
    aa: np.ndarray
    const: np.ndarray
    b_c: np.ndarray
    b_b: np.ndarray
    b_data: np.ndarray
    row_specs: list[BoundaryRowSpec]
    residual_e: Callable = None

    def __post_init__(self):
        if self.residual_e is None:
            self.residual_e = self.prob.residual_e

    @property
    def n_rows(self) -> int:
        return self.x_all.shape[0]


def build_context(prob: PdeProblem, pts: CollocationSet) -> AssemblyContext:
    """Freeze the row system: points, weights and effective coefficients."""
    if prob.dim != pts.dim:
        raise ValueError("problem and collocation dimension mismatch")
    specs = boundary_rows(pts, prob.boundary_mode)
    cc, bb, aa, const = prob.interior_tables(pts.interior)
    if specs:
        idx = [s.point_index for s in specs]
        x_bnd = pts.boundary[idx]
        b_c = np.array([1.0 if s.kind == "value" else 0.0 for s in specs])
        b_b = np.array(
            [np.zeros(pts.dim) if s.kind == "value" else s.tangent for s in specs]
        )
        fb = prob.boundary_data(x_bnd)
        b_data = np.where(b_c > 0, fb, 0.0)
        tang = [i for i, s in enumerate(specs) if s.kind == "tangential_deriv"]
        if tang:
            if prob.exact is None:
                raise ValueError("tangential boundary data needs solution gradients")
            gexact = prob.exact.grad(x_bnd[tang])
            b_data[tang] = np.einsum("kj,kj->k", gexact, b_b[tang])
    else:
        x_bnd = np.zeros((0, pts.dim))
        b_c = np.zeros(0)
        b_b = np.zeros((0, pts.dim))
        b_data = np.zeros(0)
    wm = weight_matrix(pts, [s.point_index for s in specs])
    return AssemblyContext(
        prob=prob,
        pts=pts,
        x_int=pts.interior,
        x_bnd=x_bnd,
        x_all=np.vstack([pts.interior, x_bnd]),
        w=wm.diag,
        cc=cc,
        bb=bb,
        aa=aa,
        const=const,
        b_c=b_c,
        b_b=b_b,
        b_data=b_data,
        row_specs=specs,
    )


# ---------------------------------------------------------------------------
# Shipped problems
# ---------------------------------------------------------------------------


def _semilinear_ops(dim):
    # l = [u, lap u]
    return LinearOps(
        c=np.array([1.0, 0.0]),
        b=np.zeros((2, dim)),
        a=np.array([0.0, 1.0]),
    )


def _value_ops(dim):
    return LinearOps(c=np.array([1.0]), b=np.zeros((1, dim)), a=np.array([0.0]))


def product_mask(dim) -> ExactSolution:
    """gamma(x) = prod_i (1 - x_i^2): positive inside [-1, 1]^d, zero on the
    boundary with nonvanishing gradient away from edges of codimension 2."""

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.prod(1.0 - x**2, axis=1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        fac = 1.0 - x**2
        out = np.empty_like(x)
        for j in range(dim):
            others = np.prod(np.delete(fac, j, axis=1), axis=1)
            out[:, j] = -2.0 * x[:, j] * others
        return out

    def hess(x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        fac = 1.0 - x**2
        out = np.empty((n, dim, dim))
        for i in range(dim):
            for j in range(dim):
                rest = [m for m in range(dim) if m not in (i, j)]
                others = np.prod(fac[:, rest], axis=1) if rest else np.ones(n)
                if i == j:
                    out[:, i, j] = -2.0 * others
                else:
                    out[:, i, j] = 4.0 * x[:, i] * x[:, j] * others
        return out

    return ExactSolution(dim, value, grad, hess)


def interval_mask() -> ExactSolution:
    """gamma(x) = (x + 1)(x - 1) on [-1, 1]."""

    def value(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return x**2 - 1.0

    def grad(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return (2.0 * x)[:, None]

    def hess(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.full((len(x), 1, 1), 2.0)

    return ExactSolution(1, value, grad, hess)


def _make_semilinear(name, sol: ExactSolution, boundary_mode, supported):
    dim = sol.dim

    def f_e(x):
        x = np.asarray(x, dtype=float)
        return -sol.lap(x) + sol.value(x) ** 3

    def residual_e(x, l):
        u, lap = l[:, 0], l[:, 1]
        r = -lap + u**3 - f_e(x)
        dr = np.stack([3.0 * u**2, -np.ones_like(u)], axis=1)
        return r, dr

    gamma = product_mask(dim) if "mask" in supported else None
    return PdeProblem(
        name=name,
        dim=dim,
        interior_ops=_semilinear_ops(dim),
        boundary_ops=_value_ops(dim),
        residual_e=residual_e,
        boundary_data=sol.value,
        boundary_mode=boundary_mode,
        supported_modes=supported,
        exact=sol,
        gamma=gamma,
        params={"f_e": f_e},
    )


def _make_eikonal(eps, boundary_mode="mask", n_ref=2000):
    dim = 2
    ops = LinearOps(
        c=np.zeros(dim + 1),
        b=np.vstack([np.eye(dim), np.zeros(dim)]),
        a=np.concatenate([np.zeros(dim), [1.0]]),
    )

    def residual_e(x, l):
        g, lap = l[:, :dim], l[:, dim]
        r = np.einsum("kj,kj->k", g, g) - eps * lap - 1.0
        dr = np.concatenate([2.0 * g, np.full((len(lap), 1), -eps)], axis=1)
        return r, dr

    def boundary_data(x):
        return np.zeros(np.asarray(x).shape[0])

    return PdeProblem(
        name="eikonal",
        dim=dim,
        interior_ops=ops,
        boundary_ops=_value_ops(dim),
        residual_e=residual_e,
        boundary_data=boundary_data,
        boundary_mode=boundary_mode,
        supported_modes=("mask", "l2"),
        exact=None,
        exact_value=exact_mod.eikonal_reference(eps, n_ref),
        gamma=product_mask(dim),
        params={"eps": eps},
    )


def make_burgers_step(u_prev, dt, nu, scaled=True) -> PdeProblem:
    """Backward-Euler step problem on [-1, 1] with the interval mask.

    ``u_prev`` is a callable giving the previous time level's values at
    points of shape (K, 1).  The scaled form multiplies residual and gradient
    by dt; the time-march driver scales alpha by dt^2 accordingly.
    """
    ops = LinearOps(
        c=np.array([1.0, 0.0, 0.0]),
        b=np.array([[0.0], [1.0], [0.0]]),
        a=np.array([0.0, 0.0, 1.0]),
    )

    def residual_e(x, l):
        u, ux, uxx = l[:, 0], l[:, 1], l[:, 2]
        up = u_prev(x)
        r = (u - up) / dt + u * ux - nu * uxx
        dr = np.stack([1.0 / dt + ux, u, np.full_like(u, -nu)], axis=1)
        if scaled:
            return dt * r, dt * dr
        return r, dr

    def boundary_data(x):
        return np.zeros(np.asarray(x).shape[0])

    return PdeProblem(
        name="burgers_step",
        dim=1,
        interior_ops=ops,
        boundary_ops=_value_ops(1),
        residual_e=residual_e,
        boundary_data=boundary_data,
        boundary_mode="mask",
        supported_modes=("mask",),
        exact=None,
        gamma=interval_mask(),
        params={"dt": dt, "nu": nu, "scaled": scaled, "u_prev": u_prev},
    )


PROBLEM_NAMES = (
    "semilinear1d",
    "semilinear2d_twobump",
    "semilinear4d",
    "sines2d",
    "eikonal",
    "burgers",
)


def make_problem(name: str, boundary_mode: str | None = None, **params) -> PdeProblem:
    """Problem registry keyed by the config name string."""
    if name == "semilinear1d":
        return _make_semilinear(
            name, exact_mod.intro_tanh_1d(), boundary_mode or "l2", ("l2",)
        )
    if name == "semilinear2d_twobump":
        return _make_semilinear(
            name, exact_mod.two_bump_2d(), boundary_mode or "l2", ("l2", "h1")
        )
    if name == "semilinear4d":
        return _make_semilinear(
            name, exact_mod.product_sines(4), boundary_mode or "l2", ("l2",)
        )
    if name == "sines2d":
        return _make_semilinear(
            name, exact_mod.double_sines_2d(), boundary_mode or "l2",
            ("l2", "h1", "mask"),
        )
    if name == "eikonal":
        return _make_eikonal(
            params.get("eps", 0.1), boundary_mode or "mask",
            params.get("n_ref", 2000),
        )
    if name == "burgers":
        raise ValueError("burgers is time-dependent; use the march driver")
    raise ValueError(f"unknown problem {name!r} (choose from {PROBLEM_NAMES})")
