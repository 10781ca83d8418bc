"""Objective gradients with respect to the control-network parameters.

Three independent engines:

* `grad_discrete`  - reverse-mode sweep through the fixed-step RK4 solve
  and the network; exact for the discretized objective (trapezoid + RK4).
* `grad_continuous` - solves the costate equation backward in time from
  the transversality condition and quadratures the control-space
  integrand; differs from the discrete engine by discretization error.
* `grad_fd`        - central finite differences of the discretized
  objective; the verification oracle.

`pmp_residual` evaluates the first-order optimality (stationarity)
residual dH/du along a trajectory, with components projected out where
the control sits on an active bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine, mlp
from .objective import trapezoid_weights
from .ode import Trajectory
from .problems import ControlProblem


@dataclass(frozen=True)
class GradientReport:
    """Gradient of the objective at one parameter point."""

    gradient: mlp.MlpGradient
    flat: np.ndarray
    engine: str           # "discrete" | "continuous" | "finite-difference"
    objective: float
    breakdown: object

    @property
    def norm(self):
        return float(np.linalg.norm(self.flat))


def _forward(params, problem: ControlProblem, n_steps, impl):
    """Shared forward pass: controls at stage times, RK4 solve, breakdown."""
    n = n_steps or problem.n_steps
    h = (problem.tf - problem.t0) / n
    ts_st = problem.stage_times(n)
    U, cache = problem.controls_at(params, ts_st)
    ys, ks = engine.rk4_forward(problem.model, problem.y0, problem.t0, h, n, U,
                                impl=impl)
    return n, h, ts_st, U, cache, ys, ks


def objective_value(params, problem: ControlProblem, n_steps=None, impl=None):
    """Discretized objective at `params` (no gradient). Returns
    (total, CostBreakdown)."""
    n, h, ts_st, U, _, ys, _ = _forward(params, problem, n_steps, impl)
    traj = Trajectory(ts=ts_st[0::2], ys=ys)
    br = problem.cost.breakdown(traj, U[0::2])
    return br.total, br


def grad_discrete(params, problem: ControlProblem, n_steps=None,
                  impl=None) -> GradientReport:
    """Exact gradient of the discretized objective by reverse accumulation."""
    n, h, ts_st, U, cache, ys, ks = _forward(params, problem, n_steps, impl)
    U_nodes = U[0::2]
    ts = ts_st[0::2]
    cost = problem.cost
    br = cost.breakdown(Trajectory(ts=ts, ys=ys), U_nodes)

    fy_nodes = cost.grad_y(ys, U_nodes)
    phi_grad = cost.terminal_grad(ys[-1])
    ubar, _ = engine.rk4_reverse(problem.model, ys, ks, U, problem.t0, h,
                                 fy_nodes, phi_grad, impl=impl)
    # Direct dependence of the running cost on the node controls.
    w = trapezoid_weights(ts)
    ubar = ubar.copy()
    ubar[0::2] += w[:, None] * cost.grad_u(ys, U_nodes)

    seeds = (ubar * problem.slopes()).T
    g = mlp.backward(params, cache, seeds)
    return GradientReport(gradient=g, flat=mlp.flatten_gradient(g),
                          engine="discrete", objective=br.total, breakdown=br)


def grad_continuous(params, problem: ControlProblem, n_steps=None,
                    n_steps_adjoint=None, impl=None) -> GradientReport:
    """Gradient via the costate equation.

    Solves lambda' = -(df/dy + (dg/dy)^T lambda) backward from
    lambda(tf) = dphi/dy, then integrates
    dJ/dp = int (df/du + (dg/du)^T lambda) . du/dp dt by trapezoid.
    The backward pass may run on its own (coarser) grid via
    `n_steps_adjoint`; backward instability raises
    AdjointInstabilityError with blow-up diagnostics.
    """
    n, h, ts_st, U, _, ys, _ = _forward(params, problem, n_steps, impl)
    cost = problem.cost
    br = cost.breakdown(Trajectory(ts=ts_st[0::2], ys=ys), U[0::2])

    na = n_steps_adjoint or n
    if na == n:
        ha = h
        ys_st = engine.stage_states_from_nodes(ys)
        U_st = U
        ts_nodes = ts_st[0::2]
    else:
        ha = (problem.tf - problem.t0) / na
        ts_adj = problem.t0 + 0.5 * ha * np.arange(2 * na + 1)
        traj = Trajectory(ts=ts_st[0::2], ys=ys)
        ys_st = traj.sample_many(ts_adj)
        U_st, _ = problem.controls_at(params, ts_adj)
        ts_nodes = ts_adj[0::2]

    fy_st = cost.grad_y(ys_st, U_st)
    lam_tf = cost.terminal_grad(ys_st[-1])
    lams = engine.rk4_adjoint(problem.model, ys_st, U_st, problem.t0, ha,
                              fy_st, lam_tf, impl=impl)

    y_nodes = ys_st[0::2]
    U_nodes = U_st[0::2]
    xi = cost.grad_u(y_nodes, U_nodes).astype(float, copy=True)
    for i in range(len(ts_nodes)):
        B = problem.model.jac_u(ts_nodes[i], y_nodes[i], U_nodes[i])
        xi[i] += B.T @ lams[i]

    w = trapezoid_weights(ts_nodes)
    raw_cache = problem.controls_at(params, ts_nodes)[1]
    seeds = (xi * problem.slopes() * w[:, None]).T
    g = mlp.backward(params, raw_cache, seeds)
    return GradientReport(gradient=g, flat=mlp.flatten_gradient(g),
                          engine="continuous", objective=br.total, breakdown=br)


def grad_fd(params, problem: ControlProblem, h_fd=1e-5, n_steps=None,
            impl=None) -> GradientReport:
    """Central finite differences of the same discretized objective."""
    if h_fd <= 0:
        raise ValueError("h_fd must be positive")
    x0 = mlp.flatten_params(params)
    total, br = objective_value(params, problem, n_steps=n_steps, impl=impl)
    flat = np.empty_like(x0)
    for r in range(x0.size):
        xp = x0.copy()
        xp[r] += h_fd
        fp, _ = objective_value(mlp.unflatten_params(xp, params), problem,
                                n_steps=n_steps, impl=impl)
        xm = x0.copy()
        xm[r] -= h_fd
        fm, _ = objective_value(mlp.unflatten_params(xm, params), problem,
                                n_steps=n_steps, impl=impl)
        flat[r] = (fp - fm) / (2.0 * h_fd)
    g = _gradient_like(params, flat)
    return GradientReport(gradient=g, flat=flat, engine="finite-difference",
                          objective=total, breakdown=br)


def _gradient_like(params: mlp.MlpParams, flat) -> mlp.MlpGradient:
    shaped = mlp.unflatten_params(flat, params)
    return mlp.MlpGradient(dWs=tuple(l.W for l in shaped.layers),
                           dbs=tuple(l.b for l in shaped.layers),
                           deltas=())


@dataclass(frozen=True)
class PmpReport:
    """Stationarity diagnostics along a trajectory."""

    ts: np.ndarray
    hamiltonian: np.ndarray    # H(t) = f + lambda . g at the grid nodes
    residuals: np.ndarray      # projected dH/du per control, (N+1, m)
    lams: np.ndarray
    max_residual: float

    def to_csv(self, path, control_names=None):
        m = self.residuals.shape[1]
        names = (list(control_names) if control_names
                 else [f"u{j + 1}" for j in range(m)])
        with open(path, "w") as fh:
            fh.write("t,H," + ",".join(f"res_{n}" for n in names) + "\n")
            for i in range(len(self.ts)):
                row = [f"{self.ts[i]:.17g}", f"{self.hamiltonian[i]:.17g}"]
                row += [f"{v:.17g}" for v in self.residuals[i]]
                fh.write(",".join(row) + "\n")


def _residual_report(problem: ControlProblem, ts_nodes, ys_st, U_st, ha,
                     impl) -> PmpReport:
    cost = problem.cost
    model = problem.model
    fy_st = cost.grad_y(ys_st, U_st)
    lam_tf = cost.terminal_grad(ys_st[-1])
    lams = engine.rk4_adjoint(model, ys_st, U_st, problem.t0, ha, fy_st,
                              lam_tf, impl=impl)
    y_nodes = ys_st[0::2]
    U_nodes = U_st[0::2]
    res = cost.grad_u(y_nodes, U_nodes).astype(float, copy=True)
    H = cost.running(ts_nodes, y_nodes, U_nodes).astype(float, copy=True)
    for i in range(len(ts_nodes)):
        B = model.jac_u(ts_nodes[i], y_nodes[i], U_nodes[i])
        res[i] += B.T @ lams[i]
        H[i] += float(lams[i] @ model.rhs(ts_nodes[i], y_nodes[i], U_nodes[i]))
    # Project out components clipped at an active bound (KKT-consistent
    # sign: at the upper bound a negative dH/du is optimal, and vice versa).
    lo, hi = problem.bounds.lower, problem.bounds.upper
    tol = 1e-12 + 1e-9 * (hi - lo)
    at_hi = U_nodes >= hi - tol
    at_lo = U_nodes <= lo + tol
    res[at_hi & (res < 0)] = 0.0
    res[at_lo & (res > 0)] = 0.0
    return PmpReport(ts=ts_nodes, hamiltonian=H, residuals=res, lams=lams,
                     max_residual=float(np.abs(res).max()))


def pmp_residual(params, problem: ControlProblem, n_steps=None,
                 impl=None) -> PmpReport:
    """Stationarity residual of the network-defined control."""
    n, h, ts_st, U, _, ys, _ = _forward(params, problem, n_steps, impl)
    ys_st = engine.stage_states_from_nodes(ys)
    return _residual_report(problem, ts_st[0::2], ys_st, U, h, impl)


def pmp_residual_curve(problem: ControlProblem, U_nodes, n_steps=None,
                       impl=None) -> PmpReport:
    """Stationarity residual of a control curve given at the grid nodes."""
    U_nodes = np.asarray(U_nodes, dtype=float)
    n = U_nodes.shape[0] - 1
    h = (problem.tf - problem.t0) / n
    U_st = engine.stage_controls_from_nodes(U_nodes)
    ys, _ = engine.rk4_forward(problem.model, problem.y0, problem.t0, h, n,
                               U_st, impl=impl)
    ys_st = engine.stage_states_from_nodes(ys)
    ts = problem.t0 + h * np.arange(n + 1)
    return _residual_report(problem, ts, ys_st, U_st, h, impl)
