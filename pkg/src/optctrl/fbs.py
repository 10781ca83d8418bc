"""Forward-backward sweep solver for the Pontryagin optimality system.

Each iteration solves the state equation forward with the current control
curve, solves the costate equation backward from the transversality
condition, and updates the control from the pointwise stationarity
condition dH/du = 0 (closed form for quadratic dose penalties, bang-bang
for zero penalties), blended with the previous iterate by a relaxation
factor. Backward blow-up is a first-class, instrumented outcome: the
solver raises with the blow-up time and the largest costate magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine
from .errors import AdjointInstabilityError, DivergenceError
from .objective import trapezoid_weights
from .ode import Trajectory
from .problems import ControlProblem


@dataclass
class SweepConfig:
    max_iters: int = 500
    tol: float = 1e-4            # relative control change between iterates
    omega: float = 0.5           # relaxation factor for the control update
    omega_min: float = 1e-3     # below this the sweep stops as "oscillation"
    n_steps: Optional[int] = None


@dataclass
class SweepState:
    """One sweep iterate: control curve, trajectories, relaxation factor."""

    U_nodes: np.ndarray
    ys: Optional[np.ndarray] = None
    lams: Optional[np.ndarray] = None
    iteration: int = 0
    omega: float = 0.5


@dataclass
class SweepReport:
    records: list = field(default_factory=list)  # (iter, delta, max|lam|, J)
    converged: bool = False
    termination: str = "max-iters"   # "converged" | "max-iters" | "oscillation"
    iterations: int = 0
    objective: float = float("nan")

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,control_delta,max_abs_lambda,objective\n")
            for it, delta, maxlam, obj in self.records:
                fh.write(f"{it},{delta:.17g},{maxlam:.17g},{obj:.17g}\n")


def _candidate_controls(problem: ControlProblem, ts, ys, lams, U_nodes):
    """Pointwise minimizer of the Hamiltonian over the control box.

    For quadratic penalties c_j (u_j - anchor_j)^2 the stationary point is
    anchor_j - (dg/du^T lam)_j / (2 c_j); zero-penalty components are
    bang-bang at the bound with the lower Hamiltonian. dg/du is evaluated
    at the current control (exact for control-affine dynamics).
    """
    cost = problem.cost
    lo, hi = problem.bounds.lower, problem.bounds.upper
    cand = np.empty_like(U_nodes)
    cw = cost.quad_weights
    anchor = cost.anchor
    for i in range(U_nodes.shape[0]):
        coef = problem.model.jac_u(ts[i], ys[i], U_nodes[i]).T @ lams[i]
        for j in range(U_nodes.shape[1]):
            if cw[j] > 0:
                cand[i, j] = anchor[j] - coef[j] / (2.0 * cw[j])
            else:
                cand[i, j] = lo[j] if coef[j] > 0 else hi[j]
    return np.clip(cand, lo, hi)


def sweep_iterate(state: SweepState, problem: ControlProblem,
                  n_steps=None, impl=None) -> SweepState:
    """One forward/backward/update cycle; returns the next iterate."""
    n = n_steps or (state.U_nodes.shape[0] - 1)
    h = (problem.tf - problem.t0) / n
    ts = problem.t0 + h * np.arange(n + 1)
    U_st = engine.stage_controls_from_nodes(state.U_nodes)
    ys, _ = engine.rk4_forward(problem.model, problem.y0, problem.t0, h, n,
                               U_st, impl=impl)
    ys_st = engine.stage_states_from_nodes(ys)
    fy_st = problem.cost.grad_y(ys_st, U_st)
    lam_tf = problem.cost.terminal_grad(ys[-1])
    lams = engine.rk4_adjoint(problem.model, ys_st, U_st, problem.t0, h,
                              fy_st, lam_tf, impl=impl)
    cand = _candidate_controls(problem, ts, ys, lams, state.U_nodes)
    U_new = state.omega * cand + (1.0 - state.omega) * state.U_nodes
    return SweepState(U_nodes=U_new, ys=ys, lams=lams,
                      iteration=state.iteration + 1, omega=state.omega)


def initial_guess(problem: ControlProblem, n_steps=None) -> np.ndarray:
    """No-treatment control curve (every dose zero) on the node grid."""
    n = n_steps or problem.n_steps
    return np.tile(problem.cost.anchor, (n + 1, 1))


def sweep_solve(problem: ControlProblem, U0=None, config: SweepConfig = None,
                impl=None):
    """Iterate sweeps until the relative control change drops below tol.

    Returns (SweepState, SweepReport). Instability (forward divergence or
    backward costate blow-up) re-raises with the iteration index and the
    partial report attached as exc.report.
    """
    config = config or SweepConfig()
    n = config.n_steps or problem.n_steps
    if U0 is None:
        U0 = initial_guess(problem, n)
    U0 = np.asarray(U0, dtype=float)
    state = SweepState(U_nodes=U0.copy(), omega=config.omega)
    report = SweepReport()
    h = (problem.tf - problem.t0) / n
    ts = problem.t0 + h * np.arange(n + 1)
    deltas = []
    for it in range(1, config.max_iters + 1):
        try:
            new = sweep_iterate(state, problem, n_steps=n, impl=impl)
        except (DivergenceError, AdjointInstabilityError) as exc:
            exc.report = report
            exc.iteration = it
            raise
        delta = float(np.abs(new.U_nodes - state.U_nodes).max())
        rel_delta = delta / (float(np.abs(state.U_nodes).max()) + 1e-30)
        maxlam = float(np.abs(new.lams).max())
        traj = Trajectory(ts=ts, ys=new.ys)
        obj = problem.cost.breakdown(traj, state.U_nodes).total
        report.records.append((it, rel_delta, maxlam, obj))
        report.iterations = it
        report.objective = obj
        deltas.append(rel_delta)
        if rel_delta < config.tol:
            report.converged = True
            report.termination = "converged"
            state = new
            break
        # Halve the relaxation on oscillation (two consecutive increases).
        if len(deltas) >= 3 and deltas[-1] > deltas[-2] > deltas[-3]:
            new.omega = state.omega * 0.5
            if new.omega < config.omega_min:
                report.termination = "oscillation"
                state = new
                break
        state = new
    # Final state/costate consistent with the last accepted control curve.
    if state.ys is None or report.converged:
        state = _refresh(state, problem, n, impl)
    return state, report


def _refresh(state: SweepState, problem: ControlProblem, n, impl):
    h = (problem.tf - problem.t0) / n
    U_st = engine.stage_controls_from_nodes(state.U_nodes)
    ys, _ = engine.rk4_forward(problem.model, problem.y0, problem.t0, h, n,
                               U_st, impl=impl)
    ys_st = engine.stage_states_from_nodes(ys)
    fy_st = problem.cost.grad_y(ys_st, U_st)
    lams = engine.rk4_adjoint(problem.model, ys_st, U_st, problem.t0, h,
                              fy_st, problem.cost.terminal_grad(ys[-1]),
                              impl=impl)
    return SweepState(U_nodes=state.U_nodes, ys=ys, lams=lams,
                      iteration=state.iteration, omega=state.omega)


def sweep_objective(problem: ControlProblem, state: SweepState, n_steps=None):
    """Objective of a sweep iterate's control curve."""
    n = n_steps or (state.U_nodes.shape[0] - 1)
    h = (problem.tf - problem.t0) / n
    ts = problem.t0 + h * np.arange(n + 1)
    traj = Trajectory(ts=ts, ys=state.ys)
    return problem.cost.breakdown(traj, state.U_nodes)
