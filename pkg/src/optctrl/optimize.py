"""Parameter optimizers and the training loop.

Training runs Adam for a fixed number of iterations, then dense
inverse-Hessian BFGS with a backtracking Armijo line search until the
loss stalls or the iteration budget runs out. Loss, gradient norm and
periodic parameter snapshots are recorded per iteration; identical seed
and configuration reproduce the history bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import mlp
from .errors import AdjointInstabilityError, DivergenceError
from .gradients import grad_discrete, objective_value
from .problems import ControlProblem


@dataclass
class TrainConfig:
    adam_lr: float = 0.01
    adam_iters: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    bfgs_init_step_norm: float = 0.01
    bfgs_max_iters: int = 200
    loss_stall_tol: float = 1e-8   # absolute loss change over stall_window iters
    stall_window: int = 10
    seed: int = 0
    n_steps: int = 2000
    snapshot_every: int = 25

    def __post_init__(self):
        if self.adam_lr <= 0 or self.adam_iters < 0:
            raise ValueError("adam_lr must be > 0 and adam_iters >= 0")
        if self.loss_stall_tol <= 0 or self.stall_window < 1:
            raise ValueError("stall rule needs positive tolerance and window")


@dataclass
class TrainResult:
    params: mlp.MlpParams
    loss_history: list            # CostBreakdown per iteration
    grad_norms: list
    wall_time: float
    termination: str              # "stalled" | "max-iters" | "divergence"
    snapshots: list               # (iteration, flat parameter vector)
    adam_iters: int = 0
    bfgs_iters: int = 0
    divergence_events: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.loss_history[-1].total if self.loss_history else float("nan")


class AdamState:
    """First/second moment accumulators for Adam."""

    def __init__(self, n: int):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0


def adam_step(state: AdamState, params, grad, lr, beta1=0.9, beta2=0.999,
              eps=1e-8):
    """One bias-corrected Adam update; returns the new parameter vector."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(float("nan"), "non-finite gradient in adam_step")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class BfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    n_iters: int
    termination: str              # "converged" | "stalled" | "max-iters"
    hess_inv: np.ndarray
    curvature_skips: int
    history: list                 # f at each accepted iterate


def bfgs_minimize(x0, fun: Callable, fun_grad: Callable, max_iters=200,
                  init_step_norm=0.01, gtol=1e-12, stall_tol=1e-8,
                  stall_window=10, armijo_c=1e-4, shrink=0.5,
                  max_backtracks=40, callback=None) -> BfgsResult:
    """Dense inverse-Hessian BFGS with backtracking Armijo line search.

    The first quasi-Newton step is rescaled to Euclidean norm
    `init_step_norm`; updates violating the curvature condition
    y's <= 1e-10 are skipped. Line-search failure or a stalled loss ends
    the run without raising.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    H = np.eye(n)
    f, g = fun_grad(x)
    history: List[float] = []
    skips = 0
    termination = "max-iters"
    it = 0
    scaled_h0 = False
    for it in range(1, max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= gtol:
            termination = "stalled"
            break
        p = -(H @ g)
        gTp = float(g @ p)
        if gTp >= 0:
            # Lost positive definiteness numerically; restart from steepest descent.
            H = np.eye(n)
            p = -g
            gTp = float(g @ p)
        if it == 1:
            pnorm = float(np.linalg.norm(p))
            if pnorm > 0:
                p *= init_step_norm / pnorm
                gTp = float(g @ p)
        alpha = 1.0
        accepted = False
        for _ in range(max_backtracks + 1):
            x_new = x + alpha * p
            f_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + armijo_c * alpha * gTp:
                accepted = True
                break
            alpha *= shrink
        if not accepted:
            termination = "stalled"
            break
        f_new, g_new = fun_grad(x_new)
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-10:
            if not scaled_h0:
                # Standard initial scaling of H before the first update.
                H *= sy / float(yv @ yv)
                scaled_h0 = True
            rho = 1.0 / sy
            Hy = H @ yv
            H -= rho * (np.outer(s, Hy) + np.outer(Hy, s))
            H += rho * (rho * float(yv @ Hy) + 1.0) * np.outer(s, s)
        else:
            skips += 1
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(x, f, g)
        if (len(history) > stall_window
                and abs(history[-1] - history[-1 - stall_window]) < stall_tol):
            termination = "stalled"
            break
    else:
        it = max_iters
    return BfgsResult(x=x, f=f, g=g, n_iters=it, termination=termination,
                      hess_inv=H, curvature_skips=skips, history=history)


def train(problem: ControlProblem, config: TrainConfig = None,
          init_params: Optional[mlp.MlpParams] = None,
          impl=None) -> TrainResult:
    """Adam warm-up followed by BFGS to stall on the discretized objective."""
    config = config or TrainConfig()
    params0 = init_params if init_params is not None else problem.fresh_params(config.seed)
    x = mlp.flatten_params(params0)
    started = time.perf_counter()

    loss_history = []
    grad_norms = []
    snapshots = []
    events = []
    iteration = 0

    def evaluate(xv):
        rep = grad_discrete(mlp.unflatten_params(xv, params0), problem,
                            n_steps=config.n_steps, impl=impl)
        return rep

    def record(rep):
        nonlocal iteration
        iteration += 1
        loss_history.append(rep.breakdown)
        grad_norms.append(rep.norm)
        if config.snapshot_every and iteration % config.snapshot_every == 0:
            snapshots.append((iteration, x.copy()))

    termination = None
    adam_done = 0
    state = AdamState(x.size)
    prev_x = None
    retried = False
    while adam_done < config.adam_iters:
        try:
            rep = evaluate(x)
        except (DivergenceError, AdjointInstabilityError) as exc:
            events.append((iteration, str(exc)))
            if prev_x is None or retried:
                termination = "divergence"
                break
            # Halve the most recent step and retry once.
            x = prev_x + 0.5 * (x - prev_x)
            retried = True
            continue
        retried = False
        record(rep)
        prev_x = x
        x = adam_step(state, x, rep.flat, config.adam_lr, config.adam_beta1,
                      config.adam_beta2, config.adam_eps)
        adam_done += 1

    bfgs_iters = 0
    if termination is None and config.bfgs_max_iters > 0:
        # BFGS evaluates the full gradient only at accepted points; keep the
        # latest report so the callback can log it without re-evaluating.
        last_report = [None]

        def fun(xv):
            try:
                return objective_value(mlp.unflatten_params(xv, params0),
                                       problem, n_steps=config.n_steps,
                                       impl=impl)[0]
            except DivergenceError as exc:
                events.append((iteration, f"line search: {exc}"))
                return float("inf")

        def fun_grad(xv):
            rep = evaluate(xv)
            last_report[0] = rep
            return rep.objective, rep.flat

        def cb(xv, fv, gv):
            nonlocal x
            x = xv.copy()
            record(last_report[0])

        try:
            res = bfgs_minimize(
                x, fun, fun_grad,
                max_iters=config.bfgs_max_iters,
                init_step_norm=config.bfgs_init_step_norm,
                stall_tol=config.loss_stall_tol,
                stall_window=config.stall_window,
                callback=cb)
            x = res.x
            bfgs_iters = res.n_iters
            termination = {"stalled": "stalled", "max-iters": "max-iters",
                           "converged": "stalled"}[res.termination]
        except (DivergenceError, AdjointInstabilityError) as exc:
            events.append((iteration, str(exc)))
            termination = "divergence"
    elif termination is None:
        termination = "max-iters"

    # Make the final history entry correspond to the returned parameters.
    if termination != "divergence":
        try:
            rep = evaluate(x)
            record(rep)
        except (DivergenceError, AdjointInstabilityError) as exc:
            events.append((iteration, str(exc)))
            termination = "divergence"

    params = mlp.unflatten_params(x, params0)
    return TrainResult(params=params, loss_history=loss_history,
                       grad_norms=grad_norms,
                       wall_time=time.perf_counter() - started,
                       termination=termination, snapshots=snapshots,
                       adam_iters=adam_done, bfgs_iters=bfgs_iters,
                       divergence_events=events)
