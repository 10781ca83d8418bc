"""Problem containers tying dynamics, cost, bounds and horizon together.

Also hosts the scalar linear-quadratic test problem (y' = u with running
cost y^2 + u^2) whose Riccati solution serves as an exact optimality
oracle throughout the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mlp as mlp_mod
from .models import (MODEL_SINGLE_INTEGRATOR, ComboModel, ControlBounds,
                     ImmunoModel, control_slopes, control_transform)
from .objective import CostBreakdown, TherapyCost, trapezoid_weights


class SingleIntegrator:
    """y' = u, the one-state one-control test dynamics."""

    n_state = 1
    n_control = 1
    state_names = ("y",)

    def rhs(self, t, y, u):
        return np.array([u[0]])

    def jac_y(self, t, y, u):
        return np.zeros((1, 1))

    def jac_u(self, t, y, u):
        return np.ones((1, 1))

    def kernel_spec(self):
        return MODEL_SINGLE_INTEGRATOR, np.zeros(16)


class QuadraticCost:
    """Running cost y'Qy + u'Ru (diagonal Q, R), no terminal payoff."""

    def __init__(self, q_diag, r_diag):
        self.q = np.atleast_1d(np.asarray(q_diag, dtype=float))
        self.r = np.atleast_1d(np.asarray(r_diag, dtype=float))
        self.anchor = np.zeros_like(self.r)
        self.quad_weights = self.r

    def running(self, ts, ys, us):
        ys = np.asarray(ys, dtype=float)
        us = np.asarray(us, dtype=float)
        return (ys * ys) @ self.q + (us * us) @ self.r

    def grad_y(self, ys, us):
        return 2.0 * self.q * np.asarray(ys, dtype=float)

    def grad_u(self, ys, us):
        return 2.0 * self.r * np.asarray(us, dtype=float)

    def terminal(self, y_tf):
        return 0.0

    def terminal_grad(self, y_tf):
        return np.zeros_like(np.asarray(y_tf, dtype=float))

    def breakdown(self, traj, controls) -> CostBreakdown:
        w = trapezoid_weights(traj.ts)
        running = float(w @ self.running(traj.ts, traj.ys, controls))
        return CostBreakdown(running_state=running, running_toxicity=0.0,
                             terminal=0.0)


@dataclass
class ControlProblem:
    """Everything a solver needs: dynamics, cost, control box, horizon."""

    model: object
    cost: object
    bounds: ControlBounds
    y0: np.ndarray
    tf: float
    t0: float = 0.0
    n_steps: int = 2000

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.tf <= self.t0:
            raise ValueError("need tf > t0")
        if self.bounds.n_controls != self.model.n_control:
            raise ValueError("bounds and model disagree on the control count")

    @property
    def n_control(self):
        return self.model.n_control

    def grid(self, n_steps=None):
        n = n_steps or self.n_steps
        return self.t0 + (self.tf - self.t0) / n * np.arange(n + 1)

    def stage_times(self, n_steps=None):
        """Node and midpoint times of the RK4 grid, index 2i = node i."""
        n = n_steps or self.n_steps
        h = (self.tf - self.t0) / n
        return self.t0 + 0.5 * h * np.arange(2 * n + 1)

    def network_input(self, ts):
        """Stacked time input (one copy of t per control), shape (m, K)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.tile(ts, (self.n_control, 1))

    def controls_at(self, params: mlp_mod.MlpParams, ts):
        """Evaluate the network controls at the given times.

        Returns (U, cache) with U of shape (len(ts), m); the cache feeds
        the backward pass of the gradient engines.
        """
        raw, cache = mlp_mod.forward(params, self.network_input(ts))
        return control_transform(raw.T, self.bounds), cache

    def fresh_params(self, seed=0) -> mlp_mod.MlpParams:
        """Seeded control network with the standard architecture."""
        return mlp_mod.init_params(
            [self.n_control, 10, 10, self.n_control],
            ["gelu", "gelu", "tanh"], seed=seed)

    def slopes(self):
        return control_slopes(self.bounds)


def immuno_problem(bounds: ControlBounds, weights, y0, tf, n_steps=2000,
                   params=None) -> ControlProblem:
    model = ImmunoModel(params)
    return ControlProblem(model=model, cost=TherapyCost(weights, bounds),
                          bounds=bounds, y0=y0, tf=tf, n_steps=n_steps)


def combo_problem(bounds: ControlBounds, weights, coupling, y0, tf,
                  n_steps=2000, params=None) -> ControlProblem:
    model = ComboModel(params, coupling)
    return ControlProblem(model=model, cost=TherapyCost(weights, bounds),
                          bounds=bounds, y0=y0, tf=tf, n_steps=n_steps)


def lq_problem(n_steps=1000, control_limit=2.0) -> ControlProblem:
    """Scalar LQ test problem: y' = u, J = int_0^1 (y^2 + u^2) dt, y(0) = 1.

    The control box is wide enough that the optimum (|u*| <= tanh(1)) is
    strictly interior.
    """
    bounds = ControlBounds(m1=-control_limit, M1=control_limit,
                           m2=-control_limit, M2=control_limit)
    # Only the first control exists; reuse ControlBounds by trimming below.
    return ControlProblem(
        model=SingleIntegrator(),
        cost=QuadraticCost([1.0], [1.0]),
        bounds=_ScalarBounds(-control_limit, control_limit),
        y0=np.array([1.0]), tf=1.0, n_steps=n_steps)


class _ScalarBounds:
    """One-control box with the same interface as ControlBounds."""

    def __init__(self, lo, hi):
        self.m1, self.M1 = float(lo), float(hi)
        self.n_controls = 1

    @property
    def lower(self):
        return np.array([self.m1])

    @property
    def upper(self):
        return np.array([self.M1])

    @property
    def midpoint(self):
        return np.array([0.5 * (self.m1 + self.M1)])

    @property
    def halfwidth(self):
        return np.array([0.5 * (self.M1 - self.m1)])


def riccati_gain(ts, tf=1.0):
    """Riccati gain P(t) for the scalar LQ problem (closed form tanh(tf-t));
    the test suite recomputes it by fine RK4 as an independent oracle."""
    return np.tanh(tf - np.asarray(ts, dtype=float))


def lq_optimal_control(ts, tf=1.0, y0=1.0):
    """Open-loop optimum u*(t) = -sinh(tf-t)/cosh(tf) * y0."""
    ts = np.asarray(ts, dtype=float)
    return -y0 * np.sinh(tf - ts) / np.cosh(tf)


def lq_optimal_cost(tf=1.0, y0=1.0):
    """J* = P(0) y0^2 = tanh(tf) y0^2."""
    return float(np.tanh(tf)) * y0 * y0
