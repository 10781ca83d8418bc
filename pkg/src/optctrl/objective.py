"""Running and terminal treatment costs and their quadrature.

The running cost is the sum of a linear state term a*C - b*E + c*S and a
quadratic toxicity penalty sum_i c_i * v_i^2, where v_i is the distance of
control i from its no-treatment value (v1 = u1 - m1, v2 = M2 - u2,
v3 = M3 - u3). The terminal payoff is d1*C - d2*E + d3*S. The objective is
the composite-trapezoid integral of the running cost on the trajectory
grid plus the terminal payoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .models import ControlBounds

STATE_COST_PATTERN = "a*C - b*E + c*S"


@dataclass(frozen=True)
class ObjectiveWeights:
    """State weights (a, b, c), toxicity weights (c1, c2, c3) and terminal
    weights (d1, d2, d3)."""

    a: float
    b: float
    c: float
    c1: float
    c2: float
    c3: float = 0.0
    d1: float = 0.0
    d2: float = 0.0
    d3: float = 0.0

    def __post_init__(self):
        values = [getattr(self, f) for f in self.__dataclass_fields__]
        if not all(np.isfinite(v) for v in values):
            raise ValueError("objective weights must be finite")
        if self.c1 < 0 or self.c2 < 0 or self.c3 < 0:
            raise ValueError("toxicity weights must be >= 0")


@dataclass(frozen=True)
class CostBreakdown:
    """Objective value split into its three contributions."""

    running_state: float
    running_toxicity: float
    terminal: float

    @property
    def total(self):
        return self.running_state + self.running_toxicity + self.terminal

    def as_dict(self):
        return {"running_state": self.running_state,
                "running_toxicity": self.running_toxicity,
                "terminal": self.terminal, "total": self.total}


def doses(u, bounds: ControlBounds) -> np.ndarray:
    """Effective doses v_i >= 0 at the control point(s) u.

    Accepts a single control vector or an array (..., k).
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != bounds.n_controls:
        raise DimensionError(
            f"control has {u.shape[-1]} components, bounds define {bounds.n_controls}")
    v = np.empty_like(u)
    v[..., 0] = u[..., 0] - bounds.m1
    v[..., 1] = bounds.M2 - u[..., 1]
    if bounds.n_controls == 3:
        v[..., 2] = bounds.M3 - u[..., 2]
    return v


def dose_anchor(bounds: ControlBounds) -> np.ndarray:
    """No-treatment control point (m1, M2[, M3]) where every dose is zero."""
    anchor = [bounds.m1, bounds.M2]
    if bounds.n_controls == 3:
        anchor.append(bounds.M3)
    return np.array(anchor)


def running_cost(y, u, weights: ObjectiveWeights, bounds: ControlBounds):
    """State cost plus quadratic toxicity at one point (or row-wise)."""
    y = np.asarray(y, dtype=float)
    v = doses(u, bounds)
    state = (weights.a * y[..., 0] - weights.b * y[..., 3] + weights.c * y[..., 4])
    cw = np.array([weights.c1, weights.c2, weights.c3][:bounds.n_controls])
    return state + (v * v) @ cw


def terminal_cost(y_tf, weights: ObjectiveWeights):
    """Terminal payoff d1*C - d2*E + d3*S."""
    y_tf = np.asarray(y_tf, dtype=float)
    return (weights.d1 * y_tf[..., 0] - weights.d2 * y_tf[..., 3]
            + weights.d3 * y_tf[..., 4])


def terminal_cost_gradient(weights: ObjectiveWeights) -> np.ndarray:
    return np.array([weights.d1, 0.0, 0.0, -weights.d2, weights.d3])


def trapezoid_weights(ts) -> np.ndarray:
    """Composite trapezoid quadrature weights on a (possibly varying) grid."""
    ts = np.asarray(ts, dtype=float)
    w = np.zeros_like(ts)
    dt = np.diff(ts)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def evaluate_objective(traj, controls, weights: ObjectiveWeights,
                       bounds: ControlBounds) -> CostBreakdown:
    """Trapezoid-integrated running cost plus terminal payoff.

    `traj` is a Trajectory (or any object with ts/ys arrays); `controls`
    holds the control values on the same grid, shape (len(ts), k).
    """
    ts = np.asarray(traj.ts, dtype=float)
    ys = np.asarray(traj.ys, dtype=float)
    us = np.asarray(controls, dtype=float)
    if us.shape[0] != ts.shape[0]:
        raise DimensionError(
            f"controls have {us.shape[0]} rows for a grid of {ts.shape[0]} nodes")
    w = trapezoid_weights(ts)
    state = weights.a * ys[:, 0] - weights.b * ys[:, 3] + weights.c * ys[:, 4]
    v = doses(us, bounds)
    cw = np.array([weights.c1, weights.c2, weights.c3][:bounds.n_controls])
    tox = (v * v) @ cw
    return CostBreakdown(
        running_state=float(w @ state),
        running_toxicity=float(w @ tox),
        terminal=float(terminal_cost(ys[-1], weights)))


class TherapyCost:
    """Cost interface used by the gradient engines and FBS.

    Wraps ObjectiveWeights + ControlBounds with vectorized gradients:
    grad_y is the constant (a, 0, 0, -b, c), grad_u is 2*c_i*(u_i - anchor_i)
    where the anchor is the no-treatment point.
    """

    def __init__(self, weights: ObjectiveWeights, bounds: ControlBounds):
        self.weights = weights
        self.bounds = bounds
        self.anchor = dose_anchor(bounds)
        self.quad_weights = np.array(
            [weights.c1, weights.c2, weights.c3][:bounds.n_controls])
        self._state_grad = np.array([weights.a, 0.0, 0.0, -weights.b, weights.c])

    def running(self, ts, ys, us):
        return running_cost(ys, us, self.weights, self.bounds)

    def grad_y(self, ys, us):
        ys = np.asarray(ys, dtype=float)
        if ys.ndim == 1:
            return self._state_grad.copy()
        return np.broadcast_to(self._state_grad, ys.shape).copy()

    def grad_u(self, ys, us):
        us = np.asarray(us, dtype=float)
        return 2.0 * self.quad_weights * (us - self.anchor)

    def terminal(self, y_tf):
        return float(terminal_cost(y_tf, self.weights))

    def terminal_grad(self, y_tf):
        return terminal_cost_gradient(self.weights)

    def breakdown(self, traj, controls) -> CostBreakdown:
        return evaluate_objective(traj, controls, self.weights, self.bounds)
