"""Explicit Runge-Kutta integrators with dense trajectory storage.

Two schemes: the classical fixed-step RK4 and an adaptive Dormand-Prince
5(4) pair with PI step-size control. Both record every accepted node so
downstream quadrature and adjoint passes can reuse the grid; off-node
values come from linear interpolation (`Trajectory.sample`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, DivergenceError, StiffnessError

# Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner ordering).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


@dataclass(frozen=True)
class OdeProblem:
    """Initial value problem y' = rhs(t, y) on [t0, t1]."""

    rhs: Callable
    t0: float
    t1: float
    y0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
        if not self.t1 > self.t0:
            raise DimensionError(f"need t1 > t0, got [{self.t0}, {self.t1}]")

    @property
    def dim(self):
        return self.y0.shape[0]


@dataclass
class Trajectory:
    """Dense solve output: states (and optionally controls) on a time grid."""

    ts: np.ndarray
    ys: np.ndarray
    us: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.ys.shape[0] != self.ts.shape[0]:
            raise DimensionError("time grid and state rows differ in length")
        if np.any(np.diff(self.ts) <= 0):
            raise DimensionError("trajectory grid must be strictly increasing")

    @property
    def t0(self):
        return float(self.ts[0])

    @property
    def t1(self):
        return float(self.ts[-1])

    def sample(self, t):
        """Linearly interpolated state at time t; exact at grid nodes."""
        t = float(t)
        if t < self.ts[0] or t > self.ts[-1]:
            raise ValueError(f"t={t} outside trajectory range [{self.ts[0]}, {self.ts[-1]}]")
        i = int(np.searchsorted(self.ts, t, side="right")) - 1
        if i >= len(self.ts) - 1:
            return self.ys[-1].copy()
        w = (t - self.ts[i]) / (self.ts[i + 1] - self.ts[i])
        return (1.0 - w) * self.ys[i] + w * self.ys[i + 1]

    def sample_many(self, ts):
        """Vectorized linear interpolation at an array of times."""
        ts = np.asarray(ts, dtype=float)
        if ts.min() < self.ts[0] or ts.max() > self.ts[-1]:
            raise ValueError("sample times outside trajectory range")
        out = np.empty((ts.shape[0], self.ys.shape[1]))
        for j in range(self.ys.shape[1]):
            out[:, j] = np.interp(ts, self.ts, self.ys[:, j])
        return out

    def to_csv(self, path, state_names=None, control_names=None):
        """Write `t,y1,...,yn[,u1,...,um]` rows at 17 significant digits."""
        n = self.ys.shape[1]
        names = list(state_names) if state_names else [f"y{i + 1}" for i in range(n)]
        if len(names) != n:
            raise DimensionError("wrong number of state names")
        header = ["t"] + names
        if self.us is not None:
            m = self.us.shape[1]
            cnames = list(control_names) if control_names else [f"u{i + 1}" for i in range(m)]
            header += cnames
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(len(self.ts)):
                row = [f"{self.ts[i]:.17g}"] + [f"{v:.17g}" for v in self.ys[i]]
                if self.us is not None:
                    row += [f"{v:.17g}" for v in self.us[i]]
                fh.write(",".join(row) + "\n")


def solve_rk4(problem: OdeProblem, n_steps: int) -> Trajectory:
    """Classical RK4 with uniform step h = (t1-t0)/n_steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    h = (problem.t1 - problem.t0) / n_steps
    ts = problem.t0 + h * np.arange(n_steps + 1)
    ts[-1] = problem.t1
    ys = np.empty((n_steps + 1, problem.dim))
    y = problem.y0.copy()
    ys[0] = y
    rhs = problem.rhs
    for i in range(n_steps):
        t = ts[i]
        k1 = np.asarray(rhs(t, y))
        k2 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k1))
        k3 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k2))
        k4 = np.asarray(rhs(t + h, y + h * k3))
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(ts[i + 1])
        ys[i + 1] = y
    return Trajectory(ts=ts, ys=ys)


def solve_dp45(problem: OdeProblem, rtol: float = 1e-6, atol: float = 1e-8,
               max_steps: int = 1_000_000) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) with PI step control.

    Accepted steps satisfy a scaled RMS error norm <= 1. The step factor
    is safety * err^-0.7/5 * err_prev^0.4/5, clipped to [0.2, 5]. Raises
    StiffnessError when h underflows 1e-12 * (t1 - t0).
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    t, t1 = problem.t0, problem.t1
    h_min = 1e-12 * (t1 - t)
    y = problem.y0.copy()
    rhs = problem.rhs
    ts = [t]
    ys = [y.copy()]
    h = t1 - t
    err_prev = 1.0
    k = np.empty((7, problem.dim))
    k[0] = np.asarray(rhs(t, y))
    for _ in range(max_steps):
        if t >= t1:
            break
        h = min(h, t1 - t)
        if h < h_min:
            raise StiffnessError(t, h)
        for s in range(1, 7):
            ya = y + h * (_DP_A[s][:s] @ k[:s])
            k[s] = np.asarray(rhs(t + _DP_C[s] * h, ya))
        y_new = y + h * (_DP_B5 @ k)
        err_vec = h * (_DP_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            # Shrink hard and retry; persistent blow-up ends in StiffnessError.
            h *= 0.1
            if not np.all(np.isfinite(y)):
                raise DivergenceError(t)
            continue
        if err <= 1.0:
            t = t + h
            y = y_new
            if not np.all(np.isfinite(y)):
                raise DivergenceError(t)
            ts.append(t)
            ys.append(y.copy())
            k[0] = k[6]  # FSAL
            factor = 0.9 * err ** -0.14 * err_prev ** 0.08 if err > 0 else 5.0
            err_prev = max(err, 1e-10)
            h *= min(5.0, max(0.2, factor))
        else:
            h *= min(1.0, max(0.2, 0.9 * err ** -0.2))
    else:
        raise RuntimeError("dp45 exceeded the step budget")
    return Trajectory(ts=np.array(ts), ys=np.array(ys))
