"""Tumor-immune dynamics, chemo-immuno combination dynamics, and control maps.

State vector y = (C, A, I, E, S):
    C  cancer cells / nL
    A  tumor-specific antigen, peptides / nL
    I  inflammation signal, ng / nL
    E  effector T cells / nL
    S  non-effector T cells / nL

Controls scale the co-stimulation term (u1 on beta*A*I*E*S), the
co-suppression term (u2 on gamma*E*S) and, in the combination model, the
cancer growth law (u3) with side effects on antigen presentation and
inflammation through u_A = 1 + e1*tanh(-ln u3), u_I = 1 + e2*tanh(-ln u3).

Analytic state and control Jacobians are provided for the adjoint sweeps;
they are finite-difference checked in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

STATE_NAMES = ("C", "A", "I", "E", "S")
N_STATES = 5

# Kernel model ids (see _kernels_py / _kernels_cy).
MODEL_IMMUNO = 0
MODEL_COMBO = 1
MODEL_SINGLE_INTEGRATOR = 2


@dataclass(frozen=True)
class ImmunoParams:
    """Baseline rate constants; see `baseline_params` for the shipped set."""

    r_C: float       # logistic growth rate of cancer, 1/day
    r_max: float     # maximum growth rate of cancer, 1/day
    C_star: float    # cancer steady-state concentration, cells/nL
    kappa: float     # killing rate of cancer by T cells, nL/(cells*day)
    r_A: float       # antigen presentation source rate, pep/(nL*day)
    delta_A: float   # antigen degradation rate, 1/day
    r_I: float       # inflammation source rate, (ng*nL)/(cells^2*day)
    delta_I: float   # inflammation degradation rate, 1/day
    r_E: float       # effector T cell relaxation rate, 1/day
    E_star: float    # effector T cell base steady state, cells/nL
    r_S: float       # non-effector T cell relaxation rate, 1/day
    S_star: float    # non-effector T cell base steady state, cells/nL
    beta: float      # effector recruitment coefficient, nL^3/(pep*ng*cells*day)
    gamma: float     # co-suppression coefficient, nL/(cells*day)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if not getattr(self, name) > 0:
                raise DomainError(f"parameter {name} must be strictly positive")

    def packed(self) -> np.ndarray:
        return np.array([self.r_C, self.r_max, self.C_star, self.kappa,
                         self.r_A, self.delta_A, self.r_I, self.delta_I,
                         self.r_E, self.E_star, self.r_S, self.S_star,
                         self.beta, self.gamma])


def baseline_params() -> ImmunoParams:
    """Shipped baseline estimates (preset name "baseline")."""
    return ImmunoParams(
        r_C=1.0, r_max=0.09, C_star=1.0e3, kappa=1.2,
        r_A=0.5, delta_A=0.8, r_I=0.4, delta_I=3.0,
        r_E=1.0, E_star=5.0, r_S=1.0, S_star=5.0,
        beta=0.009, gamma=37.414)


def baseline_initial_state() -> np.ndarray:
    """Shipped initial values (C, A, I, E, S)."""
    return np.array([1000.0, 10.0, 10.0, 10.0, 10.0])


@dataclass(frozen=True)
class ChemoCoupling:
    """Amplitudes of the chemo side effects on antigen presentation (e1)
    and inflammation (e2)."""

    e1: float
    e2: float

    def __post_init__(self):
        if self.e1 < 0 or self.e2 < 0:
            raise DomainError("coupling amplitudes must be >= 0")


@dataclass(frozen=True)
class ControlBounds:
    """Admissible box for the controls; m3/M3 present only for the
    three-control combination model."""

    m1: float
    M1: float
    m2: float
    M2: float
    m3: Optional[float] = None
    M3: Optional[float] = None

    def __post_init__(self):
        if not self.m1 < self.M1:
            raise DomainError(f"need m1 < M1, got ({self.m1}, {self.M1})")
        if not self.m2 < self.M2:
            raise DomainError(f"need m2 < M2, got ({self.m2}, {self.M2})")
        if (self.m3 is None) != (self.M3 is None):
            raise DomainError("m3 and M3 must be given together")
        if self.m3 is not None:
            if not self.m3 < self.M3:
                raise DomainError(f"need m3 < M3, got ({self.m3}, {self.M3})")
            if self.m3 <= 0:
                raise DomainError("m3 must be > 0 (u3 enters through ln)")

    @property
    def n_controls(self):
        return 2 if self.m3 is None else 3

    @property
    def lower(self):
        lo = [self.m1, self.m2]
        if self.m3 is not None:
            lo.append(self.m3)
        return np.array(lo)

    @property
    def upper(self):
        hi = [self.M1, self.M2]
        if self.M3 is not None:
            hi.append(self.M3)
        return np.array(hi)

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def halfwidth(self):
        return 0.5 * (self.upper - self.lower)


def control_transform(raw, bounds: ControlBounds):
    """Affine map from raw network outputs in (-1,1)^k to the control box.

    u1 = m1 + (M1-m1)/2 * (raw1 + 1), u2 = M2 + (M2-m2)/2 * (raw2 - 1),
    u3 = m3 + (M3-m3)/2 * (raw3 + 1); all three reduce to
    midpoint + halfwidth * raw.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != bounds.n_controls:
        raise DimensionError(
            f"raw has {raw.shape[-1]} components, bounds define {bounds.n_controls}")
    if np.any(raw <= -1.0) or np.any(raw >= 1.0):
        raise ValueError("raw network outputs must lie strictly inside (-1, 1)")
    return bounds.midpoint + bounds.halfwidth * raw


def control_slopes(bounds: ControlBounds) -> np.ndarray:
    """d(control)/d(raw output): the constant halfwidth per component."""
    return bounds.halfwidth


def growth_F(C, params: ImmunoParams):
    """Capped logistic growth rate min(r_max, r_C (1 - C/C_star))."""
    return np.minimum(params.r_max, params.r_C * (1.0 - np.asarray(C) / params.C_star))


def _growth_F_prime(C, p: ImmunoParams):
    # Logistic branch is active for C >= C_star (1 - r_max/r_C); ties take
    # the logistic derivative so the Jacobian stays continuous from above.
    return -p.r_C / p.C_star if p.r_C * (1.0 - C / p.C_star) <= p.r_max else 0.0


def chemo_modulation(u3, coupling: ChemoCoupling):
    """(u_A, u_I) side effects of the chemo dose u3; u3 must be > 0."""
    if u3 <= 0:
        raise DomainError(f"u3 must be > 0, got {u3}")
    s = math.tanh(-math.log(u3))
    return 1.0 + coupling.e1 * s, 1.0 + coupling.e2 * s


def immuno_rhs(t, y, u1, u2, params: ImmunoParams) -> np.ndarray:
    """Right-hand side of the five-state immunotherapy model."""
    C, A, I, E, S = y
    p = params
    recruit = p.beta * A * I * E * S
    suppress = p.gamma * E * S
    return np.array([
        growth_F(C, p) * C - p.kappa * C * E,
        p.r_A * C - p.delta_A * A,
        p.r_I * C * E - p.delta_I * I,
        -p.r_E * (E - p.E_star) + u1 * recruit - u2 * suppress,
        -p.r_S * (S - p.S_star) - u1 * recruit + u2 * suppress,
    ])


def combo_rhs(t, y, u1, u2, u3, params: ImmunoParams,
              coupling: ChemoCoupling) -> np.ndarray:
    """Right-hand side of the chemo-immuno combination model."""
    uA, uI = chemo_modulation(u3, coupling)
    C, A, I, E, S = y
    p = params
    recruit = p.beta * A * I * E * S
    suppress = p.gamma * E * S
    return np.array([
        u3 * growth_F(C, p) * C - p.kappa * C * E,
        uA * p.r_A * C - p.delta_A * A,
        uI * p.r_I * C * E - p.delta_I * I,
        -p.r_E * (E - p.E_star) + u1 * recruit - u2 * suppress,
        -p.r_S * (S - p.S_star) - u1 * recruit + u2 * suppress,
    ])


def _te_jacobian_rows(y, u1, u2, p: ImmunoParams):
    # Shared E/S rows of both models' state Jacobians.
    _, A, I, E, S = y
    bAIE = p.beta * A * I * E
    bAIS = p.beta * A * I * S
    bIES = p.beta * I * E * S
    bAES = p.beta * A * E * S
    row_E = np.array([0.0, u1 * bIES, u1 * bAES,
                      -p.r_E + u1 * bAIS - u2 * p.gamma * S,
                      u1 * bAIE - u2 * p.gamma * E])
    row_S = np.array([0.0, -u1 * bIES, -u1 * bAES,
                      -u1 * bAIS + u2 * p.gamma * S,
                      -p.r_S - u1 * bAIE + u2 * p.gamma * E])
    return row_E, row_S


def immuno_jacobian(y, u1, u2, params: ImmunoParams) -> np.ndarray:
    """d(rhs)/dy for the immunotherapy model."""
    C, A, I, E, S = y
    p = params
    row_E, row_S = _te_jacobian_rows(y, u1, u2, p)
    J = np.zeros((5, 5))
    J[0, 0] = _growth_F_prime(C, p) * C + float(growth_F(C, p)) - p.kappa * E
    J[0, 3] = -p.kappa * C
    J[1, 0] = p.r_A
    J[1, 1] = -p.delta_A
    J[2, 0] = p.r_I * E
    J[2, 2] = -p.delta_I
    J[2, 3] = p.r_I * C
    J[3] = row_E
    J[4] = row_S
    return J


def combo_jacobian(y, u1, u2, u3, params: ImmunoParams,
                   coupling: ChemoCoupling) -> np.ndarray:
    """d(rhs)/dy for the combination model."""
    uA, uI = chemo_modulation(u3, coupling)
    C, A, I, E, S = y
    p = params
    row_E, row_S = _te_jacobian_rows(y, u1, u2, p)
    J = np.zeros((5, 5))
    J[0, 0] = u3 * (_growth_F_prime(C, p) * C + float(growth_F(C, p))) - p.kappa * E
    J[0, 3] = -p.kappa * C
    J[1, 0] = uA * p.r_A
    J[1, 1] = -p.delta_A
    J[2, 0] = uI * p.r_I * E
    J[2, 2] = -p.delta_I
    J[2, 3] = uI * p.r_I * C
    J[3] = row_E
    J[4] = row_S
    return J


def immuno_control_jacobian(y, u1, u2, params: ImmunoParams) -> np.ndarray:
    """d(rhs)/d(u1,u2), shape (5, 2)."""
    _, A, I, E, S = y
    recruit = params.beta * A * I * E * S
    suppress = params.gamma * E * S
    J = np.zeros((5, 2))
    J[3, 0] = recruit
    J[3, 1] = -suppress
    J[4, 0] = -recruit
    J[4, 1] = suppress
    return J


def combo_control_jacobian(y, u1, u2, u3, params: ImmunoParams,
                           coupling: ChemoCoupling) -> np.ndarray:
    """d(rhs)/d(u1,u2,u3), shape (5, 3)."""
    if u3 <= 0:
        raise DomainError(f"u3 must be > 0, got {u3}")
    C, A, I, E, S = y
    p = params
    J = np.zeros((5, 3))
    J[:, :2] = immuno_control_jacobian(y, u1, u2, p)
    s = math.tanh(-math.log(u3))
    dsdu3 = -(1.0 - s * s) / u3
    J[0, 2] = float(growth_F(C, p)) * C
    J[1, 2] = coupling.e1 * dsdu3 * p.r_A * C
    J[2, 2] = coupling.e2 * dsdu3 * p.r_I * C * E
    return J


class ImmunoModel:
    """Two-control immunotherapy dynamics bound to a parameter set."""

    n_state = N_STATES
    n_control = 2
    state_names = STATE_NAMES

    def __init__(self, params: ImmunoParams = None):
        self.params = params if params is not None else baseline_params()

    def rhs(self, t, y, u):
        return immuno_rhs(t, y, u[0], u[1], self.params)

    def jac_y(self, t, y, u):
        return immuno_jacobian(y, u[0], u[1], self.params)

    def jac_u(self, t, y, u):
        return immuno_control_jacobian(y, u[0], u[1], self.params)

    def kernel_spec(self):
        q = np.concatenate([self.params.packed(), [0.0, 0.0]])
        return MODEL_IMMUNO, q


class ComboModel:
    """Three-control chemo-immuno dynamics."""

    n_state = N_STATES
    n_control = 3
    state_names = STATE_NAMES

    def __init__(self, params: ImmunoParams = None,
                 coupling: ChemoCoupling = ChemoCoupling(2.0, 1.0)):
        self.params = params if params is not None else baseline_params()
        self.coupling = coupling

    def rhs(self, t, y, u):
        return combo_rhs(t, y, u[0], u[1], u[2], self.params, self.coupling)

    def jac_y(self, t, y, u):
        return combo_jacobian(y, u[0], u[1], u[2], self.params, self.coupling)

    def jac_u(self, t, y, u):
        return combo_control_jacobian(y, u[0], u[1], u[2], self.params, self.coupling)

    def kernel_spec(self):
        q = np.concatenate([self.params.packed(),
                            [self.coupling.e1, self.coupling.e2]])
        return MODEL_COMBO, q
