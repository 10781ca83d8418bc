"""Kernel dispatch: compiled Cython sweeps when available, pure Python
otherwise.

The active implementation is chosen once at import: the compiled
extension `optctrl._kernels_cy` if it built, else `optctrl._kernels_py`.
Set OPTCTRL_PURE_PYTHON=1 to force the fallback; individual calls can
also pass impl="python" / impl="compiled" (used by parity tests and the
benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .errors import AdjointInstabilityError, DivergenceError

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

_FORCE_PURE = bool(os.environ.get("OPTCTRL_PURE_PYTHON"))

HAVE_COMPILED = _kernels_cy is not None
DEFAULT_IMPL = "compiled" if (HAVE_COMPILED and not _FORCE_PURE) else "python"


def _kernels(impl):
    impl = impl or DEFAULT_IMPL
    if impl == "compiled":
        if _kernels_cy is None:
            raise RuntimeError("compiled kernels requested but not built")
        return _kernels_cy
    if impl == "python":
        return _kernels_py
    raise ValueError(f"unknown kernel implementation {impl!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def rk4_forward(model, y0, t0, h, n_steps, U, impl=None):
    """Fixed-step RK4 solve with per-stage controls U (2*n_steps+1, m).

    Returns (ys, ks): node states and the four stage slopes per step.
    Raises DivergenceError if the state leaves the finite range.
    """
    mid, q = model.kernel_spec()
    ys, ks, fail = _kernels(impl).rk4_forward(mid, _c(q), _c(y0), float(h),
                                              int(n_steps), _c(U))
    if fail >= 0:
        raise DivergenceError(t0 + (fail + 1) * h)
    return ys, ks


def rk4_reverse(model, ys, ks, U, t0, h, fy_nodes, phi_grad, impl=None):
    """Reverse sweep of the discretized objective through the RK4 steps.

    Returns (ubar, y0bar): gradients with respect to every stage control
    value and the initial state. The running cost's direct u-dependence
    is added by the caller.
    """
    ubar, y0bar, fail = _kernels(impl).rk4_reverse(
        model.kernel_spec()[0], _c(model.kernel_spec()[1]), _c(ys), _c(ks),
        _c(U), float(h), _c(fy_nodes), _c(phi_grad))
    if fail >= 0:
        finite = ubar[np.isfinite(ubar)]
        raise AdjointInstabilityError(
            t0 + fail * h, float(np.abs(finite).max()) if finite.size else np.inf,
            message=f"discrete reverse sweep became non-finite at step {fail}")
    return ubar, y0bar


def rk4_adjoint(model, ys_stages, U_stages, t0, h, fy_stages, lam_tf, impl=None):
    """Backward RK4 solve of lambda' = -(df/dy + (dg/dy)^T lambda).

    All *_stages arrays are sampled at the 2N+1 stage times of the grid
    (index 2i = node i). Returns lams (N+1, n) with lams[i] = lambda(t_i).
    Raises AdjointInstabilityError with blow-up diagnostics on overflow,
    the failure mode of backward-in-time sweeps on stiff dynamics.
    """
    mid, q = model.kernel_spec()
    lams, fail = _kernels(impl).rk4_adjoint(mid, _c(q), _c(ys_stages),
                                            _c(U_stages), float(h),
                                            _c(fy_stages), _c(lam_tf))
    if fail >= 0:
        tail = lams[fail + 1:]
        finite = tail[np.isfinite(tail)]
        raise AdjointInstabilityError(
            t0 + fail * h, float(np.abs(finite).max()) if finite.size else np.inf)
    return lams


def stage_controls_from_nodes(U_nodes):
    """Stage-time control curve from node values (midpoints by averaging)."""
    U_nodes = np.asarray(U_nodes, dtype=float)
    n_steps = U_nodes.shape[0] - 1
    U = np.empty((2 * n_steps + 1, U_nodes.shape[1]))
    U[0::2] = U_nodes
    U[1::2] = 0.5 * (U_nodes[:-1] + U_nodes[1:])
    return U


def stage_states_from_nodes(ys):
    """Stage-time states from node states (midpoints by averaging)."""
    ys = np.asarray(ys, dtype=float)
    n_steps = ys.shape[0] - 1
    out = np.empty((2 * n_steps + 1, ys.shape[1]))
    out[0::2] = ys
    out[1::2] = 0.5 * (ys[:-1] + ys[1:])
    return out
