"""Pure-Python RK4 kernels: forward solve, discrete reverse sweep, and
backward adjoint solve for the packed models.

This is the fallback used when the compiled extension (_kernels_cy) is
unavailable; `optctrl.engine` picks between the two at import. The inner
loops run on plain floats and tuples to keep per-stage overhead low.

Packed model ids: 0 immuno (5 states, 2 controls), 1 combination
(5 states, 3 controls), 2 single integrator (1 state, 1 control). The
parameter vector q holds the 14 immuno rates followed by (e1, e2).
"""

import math

import numpy as np

DIMS = {0: (5, 2), 1: (5, 3), 2: (1, 1)}


def _immuno_ops(q):
    (rC, rmax, Cs, kap, rA, dA, rI, dI, rE, Es, rS, Ss, beta, gam) = q[:14]
    kink = Cs * (1.0 - rmax / rC)

    def rhs(y, u):
        C, A, I, E, S = y
        u1, u2 = u
        F = rC * (1.0 - C / Cs)
        if F > rmax:
            F = rmax
        rec = beta * A * I * E * S
        sup = gam * E * S
        flow = u1 * rec - u2 * sup
        return (F * C - kap * C * E,
                rA * C - dA * A,
                rI * C * E - dI * I,
                -rE * (E - Es) + flow,
                -rS * (S - Ss) - flow)

    def jyt(y, u, v):
        C, A, I, E, S = y
        u1, u2 = u
        v0, v1, v2, v3, v4 = v
        F = rC * (1.0 - C / Cs)
        Fp = -rC / Cs
        if F > rmax:
            F = rmax
            Fp = 0.0
        d = v3 - v4
        bIES = beta * I * E * S
        bAES = beta * A * E * S
        bAIS = beta * A * I * S
        bAIE = beta * A * I * E
        return ((Fp * C + F - kap * E) * v0 + rA * v1 + rI * E * v2,
                -dA * v1 + u1 * bIES * d,
                -dI * v2 + u1 * bAES * d,
                -kap * C * v0 + rI * C * v2 - rE * v3 + (u1 * bAIS - u2 * gam * S) * d,
                -rS * v4 + (u1 * bAIE - u2 * gam * E) * d)

    def jut(y, u, v):
        C, A, I, E, S = y
        d = v[3] - v[4]
        return (beta * A * I * E * S * d, -gam * E * S * d)

    return rhs, jyt, jut


def _combo_ops(q):
    (rC, rmax, Cs, kap, rA, dA, rI, dI, rE, Es, rS, Ss, beta, gam) = q[:14]
    e1, e2 = q[14], q[15]

    def rhs(y, u):
        C, A, I, E, S = y
        u1, u2, u3 = u
        s = math.tanh(-math.log(u3))
        uA = 1.0 + e1 * s
        uI = 1.0 + e2 * s
        F = rC * (1.0 - C / Cs)
        if F > rmax:
            F = rmax
        rec = beta * A * I * E * S
        sup = gam * E * S
        flow = u1 * rec - u2 * sup
        return (u3 * F * C - kap * C * E,
                uA * rA * C - dA * A,
                uI * rI * C * E - dI * I,
                -rE * (E - Es) + flow,
                -rS * (S - Ss) - flow)

    def jyt(y, u, v):
        C, A, I, E, S = y
        u1, u2, u3 = u
        v0, v1, v2, v3, v4 = v
        s = math.tanh(-math.log(u3))
        uA = 1.0 + e1 * s
        uI = 1.0 + e2 * s
        F = rC * (1.0 - C / Cs)
        Fp = -rC / Cs
        if F > rmax:
            F = rmax
            Fp = 0.0
        d = v3 - v4
        bIES = beta * I * E * S
        bAES = beta * A * E * S
        bAIS = beta * A * I * S
        bAIE = beta * A * I * E
        return ((u3 * (Fp * C + F) - kap * E) * v0 + uA * rA * v1 + uI * rI * E * v2,
                -dA * v1 + u1 * bIES * d,
                -dI * v2 + u1 * bAES * d,
                -kap * C * v0 + uI * rI * C * v2 - rE * v3
                + (u1 * bAIS - u2 * gam * S) * d,
                -rS * v4 + (u1 * bAIE - u2 * gam * E) * d)

    def jut(y, u, v):
        C, A, I, E, S = y
        u3 = u[2]
        v0, v1, v2, v3, v4 = v
        s = math.tanh(-math.log(u3))
        dsdu3 = -(1.0 - s * s) / u3
        F = rC * (1.0 - C / Cs)
        if F > rmax:
            F = rmax
        d = v3 - v4
        return (beta * A * I * E * S * d,
                -gam * E * S * d,
                F * C * v0 + e1 * dsdu3 * rA * C * v1
                + e2 * dsdu3 * rI * C * E * v2)

    return rhs, jyt, jut


def _single_integrator_ops(q):
    def rhs(y, u):
        return (u[0],)

    def jyt(y, u, v):
        return (0.0,)

    def jut(y, u, v):
        return (v[0],)

    return rhs, jyt, jut


_OPS = {0: _immuno_ops, 1: _combo_ops, 2: _single_integrator_ops}


def _finite(vals):
    return all(math.isfinite(v) for v in vals)


def rk4_forward(model_id, q, y0, h, n_steps, U):
    """Fixed-step RK4 with per-stage controls.

    U has shape (2*n_steps+1, m): row 2i is the control at node i, row
    2i+1 at the step midpoint. Returns (ys, ks, fail_step) where ks stores
    the four stage slopes per step and fail_step is -1 on success.
    """
    n, m = DIMS[model_id]
    rhs, _, _ = _OPS[model_id](tuple(q))
    Ut = [tuple(row) for row in np.asarray(U, dtype=float)]
    ys = np.empty((n_steps + 1, n))
    ks = np.empty((n_steps, 4, n))
    y = tuple(float(v) for v in y0)
    ys[0] = y
    h2 = 0.5 * h
    h6 = h / 6.0
    for i in range(n_steps):
        ua = Ut[2 * i]
        ub = Ut[2 * i + 1]
        uc = Ut[2 * i + 2]
        k1 = rhs(y, ua)
        k2 = rhs(tuple(y[j] + h2 * k1[j] for j in range(n)), ub)
        k3 = rhs(tuple(y[j] + h2 * k2[j] for j in range(n)), ub)
        k4 = rhs(tuple(y[j] + h * k3[j] for j in range(n)), uc)
        y = tuple(y[j] + h6 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
                  for j in range(n))
        if not _finite(y):
            return ys, ks, i
        ks[i, 0] = k1
        ks[i, 1] = k2
        ks[i, 2] = k3
        ks[i, 3] = k4
        ys[i + 1] = y
    return ys, ks, -1


def rk4_reverse(model_id, q, ys, ks, U, h, fy_nodes, phi_grad):
    """Reverse-mode sweep through the stored RK4 steps.

    Accumulates the gradient of
        sum_i w_i * f(t_i, y_i, u_i) + phi(y_N)
    with respect to every stage control value (trapezoid weights w_i; the
    running cost's direct u-dependence is NOT included here). fy_nodes
    holds df/dy at the nodes, phi_grad is dphi/dy(y_N). Returns
    (ubar, y0bar, fail_step).
    """
    n, m = DIMS[model_id]
    _, jyt, jut = _OPS[model_id](tuple(q))
    n_steps = ks.shape[0]
    Ut = [tuple(row) for row in np.asarray(U, dtype=float)]
    yst = [tuple(row) for row in np.asarray(ys, dtype=float)]
    fyt = [tuple(row) for row in np.asarray(fy_nodes, dtype=float)]
    ubar = np.zeros((2 * n_steps + 1, m))
    rng_n = range(n)
    h2 = 0.5 * h
    ybar = tuple(float(phi_grad[j]) + h2 * fyt[n_steps][j] for j in rng_n)
    for i in range(n_steps - 1, -1, -1):
        yi = yst[i]
        k1 = tuple(ks[i, 0])
        k2 = tuple(ks[i, 1])
        k3 = tuple(ks[i, 2])
        ua = Ut[2 * i]
        ub = Ut[2 * i + 1]
        uc = Ut[2 * i + 2]
        kb1 = [h / 6.0 * ybar[j] for j in rng_n]
        kb2 = [h / 3.0 * ybar[j] for j in rng_n]
        kb3 = [h / 3.0 * ybar[j] for j in rng_n]
        kb4 = [h / 6.0 * ybar[j] for j in rng_n]
        acc = list(ybar)
        # stage 4: k4 = g(y_i + h k3, u_c)
        y4 = tuple(yi[j] + h * k3[j] for j in rng_n)
        gy = jyt(y4, uc, kb4)
        gu = jut(y4, uc, kb4)
        for j in range(m):
            ubar[2 * i + 2, j] += gu[j]
        for j in rng_n:
            kb3[j] += h * gy[j]
            acc[j] += gy[j]
        # stage 3: k3 = g(y_i + h/2 k2, u_b)
        y3 = tuple(yi[j] + h2 * k2[j] for j in rng_n)
        gy = jyt(y3, ub, kb3)
        gu = jut(y3, ub, kb3)
        for j in range(m):
            ubar[2 * i + 1, j] += gu[j]
        for j in rng_n:
            kb2[j] += h2 * gy[j]
            acc[j] += gy[j]
        # stage 2: k2 = g(y_i + h/2 k1, u_b)
        y2 = tuple(yi[j] + h2 * k1[j] for j in rng_n)
        gy = jyt(y2, ub, kb2)
        gu = jut(y2, ub, kb2)
        for j in range(m):
            ubar[2 * i + 1, j] += gu[j]
        for j in rng_n:
            kb1[j] += h2 * gy[j]
            acc[j] += gy[j]
        # stage 1: k1 = g(y_i, u_a)
        gy = jyt(yi, ua, kb1)
        gu = jut(yi, ua, kb1)
        for j in range(m):
            ubar[2 * i, j] += gu[j]
        w = h if i > 0 else h2
        ybar = tuple(acc[j] + gy[j] + w * fyt[i][j] for j in rng_n)
        if not _finite(ybar):
            return ubar, np.array(ybar), i
    return ubar, np.array(ybar), -1


def rk4_adjoint(model_id, q, ys_st, U_st, h, fy_st, lam_tf):
    """Backward RK4 solve of the costate equation.

    lambda' = -(df/dy + (dg/dy)^T lambda), integrated from t_N down to t_0
    on a uniform grid with 2N+1 stage samples (index 2i = node i). ys_st,
    U_st and fy_st supply the state, control and df/dy at every stage
    time. Returns (lams, fail_step) with lams[i] = lambda(t_i).
    """
    n, m = DIMS[model_id]
    _, jyt, _ = _OPS[model_id](tuple(q))
    n_stage = ys_st.shape[0]
    n_steps = (n_stage - 1) // 2
    yt = [tuple(row) for row in np.asarray(ys_st, dtype=float)]
    Ut = [tuple(row) for row in np.asarray(U_st, dtype=float)]
    ft = [tuple(row) for row in np.asarray(fy_st, dtype=float)]
    lams = np.empty((n_steps + 1, n))
    lam = tuple(float(v) for v in lam_tf)
    lams[n_steps] = lam
    rng_n = range(n)
    h2 = 0.5 * h
    h6 = h / 6.0

    def G(idx, v):
        g = jyt(yt[idx], Ut[idx], v)
        f = ft[idx]
        return tuple(-(f[j] + g[j]) for j in rng_n)

    for j in range(n_steps, 0, -1):
        it, im, ib = 2 * j, 2 * j - 1, 2 * j - 2
        l1 = G(it, lam)
        l2 = G(im, tuple(lam[k] - h2 * l1[k] for k in rng_n))
        l3 = G(im, tuple(lam[k] - h2 * l2[k] for k in rng_n))
        l4 = G(ib, tuple(lam[k] - h * l3[k] for k in rng_n))
        lam = tuple(lam[k] - h6 * (l1[k] + 2.0 * (l2[k] + l3[k]) + l4[k])
                    for k in rng_n)
        if not _finite(lam):
            return lams, j - 1
        lams[j - 1] = lam
    return lams, -1
