# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 kernels: forward solve, discrete reverse sweep, backward
adjoint solve. Mirrors _kernels_py exactly (same signatures, same math);
parity is enforced by the test suite."""

import numpy as np

from libc.math cimport isfinite, log, tanh


cdef inline void _rhs(int mid, double* q, double* y, double* u, double* out) noexcept nogil:
    cdef double C, A, I, E, S, F, rec, sup, flow, s, uA, uI
    if mid == 2:
        out[0] = u[0]
        return
    C = y[0]; A = y[1]; I = y[2]; E = y[3]; S = y[4]
    F = q[0] * (1.0 - C / q[2])
    if F > q[1]:
        F = q[1]
    rec = q[12] * A * I * E * S
    sup = q[13] * E * S
    flow = u[0] * rec - u[1] * sup
    if mid == 0:
        out[0] = F * C - q[3] * C * E
        out[1] = q[4] * C - q[5] * A
        out[2] = q[6] * C * E - q[7] * I
    else:
        s = tanh(-log(u[2]))
        uA = 1.0 + q[14] * s
        uI = 1.0 + q[15] * s
        out[0] = u[2] * F * C - q[3] * C * E
        out[1] = uA * q[4] * C - q[5] * A
        out[2] = uI * q[6] * C * E - q[7] * I
    out[3] = -q[8] * (E - q[9]) + flow
    out[4] = -q[10] * (S - q[11]) - flow


cdef inline void _jyt(int mid, double* q, double* y, double* u, double* v,
                      double* out) noexcept nogil:
    cdef double C, A, I, E, S, F, Fp, d, bIES, bAES, bAIS, bAIE, s, uA, uI
    if mid == 2:
        out[0] = 0.0
        return
    C = y[0]; A = y[1]; I = y[2]; E = y[3]; S = y[4]
    F = q[0] * (1.0 - C / q[2])
    Fp = -q[0] / q[2]
    if F > q[1]:
        F = q[1]
        Fp = 0.0
    d = v[3] - v[4]
    bIES = q[12] * I * E * S
    bAES = q[12] * A * E * S
    bAIS = q[12] * A * I * S
    bAIE = q[12] * A * I * E
    if mid == 0:
        out[0] = (Fp * C + F - q[3] * E) * v[0] + q[4] * v[1] + q[6] * E * v[2]
        out[3] = (-q[3] * C * v[0] + q[6] * C * v[2] - q[8] * v[3]
                  + (u[0] * bAIS - u[1] * q[13] * S) * d)
    else:
        s = tanh(-log(u[2]))
        uA = 1.0 + q[14] * s
        uI = 1.0 + q[15] * s
        out[0] = ((u[2] * (Fp * C + F) - q[3] * E) * v[0]
                  + uA * q[4] * v[1] + uI * q[6] * E * v[2])
        out[3] = (-q[3] * C * v[0] + uI * q[6] * C * v[2] - q[8] * v[3]
                  + (u[0] * bAIS - u[1] * q[13] * S) * d)
    out[1] = -q[5] * v[1] + u[0] * bIES * d
    out[2] = -q[7] * v[2] + u[0] * bAES * d
    out[4] = -q[10] * v[4] + (u[0] * bAIE - u[1] * q[13] * E) * d


cdef inline void _jut(int mid, double* q, double* y, double* u, double* v,
                      double* out) noexcept nogil:
    cdef double C, A, I, E, S, d, s, dsdu3, F
    if mid == 2:
        out[0] = v[0]
        return
    C = y[0]; A = y[1]; I = y[2]; E = y[3]; S = y[4]
    d = v[3] - v[4]
    out[0] = q[12] * A * I * E * S * d
    out[1] = -q[13] * E * S * d
    if mid == 1:
        s = tanh(-log(u[2]))
        dsdu3 = -(1.0 - s * s) / u[2]
        F = q[0] * (1.0 - C / q[2])
        if F > q[1]:
            F = q[1]
        out[2] = (F * C * v[0] + q[14] * dsdu3 * q[4] * C * v[1]
                  + q[15] * dsdu3 * q[6] * C * E * v[2])


cdef inline int _dim_state(int mid) noexcept nogil:
    return 1 if mid == 2 else 5


cdef inline int _dim_control(int mid) noexcept nogil:
    if mid == 2:
        return 1
    return 2 if mid == 0 else 3


def rk4_forward(int model_id, double[::1] q, double[::1] y0, double h,
                int n_steps, double[:, ::1] U):
    cdef int n = _dim_state(model_id)
    cdef int m = _dim_control(model_id)
    ys_arr = np.empty((n_steps + 1, n))
    ks_arr = np.empty((n_steps, 4, n))
    cdef double[:, ::1] ys = ys_arr
    cdef double[:, :, ::1] ks = ks_arr
    cdef double y[8]
    cdef double yt[8]
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef int i, j, fail = -1
    cdef bint bad
    with nogil:
        for j in range(n):
            y[j] = y0[j]
            ys[0, j] = y[j]
        for i in range(n_steps):
            _rhs(model_id, &q[0], y, &U[2 * i, 0], k1)
            for j in range(n):
                yt[j] = y[j] + h2 * k1[j]
            _rhs(model_id, &q[0], yt, &U[2 * i + 1, 0], k2)
            for j in range(n):
                yt[j] = y[j] + h2 * k2[j]
            _rhs(model_id, &q[0], yt, &U[2 * i + 1, 0], k3)
            for j in range(n):
                yt[j] = y[j] + h * k3[j]
            _rhs(model_id, &q[0], yt, &U[2 * i + 2, 0], k4)
            bad = False
            for j in range(n):
                y[j] = y[j] + h6 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
                if not isfinite(y[j]):
                    bad = True
            if bad:
                fail = i
                break
            for j in range(n):
                ks[i, 0, j] = k1[j]
                ks[i, 1, j] = k2[j]
                ks[i, 2, j] = k3[j]
                ks[i, 3, j] = k4[j]
                ys[i + 1, j] = y[j]
    return ys_arr, ks_arr, fail


def rk4_reverse(int model_id, double[::1] q, double[:, ::1] ys,
                double[:, :, ::1] ks, double[:, ::1] U, double h,
                double[:, ::1] fy_nodes, double[::1] phi_grad):
    cdef int n = _dim_state(model_id)
    cdef int m = _dim_control(model_id)
    cdef int n_steps = ks.shape[0]
    ubar_arr = np.zeros((2 * n_steps + 1, m))
    y0bar_arr = np.empty(n)
    cdef double[:, ::1] ubar = ubar_arr
    cdef double[::1] y0bar = y0bar_arr
    cdef double ybar[8]
    cdef double acc[8]
    cdef double kb1[8]
    cdef double kb2[8]
    cdef double kb3[8]
    cdef double kb4[8]
    cdef double yst[8]
    cdef double gy[8]
    cdef double gu[4]
    cdef double h2 = 0.5 * h
    cdef double h3 = h / 3.0
    cdef double h6 = h / 6.0
    cdef double w
    cdef int i, j, fail = -1
    cdef bint bad
    with nogil:
        for j in range(n):
            ybar[j] = phi_grad[j] + h2 * fy_nodes[n_steps, j]
        for i in range(n_steps - 1, -1, -1):
            for j in range(n):
                kb1[j] = h6 * ybar[j]
                kb2[j] = h3 * ybar[j]
                kb3[j] = h3 * ybar[j]
                kb4[j] = h6 * ybar[j]
                acc[j] = ybar[j]
            # stage 4 at y_i + h*k3, control U[2i+2]
            for j in range(n):
                yst[j] = ys[i, j] + h * ks[i, 2, j]
            _jyt(model_id, &q[0], yst, &U[2 * i + 2, 0], kb4, gy)
            _jut(model_id, &q[0], yst, &U[2 * i + 2, 0], kb4, gu)
            for j in range(m):
                ubar[2 * i + 2, j] += gu[j]
            for j in range(n):
                kb3[j] += h * gy[j]
                acc[j] += gy[j]
            # stage 3 at y_i + h/2*k2, control U[2i+1]
            for j in range(n):
                yst[j] = ys[i, j] + h2 * ks[i, 1, j]
            _jyt(model_id, &q[0], yst, &U[2 * i + 1, 0], kb3, gy)
            _jut(model_id, &q[0], yst, &U[2 * i + 1, 0], kb3, gu)
            for j in range(m):
                ubar[2 * i + 1, j] += gu[j]
            for j in range(n):
                kb2[j] += h2 * gy[j]
                acc[j] += gy[j]
            # stage 2 at y_i + h/2*k1, control U[2i+1]
            for j in range(n):
                yst[j] = ys[i, j] + h2 * ks[i, 0, j]
            _jyt(model_id, &q[0], yst, &U[2 * i + 1, 0], kb2, gy)
            _jut(model_id, &q[0], yst, &U[2 * i + 1, 0], kb2, gu)
            for j in range(m):
                ubar[2 * i + 1, j] += gu[j]
            for j in range(n):
                kb1[j] += h2 * gy[j]
                acc[j] += gy[j]
            # stage 1 at y_i, control U[2i]
            for j in range(n):
                yst[j] = ys[i, j]
            _jyt(model_id, &q[0], yst, &U[2 * i, 0], kb1, gy)
            _jut(model_id, &q[0], yst, &U[2 * i, 0], kb1, gu)
            for j in range(m):
                ubar[2 * i, j] += gu[j]
            w = h if i > 0 else h2
            bad = False
            for j in range(n):
                ybar[j] = acc[j] + gy[j] + w * fy_nodes[i, j]
                if not isfinite(ybar[j]):
                    bad = True
            if bad:
                fail = i
                break
        for j in range(n):
            y0bar[j] = ybar[j]
    return ubar_arr, y0bar_arr, fail


def rk4_adjoint(int model_id, double[::1] q, double[:, ::1] ys_st,
                double[:, ::1] U_st, double h, double[:, ::1] fy_st,
                double[::1] lam_tf):
    cdef int n = _dim_state(model_id)
    cdef int n_stage = ys_st.shape[0]
    cdef int n_steps = (n_stage - 1) // 2
    lams_arr = np.empty((n_steps + 1, n))
    cdef double[:, ::1] lams = lams_arr
    cdef double lam[8]
    cdef double lt[8]
    cdef double l1[8]
    cdef double l2[8]
    cdef double l3[8]
    cdef double l4[8]
    cdef double yst[8]
    cdef double ust[4]
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef int j, k, fail = -1
    cdef bint bad
    with nogil:
        for k in range(n):
            lam[k] = lam_tf[k]
            lams[n_steps, k] = lam[k]
        for j in range(n_steps, 0, -1):
            _adj_rhs(model_id, &q[0], ys_st, U_st, fy_st, 2 * j, lam, l1)
            for k in range(n):
                lt[k] = lam[k] - h2 * l1[k]
            _adj_rhs(model_id, &q[0], ys_st, U_st, fy_st, 2 * j - 1, lt, l2)
            for k in range(n):
                lt[k] = lam[k] - h2 * l2[k]
            _adj_rhs(model_id, &q[0], ys_st, U_st, fy_st, 2 * j - 1, lt, l3)
            for k in range(n):
                lt[k] = lam[k] - h * l3[k]
            _adj_rhs(model_id, &q[0], ys_st, U_st, fy_st, 2 * j - 2, lt, l4)
            bad = False
            for k in range(n):
                lam[k] = lam[k] - h6 * (l1[k] + 2.0 * (l2[k] + l3[k]) + l4[k])
                if not isfinite(lam[k]):
                    bad = True
            if bad:
                fail = j - 1
                break
            for k in range(n):
                lams[j - 1, k] = lam[k]
    return lams_arr, fail


cdef inline void _adj_rhs(int mid, double* q, double[:, ::1] ys_st,
                          double[:, ::1] U_st, double[:, ::1] fy_st,
                          int idx, double* lam, double* out) noexcept nogil:
    cdef double jv[8]
    cdef int k
    cdef int n = _dim_state(mid)
    _jyt(mid, q, &ys_st[idx, 0], &U_st[idx, 0], lam, jv)
    for k in range(n):
        out[k] = -(fy_st[idx, k] + jv[k])
