# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the per-step kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF FLUID_FLOW = 1
DEF LORENZ = 2
DEF DOUBLE_WELL = 3


def monomials(exponents, Z):
    cdef const cnp.int64_t[:, ::1] e = np.ascontiguousarray(exponents, dtype=np.int64)
    cdef const double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n_samples = z.shape[0], n = z.shape[1], K = e.shape[0]
    out_arr = np.empty((n_samples, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, d
    cdef double acc, base
    for i in range(n_samples):
        for k in range(K):
            acc = 1.0
            for j in range(n):
                base = z[i, j]
                for d in range(e[k, j]):
                    acc *= base
            out[i, k] = acc
    return out_arr


cdef inline void _drift(int code, const double[::1] p, double* x, double u,
                        double* out) noexcept nogil:
    if code == FLUID_FLOW:
        out[0] = p[0] * x[0] - p[1] * x[1] + p[2] * x[0] * x[2]
        out[1] = p[1] * x[0] + p[0] * x[1] + p[2] * x[1] * x[2] + u
        out[2] = -p[3] * (x[2] - x[0] * x[0] - x[1] * x[1])
    elif code == LORENZ:
        out[0] = p[0] * (x[1] - x[0]) + u
        out[1] = (p[1] - x[2]) * x[0] - x[1]
        out[2] = x[0] * x[1] - p[2] * x[2]
    else:
        out[0] = 4.0 * x[0] - 4.0 * x[0] * x[0] * x[0] + u
        out[1] = -2.0 * x[1] + u


def drift(int code, params, X, U):
    if code not in (FLUID_FLOW, LORENZ, DOUBLE_WELL):
        raise ValueError(f"no continuous drift for system code {code}")
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], n = x.shape[1], i, j
    out_arr = np.empty((N, n))
    cdef double[:, ::1] out = out_arr
    cdef double xs[3]
    cdef double f[3]
    for i in range(N):
        for j in range(n):
            xs[j] = x[i, j]
        _drift(code, p, xs, u[i, 0], f)
        for j in range(n):
            out[i, j] = f[j]
    return out_arr


def rk4(int code, params, X, U, double dt):
    if code not in (FLUID_FLOW, LORENZ, DOUBLE_WELL):
        raise ValueError(f"no continuous drift for system code {code}")
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], n = x.shape[1], i, j
    out_arr = np.empty((N, n))
    cdef double[:, ::1] out = out_arr
    cdef double x0[3]
    cdef double tmp[3]
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double ui
    with nogil:
        for i in range(N):
            ui = u[i, 0]
            for j in range(n):
                x0[j] = x[i, j]
            _drift(code, p, x0, ui, k1)
            for j in range(n):
                tmp[j] = x0[j] + 0.5 * dt * k1[j]
            _drift(code, p, tmp, ui, k2)
            for j in range(n):
                tmp[j] = x0[j] + 0.5 * dt * k2[j]
            _drift(code, p, tmp, ui, k3)
            for j in range(n):
                tmp[j] = x0[j] + dt * k3[j]
            _drift(code, p, tmp, ui, k4)
            for j in range(n):
                out[i, j] = x0[j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return out_arr


def euler_maruyama(int code, params, X, U, double dt, noise):
    if code not in (FLUID_FLOW, LORENZ, DOUBLE_WELL):
        raise ValueError(f"no continuous drift for system code {code}")
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, ::1] xi = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t N = x.shape[0], n = x.shape[1], i, j
    out_arr = np.empty((N, n))
    cdef double[:, ::1] out = out_arr
    cdef double x0[3]
    cdef double f[3]
    cdef double sq = sqrt(dt)
    with nogil:
        for i in range(N):
            for j in range(n):
                x0[j] = x[i, j]
            _drift(code, p, x0, u[i, 0], f)
            for j in range(n):
                out[i, j] = x0[j] + f[j] * dt
            if code == DOUBLE_WELL:
                out[i, 0] += sq * (0.7 * xi[i, 0] + x0[0] * xi[i, 1])
                out[i, 1] += sq * 0.5 * xi[i, 1]
    return out_arr


cdef void _care_rhs(Py_ssize_t n, double[:, ::1] A, double[:, ::1] S, double[:, ::1] Q,
                    double[:, ::1] P, double[:, ::1] PS, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += P[i, k] * S[k, j]
            PS[i, j] = acc
    for i in range(n):
        for j in range(n):
            acc = Q[i, j]
            for k in range(n):
                acc += A[k, i] * P[k, j] + P[i, k] * A[k, j] - PS[i, k] * P[k, j]
            out[i, j] = acc


def riccati_flow(A, S, Q, double step, double tol, long max_iters):
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64).copy()
    cdef double[:, ::1] s = np.ascontiguousarray(S, dtype=np.float64).copy()
    cdef double[:, ::1] q = np.ascontiguousarray(Q, dtype=np.float64).copy()
    cdef Py_ssize_t n = a.shape[0], i, j
    P_arr = np.array(q, copy=True)
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] T = np.empty((n, n))
    cdef double[:, ::1] PS = np.empty((n, n))
    cdef double[:, :, ::1] k = np.empty((4, n, n))
    cdef long it
    cdef double kmax, pmax, v, sym
    for it in range(1, max_iters + 1):
        _care_rhs(n, a, s, q, P, PS, k[0])
        kmax = 0.0
        pmax = 0.0
        for i in range(n):
            for j in range(n):
                v = abs(k[0, i, j])
                if v > kmax:
                    kmax = v
                v = abs(P[i, j])
                if v > pmax:
                    pmax = v
        if kmax < tol * (pmax if pmax > 1.0 else 1.0):
            for i in range(n):
                for j in range(i + 1, n):
                    sym = 0.5 * (P[i, j] + P[j, i])
                    P[i, j] = sym
                    P[j, i] = sym
            return P_arr, it, 0
        for i in range(n):
            for j in range(n):
                T[i, j] = P[i, j] + 0.5 * step * k[0, i, j]
        _care_rhs(n, a, s, q, T, PS, k[1])
        for i in range(n):
            for j in range(n):
                T[i, j] = P[i, j] + 0.5 * step * k[1, i, j]
        _care_rhs(n, a, s, q, T, PS, k[2])
        for i in range(n):
            for j in range(n):
                T[i, j] = P[i, j] + step * k[2, i, j]
        _care_rhs(n, a, s, q, T, PS, k[3])
        for i in range(n):
            for j in range(n):
                P[i, j] += step / 6.0 * (k[0, i, j] + 2.0 * (k[1, i, j] + k[2, i, j]) + k[3, i, j])
        if it % 64 == 0:
            for i in range(n):
                for j in range(n):
                    v = P[i, j]
                    if not (abs(v) <= 1e12):
                        return P_arr, it, 2
            for i in range(n):
                for j in range(i + 1, n):
                    sym = 0.5 * (P[i, j] + P[j, i])
                    P[i, j] = sym
                    P[j, i] = sym
    return P_arr, max_iters, 1
