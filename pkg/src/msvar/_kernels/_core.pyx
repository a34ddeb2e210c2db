# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the sequential regime recursions.

Signature-compatible with the pure-NumPy twins in ``_ref.py``; see there for
the semantic contract. The per-step loops run without the GIL.
"""

import numpy as np

cimport cython
from libc.math cimport exp, log

DEF UNDERFLOW_FLOOR = 1e-300


def filter_forward(const double[:, ::1] log_dens, const double[:, ::1] trans, const double[::1] init):
    cdef Py_ssize_t T = log_dens.shape[0]
    cdef Py_ssize_t M = log_dens.shape[1]
    pred_arr = np.empty((T, M))
    filt_arr = np.empty((T, M))
    cdef double[:, ::1] pred = pred_arr
    cdef double[:, ::1] filt = filt_arr
    cdef double loglik = 0.0
    cdef double m_t, c, acc
    cdef Py_ssize_t t, i, j, fail_t = -1

    with nogil:
        for j in range(M):
            pred[0, j] = init[j]
        for t in range(T):
            m_t = log_dens[t, 0]
            for j in range(1, M):
                if log_dens[t, j] > m_t:
                    m_t = log_dens[t, j]
            c = 0.0
            for j in range(M):
                filt[t, j] = pred[t, j] * exp(log_dens[t, j] - m_t)
                c += filt[t, j]
            if not c > UNDERFLOW_FLOOR:
                fail_t = t
                break
            for j in range(M):
                filt[t, j] /= c
            loglik += log(c) + m_t
            if t + 1 < T:
                for j in range(M):
                    acc = 0.0
                    for i in range(M):
                        acc += trans[i, j] * filt[t, i]
                    pred[t + 1, j] = acc
    return pred_arr, filt_arr, loglik, fail_t


def smooth_backward(const double[:, ::1] predicted, const double[:, ::1] filtered, const double[:, ::1] trans):
    cdef Py_ssize_t T = filtered.shape[0]
    cdef Py_ssize_t M = filtered.shape[1]
    smooth_arr = np.empty((T, M))
    pair_arr = np.empty((T - 1 if T > 1 else 0, M, M))
    cdef double[:, ::1] smooth = smooth_arr
    cdef double[:, :, ::1] pair = pair_arr
    cdef double ratio, acc, p
    cdef Py_ssize_t t, i, j
    cdef long n_floored = 0

    with nogil:
        for j in range(M):
            smooth[T - 1, j] = filtered[T - 1, j]
        for t in range(T - 2, -1, -1):
            for i in range(M):
                acc = 0.0
                for j in range(M):
                    p = predicted[t + 1, j]
                    if p < UNDERFLOW_FLOOR:
                        p = UNDERFLOW_FLOOR
                        n_floored += 1
                    ratio = smooth[t + 1, j] / p
                    pair[t, i, j] = filtered[t, i] * trans[i, j] * ratio
                    acc += pair[t, i, j]
                smooth[t, i] = acc
    return smooth_arr, pair_arr, n_floored


def sample_path(const double[:, ::1] filtered, const double[:, ::1] trans, const double[::1] uniforms):
    cdef Py_ssize_t T = filtered.shape[0]
    cdef Py_ssize_t M = filtered.shape[1]
    states_arr = np.empty(T, dtype=np.int64)
    cdef long[::1] states = states_arr
    cdef double total, target, acc, w
    cdef Py_ssize_t t, i, s

    with nogil:
        total = 0.0
        for i in range(M):
            total += filtered[T - 1, i]
        states[T - 1] = _draw_c(&filtered[T - 1, 0], M, uniforms[T - 1], total)
        for t in range(T - 2, -1, -1):
            s = states[t + 1]
            total = 0.0
            for i in range(M):
                total += filtered[t, i] * trans[i, s]
            acc = 0.0
            states[t] = M - 1
            if total > 0.0:
                target = uniforms[t] * total
                for i in range(M - 1):
                    acc += filtered[t, i] * trans[i, s]
                    if target < acc:
                        states[t] = i
                        break
            else:
                states[t] = 0
    return states_arr


cdef inline Py_ssize_t _draw_c(const double* weights, Py_ssize_t n, double u, double total) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    if total <= 0.0:
        return 0
    for i in range(n - 1):
        acc += weights[i]
        if u * total < acc:
            return i
    return n - 1
