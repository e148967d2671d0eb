# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-frame update kernels.

Mirrors _purepy.py function for function; see that module for the array
layout conventions.  The explicit loops avoid the per-call overhead of
stacked NumPy operations on many small matrices, which dominates the
online (per-frame) processing paths.
"""

import numpy as np

cimport cython
from libc.math cimport INFINITY, sqrt

NAME = "cython"

ctypedef double complex c128


def ewma_rank1(c128[:, :, ::1] phi, c128[:, ::1] x, double[::1] c, double g):
    cdef Py_ssize_t F = phi.shape[0], N = phi.shape[1]
    cdef Py_ssize_t f, i, j
    cdef double w1 = 1.0 - g
    cdef c128 xi
    for f in range(F):
        for i in range(N):
            xi = w1 * c[f] * x[f, i]
            for j in range(N):
                phi[f, i, j] = g * phi[f, i, j] + xi * x[f, j].conjugate()


def fifo_rank1(c128[:, :, ::1] phi, c128[:, ::1] x_new, double[::1] c_new,
               c128[:, ::1] x_old, double[::1] c_old, double g, double g_tb):
    cdef Py_ssize_t F = phi.shape[0], N = phi.shape[1]
    cdef Py_ssize_t f, i, j
    cdef double w1 = 1.0 - g
    cdef c128 ai, bi
    for f in range(F):
        for i in range(N):
            ai = w1 * c_new[f] * x_new[f, i]
            bi = w1 * g_tb * c_old[f] * x_old[f, i]
            for j in range(N):
                phi[f, i, j] = (g * phi[f, i, j]
                                + ai * x_new[f, j].conjugate()
                                - bi * x_old[f, j].conjugate())


def ewma_vec(c128[:, ::1] acc, c128[:, ::1] x, c128[::1] q, double g):
    cdef Py_ssize_t F = acc.shape[0], N = acc.shape[1]
    cdef Py_ssize_t f, i
    cdef double w1 = 1.0 - g
    cdef c128 qc
    for f in range(F):
        qc = w1 * q[f].conjugate()
        for i in range(N):
            acc[f, i] = g * acc[f, i] + qc * x[f, i]


def windowed_rank1_sum(c128[:, :, ::1] xbuf, double[:, ::1] cbuf, double g,
                       c128[:, :, ::1] out):
    cdef Py_ssize_t TW = xbuf.shape[0], F = xbuf.shape[1], N = xbuf.shape[2]
    cdef Py_ssize_t t, f, i, j
    cdef double wt
    cdef c128 xi
    out[:, :, :] = 0.0
    # newest frame last -> weight (1-g); walk newest to oldest accumulating decay
    cdef double decay
    for t in range(TW):
        decay = (1.0 - g) * g ** (TW - 1 - t)
        for f in range(F):
            wt = decay * cbuf[t, f]
            for i in range(N):
                xi = wt * xbuf[t, f, i]
                for j in range(N):
                    out[f, i, j] = out[f, i, j] + xi * xbuf[t, f, j].conjugate()


def window_outputs(c128[:, :, ::1] xbuf, c128[:, ::1] w, c128[:, ::1] out):
    cdef Py_ssize_t TW = xbuf.shape[0], F = xbuf.shape[1], N = xbuf.shape[2]
    cdef Py_ssize_t t, f, i
    cdef c128 acc
    for t in range(TW):
        for f in range(F):
            acc = 0.0
            for i in range(N):
                acc = acc + w[f, i].conjugate() * xbuf[t, f, i]
            out[t, f] = acc


def mil_rank1(c128[:, :, ::1] ainv, c128[:, ::1] b, double[::1] d,
              double[::1] denom_out):
    cdef Py_ssize_t F = ainv.shape[0], N = ainv.shape[1]
    cdef Py_ssize_t f, i, j
    cdef c128 acc
    cdef double quad, denom
    cdef c128[::1] u = np.empty(N, dtype=np.complex128)
    for f in range(F):
        if d[f] == 0.0:
            denom_out[f] = INFINITY
            continue
        quad = 0.0
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc = acc + ainv[f, i, j] * b[f, j]
            u[i] = acc
            quad += (b[f, i].conjugate() * acc).real
        denom = 1.0 / d[f] + quad
        denom_out[f] = denom
        if denom < 1e-14 and denom > -1e-14:
            continue
        for i in range(N):
            acc = u[i] / denom
            for j in range(N):
                ainv[f, i, j] = ainv[f, i, j] - acc * u[j].conjugate()


def pm_step(c128[:, :, ::1] phi_c_inv, c128[:, :, ::1] phi_x, c128[:, ::1] w,
            double[::1] s_out):
    cdef Py_ssize_t F = w.shape[0], N = w.shape[1]
    cdef Py_ssize_t f, i, j
    cdef c128 acc
    cdef double s, scale
    cdef c128[::1] t = np.empty(N, dtype=np.complex128)
    cdef c128[::1] z = np.empty(N, dtype=np.complex128)
    for f in range(F):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc = acc + phi_x[f, i, j] * w[f, j]
            t[i] = acc
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc = acc + phi_c_inv[f, i, j] * t[j]
            z[i] = acc
        s = 0.0
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc = acc + phi_x[f, i, j] * z[j]
            s += (z[i].conjugate() * acc).real
        s_out[f] = s
        if s > 0.0:
            scale = 1.0 / sqrt(s)
            for i in range(N):
                w[f, i] = z[i] * scale
