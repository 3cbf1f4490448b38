# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner-loop kernels; API mirrors ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, ceil, M_PI, cos, sin
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef double _threshold(double* a, Py_ssize_t n, double lam) nogil:
    # Michelot-style fixed point: t only grows and the candidate set only
    # shrinks.  Stopping as soon as the set fails to shrink bounds the loop
    # by n passes even when rounding wobbles t (usually 2-4 passes).
    cdef Py_ssize_t i, count, prev
    cdef double total, t, amax = 0.0
    for i in range(n):
        if a[i] > amax:
            amax = a[i]
    if amax == 0.0:
        return 0.0
    if lam == 0.0:
        return amax
    t = -1.0
    prev = n + 1
    while True:
        total = 0.0
        count = 0
        for i in range(n):
            if a[i] > t:
                total += a[i]
                count += 1
        if count >= prev or count == 0:
            # count 0 only happens when rounding puts t at the largest value
            return t
        prev = count
        t = total / (2.0 * lam + count)


def sq_inf_threshold(mags, double lam):
    cdef double[::1] a = np.ascontiguousarray(np.ravel(mags), dtype=np.float64)
    if a.shape[0] == 0:
        return 0.0
    return _threshold(&a[0], a.shape[0], lam)


def sq_inf_prox(v, double lam):
    arr = np.asarray(v, dtype=np.complex128)
    out = np.array(arr, dtype=np.complex128, order="C", copy=True)
    cdef double complex[::1] w = out.reshape(-1)
    cdef Py_ssize_t n = w.shape[0], i
    if n == 0:
        return out
    cdef double* mags = <double*> malloc(n * sizeof(double))
    cdef double t, m
    try:
        with nogil:
            for i in range(n):
                mags[i] = sqrt(w[i].real * w[i].real + w[i].imag * w[i].imag)
            t = _threshold(mags, n, lam)
            for i in range(n):
                m = mags[i]
                if m > t:
                    w[i] = w[i] * (t / m)
    finally:
        free(mags)
    return out


cdef inline long _index(double re, double im, long n) nogil:
    cdef double theta = atan2(im, re)
    cdef double u
    cdef long q
    if theta < 0.0:
        theta += 2.0 * M_PI
    u = theta * (n / (2.0 * M_PI))
    if u == 0.0:
        return 0
    q = <long> ceil(u) - 1
    if q < 0:
        q = 0
    elif q > n - 1:
        q = n - 1
    return q


def phase_index(v, int bits):
    arr = np.ascontiguousarray(v, dtype=np.complex128)
    out = np.empty(arr.shape, dtype=np.int64)
    cdef double complex[::1] x = arr.reshape(-1)
    cdef long long[::1] q = out.reshape(-1)
    cdef long n = 1 << bits
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            q[i] = _index(x[i].real, x[i].imag, n)
    return out


def quantize_phase(v, int bits):
    arr = np.ascontiguousarray(v, dtype=np.complex128)
    out = np.empty(arr.shape, dtype=np.complex128)
    cdef double complex[::1] x = arr.reshape(-1)
    cdef double complex[::1] y = out.reshape(-1)
    cdef long n = 1 << bits
    cdef double complex[::1] pts = np.exp(1j * np.pi * (2 * np.arange(n) + 1) / n)
    cdef Py_ssize_t i
    with nogil:
        for i in range(x.shape[0]):
            y[i] = pts[_index(x[i].real, x[i].imag, n)]
    return out


def rho_sweep(a, s, rho, double beta, double rho_max):
    cdef double complex[:, :, ::1] A = np.ascontiguousarray(a, dtype=np.complex128)
    cdef double complex[:, ::1] S = np.ascontiguousarray(s, dtype=np.complex128)
    out = np.array(rho, dtype=np.float64, copy=True)
    cdef double[::1] r = out
    if beta <= 0.0:
        return out
    cdef Py_ssize_t L = A.shape[0], n = A.shape[1], K = A.shape[2]
    cdef Py_ssize_t l, i, k
    u_arr = np.zeros((n, K), dtype=np.complex128)
    cdef double complex[:, ::1] u = u_arr
    cdef double energy, corr, new, delta
    cdef double complex al, e
    with nogil:
        for l in range(L):
            for i in range(n):
                for k in range(K):
                    u[i, k] = u[i, k] + r[l] * A[l, i, k]
        for l in range(L):
            energy = 0.0
            corr = 0.0
            for i in range(n):
                for k in range(K):
                    al = A[l, i, k]
                    e = S[i, k] - beta * (u[i, k] - r[l] * al)
                    energy = energy + al.real * al.real + al.imag * al.imag
                    corr = corr + al.real * e.real + al.imag * e.imag
            energy = beta * beta * energy
            if energy == 0.0:
                new = 0.0
            else:
                new = beta * corr / energy
                if new < 0.0:
                    new = 0.0
                if new > rho_max:
                    new = rho_max
            delta = new - r[l]
            if delta != 0.0:
                for i in range(n):
                    for k in range(K):
                        u[i, k] = u[i, k] + delta * A[l, i, k]
                r[l] = new
    return out


def sq_inf_prox_batch(v, double lam):
    arr = np.asarray(v, dtype=np.complex128)
    out = np.array(arr, dtype=np.complex128, order="C", copy=True)
    cdef Py_ssize_t B = out.shape[0]
    if B == 0 or out.size == 0:
        return out
    cdef double complex[:, ::1] w = out.reshape(B, -1)
    cdef Py_ssize_t n = w.shape[1], i, j
    cdef double* mags = <double*> malloc(n * sizeof(double))
    cdef double t, m
    try:
        with nogil:
            for j in range(B):
                for i in range(n):
                    mags[i] = sqrt(w[j, i].real * w[j, i].real + w[j, i].imag * w[j, i].imag)
                t = _threshold(mags, n, lam)
                for i in range(n):
                    m = mags[i]
                    if m > t:
                        w[j, i] = w[j, i] * (t / m)
    finally:
        free(mags)
    return out


def rho_sweep_batch(a, s, rho, beta, double rho_max):
    cdef double[::1] b = np.ascontiguousarray(beta, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    out = np.empty((b.shape[0], rho.shape[rho.ndim - 1]), dtype=np.float64)
    cdef Py_ssize_t j
    for j in range(b.shape[0]):
        out[j] = rho_sweep(a[j], s[j], rho[j], b[j], rho_max)
    return out


def drs_time_step(x_t, z, double lam, double relax):
    cdef Py_ssize_t B = z.shape[0]
    cdef double complex[:, ::1] X = np.ascontiguousarray(x_t, dtype=np.complex128).reshape(B, -1)
    cdef double complex[:, ::1] Z = z.reshape(B, -1)
    cdef Py_ssize_t n = X.shape[1], i, j
    step_out = np.zeros(B)
    xn_out = np.zeros(B)
    pk_out = np.zeros(B)
    l1_out = np.zeros(B)
    cdef double[::1] sn = step_out, xn = xn_out, pk = pk_out, l1 = l1_out
    if n == 0:
        return step_out, xn_out, pk_out, l1_out
    cdef double complex* w = <double complex*> malloc(n * sizeof(double complex))
    cdef double* mags = <double*> malloc(n * sizeof(double))
    cdef double t, m, m2, acc_s, acc_x, acc_g, peak
    cdef double complex d
    try:
        with nogil:
            for j in range(B):
                acc_x = 0.0
                acc_g = 0.0
                peak = 0.0
                for i in range(n):
                    d = Z[j, i] - X[j, i]
                    acc_g = acc_g + sqrt(d.real * d.real + d.imag * d.imag)
                    w[i] = X[j, i] - d
                    mags[i] = sqrt(w[i].real * w[i].real + w[i].imag * w[i].imag)
                    m2 = X[j, i].real * X[j, i].real + X[j, i].imag * X[j, i].imag
                    acc_x = acc_x + m2
                    if m2 > peak:
                        peak = m2
                t = _threshold(mags, n, lam)
                acc_s = 0.0
                for i in range(n):
                    m = mags[i]
                    if m > t:
                        w[i] = w[i] * (t / m)
                    d = w[i] - X[j, i]
                    acc_s = acc_s + d.real * d.real + d.imag * d.imag
                    Z[j, i] = Z[j, i] + relax * d
                sn[j] = acc_s
                xn[j] = acc_x
                pk[j] = peak
                l1[j] = acc_g
    finally:
        free(w)
        free(mags)
    return step_out, xn_out, pk_out, l1_out
