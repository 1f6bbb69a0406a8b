# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled iterative-projection sweep.

Same contract as ``_ip_numpy.ip_sweep``: per frequency, accumulate the
weighted covariances of every source in one pass over frames, then solve
``(W_f U_fn) w = e_n`` by Gaussian elimination with partial pivoting for
``n = 0 .. N-1`` in order, normalizing each ``w`` to ``w^H U_fn w = 1``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free

from .errors import SingularMatrixError

cnp.import_array()

cdef double LOAD = 1e-12


cdef inline double cabs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef int solve_inplace(double complex* A, double complex* b, int m) noexcept nogil:
    """Solve A x = b in place (x overwrites b); returns 1 if singular."""
    cdef int i, j, k, piv
    cdef double best, v
    cdef double complex tmp, factor
    for k in range(m):
        piv = k
        best = cabs2(A[k * m + k])
        for i in range(k + 1, m):
            v = cabs2(A[i * m + k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return 1
        if piv != k:
            for j in range(m):
                tmp = A[k * m + j]
                A[k * m + j] = A[piv * m + j]
                A[piv * m + j] = tmp
            tmp = b[k]
            b[k] = b[piv]
            b[piv] = tmp
        for i in range(k + 1, m):
            factor = A[i * m + k] / A[k * m + k]
            if factor != 0:
                for j in range(k, m):
                    A[i * m + j] = A[i * m + j] - factor * A[k * m + j]
                b[i] = b[i] - factor * b[k]
    for i in range(m - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, m):
            tmp = tmp - A[i * m + j] * b[j]
        b[i] = tmp / A[i * m + i]
    return 0


def ip_sweep(X, phi, W):
    """One IP sweep over sources with fixed weights ``phi``; returns a new W."""
    cdef double complex[:, :, ::1] Xv = np.ascontiguousarray(X, dtype=np.complex128)
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(phi, dtype=np.float64)
    Wout = np.array(W, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, :, ::1] Wv = Wout

    cdef Py_ssize_t n_freq = Xv.shape[0], n_frames = Xv.shape[1], m = Xv.shape[2]
    cdef Py_ssize_t n_src = Wv.shape[1]
    if Pv.shape[0] != n_freq or Pv.shape[1] != n_frames or Pv.shape[2] != n_src:
        raise ValueError("phi shape does not match X and W")
    if Wv.shape[0] != n_freq or Wv.shape[2] != m or n_src != m:
        raise ValueError("W must have shape (F, M, M) matching X")

    cdef double complex* U = <double complex*> malloc(n_src * m * m * sizeof(double complex))
    cdef double* Ur = <double*> malloc(n_src * m * m * sizeof(double))
    cdef double* Ui = <double*> malloc(n_src * m * m * sizeof(double))
    cdef double complex* A = <double complex*> malloc(m * m * sizeof(double complex))
    cdef double complex* w = <double complex*> malloc(m * sizeof(double complex))
    bad_solve = []
    bad_norm = []
    cdef Py_ssize_t f, t, n, i, j, k, base
    cdef double p, tr, load, denom, inv_t = 1.0 / n_frames
    cdef double ar, ai, br, bi
    cdef const double* xf
    cdef const double* pf
    cdef double complex acc, uw
    cdef int status = 0
    try:
        with nogil:
            for f in range(n_freq):
                # interleaved (re, im) view of X[f] and the weights of bin f
                xf = <const double*> &Xv[f, 0, 0]
                pf = &Pv[f, 0, 0]
                for k in range(n_src * m * m):
                    Ur[k] = 0.0
                    Ui[k] = 0.0
                for t in range(n_frames):
                    for n in range(n_src):
                        p = pf[t * n_src + n]
                        base = n * m * m
                        for i in range(m):
                            ar = p * xf[2 * (t * m + i)]
                            ai = p * xf[2 * (t * m + i) + 1]
                            for j in range(i, m):
                                br = xf[2 * (t * m + j)]
                                bi = xf[2 * (t * m + j) + 1]
                                Ur[base + i * m + j] += ar * br + ai * bi
                                Ui[base + i * m + j] += ai * br - ar * bi
                for n in range(n_src):
                    base = n * m * m
                    tr = 0.0
                    for i in range(m):
                        U[base + i * m + i] = Ur[base + i * m + i] * inv_t
                        tr += Ur[base + i * m + i] * inv_t
                        for j in range(i + 1, m):
                            U[base + i * m + j] = (Ur[base + i * m + j] + 1j * Ui[base + i * m + j]) * inv_t
                            U[base + j * m + i] = U[base + i * m + j].conjugate()
                    load = LOAD * tr / m
                    for i in range(m):
                        U[base + i * m + i] += load

                for n in range(n_src):
                    # A = W_f U_fn
                    for i in range(m):
                        for j in range(m):
                            acc = 0
                            for k in range(m):
                                acc = acc + Wv[f, i, k] * U[(n * m + k) * m + j]
                            A[i * m + j] = acc
                        w[i] = 0
                    w[n] = 1
                    if solve_inplace(A, w, m):
                        status = 1
                        break
                    denom = 0.0
                    for i in range(m):
                        uw = 0
                        for j in range(m):
                            uw = uw + U[(n * m + i) * m + j] * w[j]
                        denom += (w[i].conjugate() * uw).real
                    if not denom > 0:
                        status = 2
                        break
                    denom = sqrt(denom)
                    for i in range(m):
                        Wv[f, n, i] = (w[i] / denom).conjugate()
                if status:
                    with gil:
                        (bad_solve if status == 1 else bad_norm).append(f)
                    status = 0
    finally:
        free(U)
        free(Ur)
        free(Ui)
        free(A)
        free(w)

    if bad_solve:
        raise SingularMatrixError(f"singular W_f U_fn at frequencies {bad_solve[:10]}", bad_solve)
    if bad_norm:
        raise SingularMatrixError(f"non-positive normalizer at frequencies {bad_norm[:10]}", bad_norm)
    return Wout
