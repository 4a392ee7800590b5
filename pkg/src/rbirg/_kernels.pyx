# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of _kernels_py.advance_least_squares.

The two per-step matrix-vector products (block gradient against the
residual, rank-width residual update) go through BLAS dgemv on the
Fortran-ordered matrix; projection and averaging are plain C loops.
Semantics match the NumPy fallback; only floating-point summation order
inside the products may differ.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport pow, sqrt
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


def advance_least_squares(const double[::1, :] A, const double[:] b,
                          double[:] resid, double[:] x, double[:] xbar,
                          double S, long long k0, const cnp.int64_t[:] idx,
                          const cnp.int64_t[:] fence, const signed char[:] kinds,
                          const double[:] lo, const double[:] hi,
                          const double[:] ball_center, const double[:] ball_radius,
                          const double[:] c, double mu,
                          double gamma0, double a_exp, double eta0, double b_exp,
                          double r_exp, long long recompute_every):
    cdef int m = A.shape[0]
    cdef int n = A.shape[1]
    cdef Py_ssize_t count = idx.shape[0]
    cdef Py_ssize_t t, i, j, s, blk
    cdef int width, inc = 1
    cdef long long k
    cdef double gam, eta, w, S_new, g, vj, acc, dist, scale
    cdef double one = 1.0, zero = 0.0, neg = -1.0
    cdef double[::1] gblk = np.empty(n, dtype=np.float64)
    cdef double[::1] dblk = np.empty(n, dtype=np.float64)

    for t in range(count):
        k = k0 + t
        gam = gamma0 * pow(k + 1.0, -a_exp)
        eta = eta0 * pow(k + 1.0, -b_exp)
        blk = idx[t]
        s = fence[blk]
        width = <int> (fence[blk + 1] - fence[blk])

        # gblk = A[:, s:s+width]^T resid
        dgemv("T", &m, &width, &one, <double*> &A[0, s], &m,
              <double*> &resid[0], &inc, &zero, &gblk[0], &inc)

        for j in range(width):
            g = 2.0 * gblk[j] + (eta * mu) * (x[s + j] - c[s + j])
            dblk[j] = x[s + j] - gam * g

        if kinds[blk] == 0:
            for j in range(width):
                vj = dblk[j]
                if vj < lo[s + j]:
                    vj = lo[s + j]
                elif vj > hi[s + j]:
                    vj = hi[s + j]
                dblk[j] = vj
        else:
            acc = 0.0
            for j in range(width):
                dist = dblk[j] - ball_center[s + j]
                acc += dist * dist
            dist = sqrt(acc)
            if dist > ball_radius[blk]:
                scale = ball_radius[blk] / dist
                for j in range(width):
                    dblk[j] = ball_center[s + j] + (dblk[j] - ball_center[s + j]) * scale

        # dblk becomes the block delta; x takes the projected values
        for j in range(width):
            vj = dblk[j]
            dblk[j] = vj - x[s + j]
            x[s + j] = vj

        # resid += A[:, s:s+width] dblk
        dgemv("N", &m, &width, &one, <double*> &A[0, s], &m,
              &dblk[0], &inc, &one, <double*> &resid[0], &inc)

        w = pow(gamma0 * pow(k + 2.0, -a_exp), r_exp)
        S_new = S + w
        for j in range(n):
            xbar[j] = (S * xbar[j] + w * x[j]) / S_new
        S = S_new

        if recompute_every > 0 and (k + 1) % recompute_every == 0:
            # resid = A x - b, bounding incremental drift
            dgemv("N", &m, &n, &one, <double*> &A[0, 0], &m,
                  <double*> &x[0], &inc, &zero, <double*> &resid[0], &inc)
            for i in range(m):
                resid[i] -= b[i]

    return S
