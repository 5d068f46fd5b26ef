# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched local least-squares kernel (twin of ``_pycore``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"

cdef double PIVOT_TOL = 1e-12
cdef double MAX_RIDGE = 1e-2


cdef int _chol_solve(double* G, double* rhs, double* work, double* scale,
                     double* out, int m, double lam) noexcept nogil:
    """Equilibrated Cholesky solve of (G + lam I) x = rhs. Returns 0 on success."""
    cdef int i, j, k
    cdef double s, dii
    for i in range(m):
        dii = G[i * m + i] + lam
        scale[i] = 1.0 / sqrt(dii) if dii > 0 else 1.0
    for i in range(m):
        for j in range(m):
            work[i * m + j] = G[i * m + j] * scale[i] * scale[j]
        work[i * m + i] = (G[i * m + i] + lam) * scale[i] * scale[i]
    # in-place lower Cholesky
    for j in range(m):
        s = work[j * m + j]
        for k in range(j):
            s -= work[j * m + k] * work[j * m + k]
        if not (s > PIVOT_TOL):
            return 1
        s = sqrt(s)
        work[j * m + j] = s
        for i in range(j + 1, m):
            dii = work[i * m + j]
            for k in range(j):
                dii -= work[i * m + k] * work[j * m + k]
            work[i * m + j] = dii / s
    # forward
    for i in range(m):
        s = rhs[i] * scale[i]
        for k in range(i):
            s -= work[i * m + k] * out[k]
        out[i] = s / work[i * m + i]
    # backward
    for i in range(m - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, m):
            s -= work[k * m + i] * out[k]
        out[i] = s / work[i * m + i]
    for i in range(m):
        out[i] *= scale[i]
    return 0


def local_fit_batch(const double[:, ::1] disp, const double[::1] w, const double[::1] y,
                    const cnp.int64_t[::1] offsets, const cnp.int64_t[:, ::1] exps,
                    const cnp.int64_t[::1] prefix, double ridge_floor):
    """Fit one local polynomial per query; see ``_pycore.local_fit_batch``."""
    cdef Py_ssize_t q = offsets.shape[0] - 1
    cdef int M = exps.shape[0]
    cdef int d = exps.shape[1]
    cdef int p = prefix.shape[0] - 1
    beta_arr = np.zeros((q, M), dtype=np.float64)
    used_arr = np.full(q, -1, dtype=np.int64)
    ridge_arr = np.zeros(q, dtype=np.float64)
    cdef double[:, ::1] beta = beta_arr
    cdef cnp.int64_t[::1] used = used_arr
    cdef double[::1] ridge = ridge_arr

    cdef double* G = <double*> malloc(M * M * sizeof(double))
    cdef double* Gd = <double*> malloc(M * M * sizeof(double))
    cdef double* rhs = <double*> malloc(M * sizeof(double))
    cdef double* work = <double*> malloc(M * M * sizeof(double))
    cdef double* scale = <double*> malloc(M * sizeof(double))
    cdef double* sol = <double*> malloc(M * sizeof(double))
    cdef double* r = <double*> malloc(M * sizeof(double))
    cdef double* pw = <double*> malloc((p + 1) * d * sizeof(double))
    cdef Py_ssize_t jq, i, a, b
    cdef int deg, Md, ii, jj, kk, status
    cdef double wi, yi, v, tr, lam, rel
    if G == NULL or Gd == NULL or rhs == NULL or work == NULL or scale == NULL or sol == NULL \
            or r == NULL or pw == NULL:
        free(G); free(Gd); free(rhs); free(work); free(scale); free(sol); free(r); free(pw)
        raise MemoryError()
    try:
        with nogil:
            for jq in range(q):
                a = offsets[jq]
                b = offsets[jq + 1]
                if b <= a:
                    continue
                for ii in range(M * M):
                    G[ii] = 0.0
                for ii in range(M):
                    rhs[ii] = 0.0
                for i in range(a, b):
                    wi = w[i]
                    yi = y[i]
                    for jj in range(d):
                        pw[jj] = 1.0
                        for kk in range(1, p + 1):
                            pw[kk * d + jj] = pw[(kk - 1) * d + jj] * disp[i, jj]
                    for ii in range(M):
                        v = 1.0
                        for jj in range(d):
                            v *= pw[exps[ii, jj] * d + jj]
                        r[ii] = v
                    for ii in range(M):
                        v = wi * r[ii]
                        rhs[ii] += v * yi
                        for jj in range(ii, M):
                            G[ii * M + jj] += v * r[jj]
                for ii in range(M):
                    for jj in range(ii):
                        G[ii * M + jj] = G[jj * M + ii]
                for deg in range(p, -1, -1):
                    Md = <int> prefix[deg]
                    if b - a < Md:
                        continue
                    for ii in range(Md):
                        for jj in range(Md):
                            Gd[ii * Md + jj] = G[ii * M + jj]
                    status = _chol_solve(Gd, rhs, work, scale, sol, Md, 0.0)
                    lam = 0.0
                    if status != 0:
                        tr = 0.0
                        for ii in range(Md):
                            tr += Gd[ii * Md + ii]
                        tr /= Md
                        if tr > 0 and ridge_floor > 0:
                            rel = ridge_floor
                            while True:
                                lam = rel * tr
                                status = _chol_solve(Gd, rhs, work, scale, sol, Md, lam)
                                if status == 0:
                                    break
                                rel *= 10.0
                                if rel > MAX_RIDGE * (1 + 1e-9):
                                    break
                    if status == 0:
                        for ii in range(Md):
                            beta[jq, ii] = sol[ii]
                        used[jq] = deg
                        ridge[jq] = lam
                        break
    finally:
        free(G); free(Gd); free(rhs); free(work); free(scale); free(sol); free(r); free(pw)
    return beta_arr, used_arr, ridge_arr
