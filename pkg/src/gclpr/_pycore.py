"""Pure-numpy implementation of the batched local least-squares kernel.

Mirrors ``_core.pyx`` exactly in algorithm: per query, try degrees
``p, p-1, ..., 0``; for each, build the weighted Gram matrix of the
monomial basis and solve it with the equilibrated Cholesky + ridge ladder
from :mod:`gclpr.linalg`.
"""
from __future__ import annotations

import numpy as np

from .linalg import _equilibrated_cholesky, _solve_with, ridge_ladder

NAME = "python"


def _solve(G: np.ndarray, rhs: np.ndarray, ridge_floor: float):
    factor = _equilibrated_cholesky(G)
    lam = 0.0
    if factor is None:
        m = G.shape[0]
        for lam in ridge_ladder(np.trace(G) / m, ridge_floor):
            factor = _equilibrated_cholesky(G + lam * np.eye(m))
            if factor is not None:
                break
    if factor is None:
        return None, 0.0
    return _solve_with(factor, rhs), lam


def _monomials(disp: np.ndarray, exps: np.ndarray, degree: int) -> np.ndarray:
    m, d = disp.shape
    powers = np.empty((degree + 1, m, d))
    powers[0] = 1.0
    for k in range(1, degree + 1):
        powers[k] = powers[k - 1] * disp
    out = np.ones((m, exps.shape[0]))
    for j in range(d):
        out *= powers[exps[:, j], :, j].T
    return out


def local_fit_batch(disp, w, y, offsets, exps, prefix, ridge_floor):
    """Fit one local polynomial per query.

    Parameters
    ----------
    disp : (N, d) float64
        Displacements ``Z_i - z`` of every supporting row, queries concatenated.
    w, y : (N,) float64
        Positive weights and responses of those rows.
    offsets : (q + 1,) int64
        Query ``j`` owns rows ``offsets[j]:offsets[j+1]``.
    exps : (M, d) int64
        Graded-lex exponents of the full-degree basis.
    prefix : (p + 1,) int64
        Basis size for each degree ``0..p``.
    ridge_floor : float

    Returns
    -------
    beta : (q, M) float64, zero beyond the degree actually used
    used_degree : (q,) int64, -1 when no degree could be fitted
    ridge : (q,) float64, absolute ridge applied (0 if none)
    """
    disp = np.asarray(disp, dtype=float)
    q = offsets.shape[0] - 1
    M = exps.shape[0]
    p = prefix.shape[0] - 1
    beta = np.zeros((q, M))
    used = np.full(q, -1, dtype=np.int64)
    ridge = np.zeros(q)
    R_all = _monomials(disp, exps, p) if disp.shape[0] else np.zeros((0, M))
    for j in range(q):
        a, b = offsets[j], offsets[j + 1]
        m = b - a
        if m == 0:
            continue
        R = R_all[a:b]
        wj = w[a:b]
        yj = y[a:b]
        Rw = R * wj[:, None]
        G_full = Rw.T @ R
        rhs_full = Rw.T @ yj
        for deg in range(p, -1, -1):
            Md = int(prefix[deg])
            if m < Md:
                continue
            sol, lam = _solve(G_full[:Md, :Md], rhs_full[:Md], ridge_floor)
            if sol is None:
                continue
            beta[j, :Md] = sol
            used[j] = deg
            ridge[j] = lam
            break
    return beta, used, ridge
