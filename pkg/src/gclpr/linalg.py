"""Dense linear algebra for the local weighted least-squares solves.

Only what the estimator needs: an SPD solve with a ridge fallback ladder,
sample covariance / precision, and column standardization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import Degenerate, NonFinite, Singular

#: Smallest admissible Cholesky pivot of the unit-diagonal (equilibrated) matrix.
PIVOT_TOL = 1e-12
#: Largest relative ridge tried before giving up.
MAX_RIDGE = 1e-2


def ridge_ladder(trace_mean: float, ridge_floor: float = 1e-8, max_ridge: float = MAX_RIDGE):
    """Absolute ridge values tried after a failed plain factorization.

    Starts at ``ridge_floor * trace_mean`` and multiplies by 10 until
    ``max_ridge * trace_mean`` is passed.
    """
    if trace_mean <= 0.0 or ridge_floor <= 0.0:
        return []
    out = [ridge_floor * trace_mean]
    rel = ridge_floor * 10.0
    while rel <= max_ridge * (1 + 1e-9):
        out.append(rel * trace_mean)
        rel *= 10.0
    return out


def _equilibrated_cholesky(A: np.ndarray):
    """Cholesky factor of ``S A S`` with ``S = diag(A)^-1/2``; None on failure."""
    d = np.diag(A).copy()
    scale = np.ones_like(d)
    pos = d > 0
    scale[pos] = 1.0 / np.sqrt(d[pos])
    As = A * scale[:, None] * scale[None, :]
    try:
        L = np.linalg.cholesky(As)
    except np.linalg.LinAlgError:
        return None
    piv = np.diag(L)
    if not np.all(piv * piv > PIVOT_TOL):
        return None
    return L, scale


def _solve_with(factor, b: np.ndarray) -> np.ndarray:
    L, scale = factor
    S = scale if b.ndim == 1 else scale[:, None]
    y = sla.solve_triangular(L, b * S, lower=True, check_finite=False)
    x = sla.solve_triangular(L.T, y, lower=False, check_finite=False)
    return x * S


def solve_spd(
    A: np.ndarray,
    b: np.ndarray,
    ridge_floor: float = 1e-8,
    *,
    return_ridge: bool = False,
):
    """Solve ``A x = b`` for symmetric positive (semi)definite ``A``.

    The matrix is diagonally equilibrated before a Cholesky factorization.
    If that fails (non-PD or a pivot below ``PIVOT_TOL``), ``A + lam*I`` is
    tried with ``lam = ridge_floor * trace(A)/rows``, escalating by 10x up to
    ``1e-2 * trace(A)/rows``.

    Parameters
    ----------
    A : (m, m) array
    b : (m,) or (m, k) array
    ridge_floor : float
        Relative size of the first ridge tried.
    return_ridge : bool
        Also return the absolute ridge used (0.0 if none).

    Raises
    ------
    NonFinite
        ``A`` or ``b`` contains NaN or inf.
    Singular
        No ridge on the ladder produced a usable factorization.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError("b length does not match A")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NonFinite("non-finite entries in linear system")
    scale = max(np.max(np.abs(A)), 1e-300)
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("A is not symmetric")

    factor = _equilibrated_cholesky(A)
    lam = 0.0
    if factor is None:
        m = A.shape[0]
        for lam in ridge_ladder(np.trace(A) / m, ridge_floor):
            factor = _equilibrated_cholesky(A + lam * np.eye(m))
            if factor is not None:
                break
    if factor is None:
        raise Singular("matrix could not be factorized even with ridge")
    x = _solve_with(factor, b)
    return (x, lam) if return_ridge else x


def covariance(X: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance of the columns of ``X`` (always 2-D)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise Degenerate("covariance needs at least two rows")
    return np.atleast_2d(np.cov(X, rowvar=False, ddof=1))


def precision(cov: np.ndarray) -> np.ndarray:
    """Inverse of ``cov`` after a diagonal jitter of 1e-9 * mean(diagonal)."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    m = cov.shape[0]
    mean_diag = float(np.mean(np.diag(cov)))
    jitter = 1e-9 * mean_diag if mean_diag > 0 else 1e-9
    P = solve_spd(cov + jitter * np.eye(m), np.eye(m))
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    scales: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.scales

    def invert(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.scales + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["scales"], dtype=float))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))


def standardize_fit(X: np.ndarray) -> Standardizer:
    """Column means and sample standard deviations; zero-variance columns get scale 1."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    means = X.mean(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    if X.shape[0] > 1:
        scales = X.std(axis=0, ddof=1)
    else:
        scales = np.ones(X.shape[1])
    # exactly constant columns can still show a rounding-level std
    constant = np.ptp(X, axis=0) == 0 if X.shape[0] else np.ones(X.shape[1], bool)
    means = np.where(constant, X[0] if X.shape[0] else 0.0, means)
    scales = np.where((scales > 0) & np.isfinite(scales) & ~constant, scales, 1.0)
    return Standardizer(means, scales)


def standardize_apply(s: Standardizer, X: np.ndarray) -> np.ndarray:
    return s.apply(X)
