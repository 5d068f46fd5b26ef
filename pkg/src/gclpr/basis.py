"""Multi-index polynomial basis over d-dimensional displacements."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np


def basis_size(p: int, d: int) -> int:
    """Number of monomials of total degree at most ``p`` in ``d`` variables."""
    if p < 0 or d < 1:
        raise ValueError("need p >= 0 and d >= 1")
    return comb(p + d, d)


def _degree_block(deg: int, d: int) -> list[tuple[int, ...]]:
    # combinations_with_replacement yields variables in lexicographic order;
    # counting them gives exponent vectors in descending-lex order.
    out = []
    for combo in combinations_with_replacement(range(d), deg):
        e = [0] * d
        for j in combo:
            e[j] += 1
        out.append(tuple(e))
    return out


@dataclass(frozen=True)
class MultiIndexSet:
    """Exponent vectors with ``|alpha| <= degree`` in graded-lex order.

    Index 0 is always the intercept, and the first ``basis_size(q, dim)``
    rows are exactly the degree-``q`` basis for every ``q <= degree``.
    """

    degree: int
    dim: int
    exponents: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, degree: int, dim: int) -> "MultiIndexSet":
        rows = []
        for deg in range(degree + 1):
            rows.extend(_degree_block(deg, dim))
        exps = np.asarray(rows, dtype=np.int64).reshape(len(rows), dim)
        exps.setflags(write=False)
        return cls(degree, dim, exps)

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    def prefix_sizes(self) -> np.ndarray:
        """``basis_size(q, dim)`` for q = 0..degree."""
        return np.array([basis_size(q, self.dim) for q in range(self.degree + 1)], dtype=np.int64)


def eval_row(mi: MultiIndexSet, t) -> np.ndarray:
    """Monomials ``t**alpha`` for every alpha in ``mi``; ``0**0 == 1``."""
    t = np.asarray(t, dtype=float).reshape(1, -1)
    return design_matrix(mi, t)[0]


def design_matrix(mi: MultiIndexSet, T: np.ndarray) -> np.ndarray:
    """Stack ``eval_row`` over the rows of ``T`` (shape (m, dim))."""
    T = np.asarray(T, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[1] != mi.dim:
        raise ValueError(f"displacements have dim {T.shape[1]}, basis expects {mi.dim}")
    m = T.shape[0]
    # powers[k] = T**k by repeated multiplication
    powers = np.empty((mi.degree + 1, m, mi.dim))
    powers[0] = 1.0
    for k in range(1, mi.degree + 1):
        powers[k] = powers[k - 1] * T
    out = np.ones((m, mi.size))
    for j in range(mi.dim):
        out *= powers[mi.exponents[:, j], :, j].T
    return out
