"""Numerical checks of the population-level results behind the estimator.

Everything here works on objects whose expectations are either exact finite
sums (``DiscreteJointDistribution``) or controlled Monte-Carlo averages, so
the identities and rates can be verified to a stated tolerance.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import MultiIndexSet, design_matrix
from .errors import QuadratureUnderresolved, ZeroContextMass
from .estimator import Dataset, Hyperparameters, fit
from .kernels import KERNELS, ContextFactorSpec, HopLookup, factor_values, kernel_weight

# --------------------------------------------------------------------------
# finite joint distributions


@dataclass(frozen=True)
class DiscreteJointDistribution:
    """Finitely supported law of ``(Z, C, Y)``.

    ``z`` holds scalar fitting coordinates, ``c`` context labels (anything
    a context factor understands), ``y`` responses and ``prob`` the atom
    probabilities.
    """

    z: np.ndarray
    c: np.ndarray
    y: np.ndarray
    prob: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        p = np.asarray(self.prob, dtype=float)
        c = np.asarray(self.c, dtype=object) if not isinstance(self.c, np.ndarray) else self.c
        if not (z.shape == y.shape == p.shape and len(c) == p.size) or z.ndim != 1:
            raise ValueError("z, c, y and prob must be 1-D of equal length")
        if not (np.isfinite(z).all() and np.isfinite(y).all()):
            raise ValueError("support points must be finite")
        if (p < 0).any() or abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError("probabilities must be >= 0 and sum to 1")
        for name, v in (("z", z), ("c", c), ("y", y), ("prob", p)):
            object.__setattr__(self, name, v)

    def at(self, z: float) -> np.ndarray:
        """Boolean mask of atoms with ``Z == z``."""
        return self.z == z

    def conditional_mean(self, z: float, c=None) -> float:
        mask = self.at(z)
        if c is not None:
            mask &= np.array([ci == c for ci in self.c], dtype=bool)
        mass = self.prob[mask].sum()
        if mass <= 0:
            raise ZeroContextMass(f"no probability mass at z={z}" + ("" if c is None else f", c={c!r}"))
        return float(self.prob[mask] @ self.y[mask] / mass)


def random_distribution(
    rng: np.random.Generator, atoms: int = 10, z_values: Sequence[float] = (0.0, 1.0), contexts=("a", "b", "c")
) -> DiscreteJointDistribution:
    """Random finite law: atoms spread over a few ``z`` and context values."""
    z = rng.choice(np.asarray(z_values, dtype=float), size=atoms)
    c = np.asarray(contexts, dtype=object)[rng.integers(0, len(contexts), atoms)]
    y = rng.normal(0.0, 2.0, atoms)
    p = rng.random(atoms) + 0.05
    return DiscreteJointDistribution(z, c, y, p / p.sum())


def _conditional_weights(dist, factor, c_star, z, hops):
    mask = dist.at(z)
    pz = dist.prob[mask].sum()
    if pz <= 0:
        raise ZeroContextMass(f"no probability mass at z={z}")
    cond = dist.prob[mask] / pz
    W = factor_values(factor, c_star, dist.c[mask], hops) if factor is not None else np.ones(mask.sum())
    gamma = float(cond @ W)
    if not gamma > 0:
        raise ZeroContextMass(f"E[W | Z={z}] == 0 for context {c_star!r}")
    return cond, W, dist.y[mask], gamma


def m_w_oracle(
    dist: DiscreteJointDistribution,
    factor: ContextFactorSpec | None,
    c_star,
    z: float,
    hops: HopLookup | None = None,
) -> float:
    """Context-smoothed mean ``E[Y W | Z=z] / E[W | Z=z]`` by exact summation.

    ``factor=None`` means ``W == 1``.
    """
    cond, W, y, gamma = _conditional_weights(dist, factor, c_star, z, hops)
    return float((cond * W) @ y / gamma)


def lemma1_residual(
    dist: DiscreteJointDistribution,
    factor: ContextFactorSpec | None,
    c_star,
    z: float,
    a: Sequence[float] | np.ndarray,
    hops: HopLookup | None = None,
) -> float:
    """Largest violation of the weighted squared-loss decomposition over trial values.

    For each ``a`` compares ``E[(Y-a)^2 W | z]`` with
    ``E[(Y-m_W)^2 W | z] + gamma (a - m_W)^2``.
    """
    cond, W, y, gamma = _conditional_weights(dist, factor, c_star, z, hops)
    cw = cond * W
    m = float(cw @ y / gamma)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    lhs = ((y[None, :] - a[:, None]) ** 2) @ cw
    rhs = float(((y - m) ** 2) @ cw) + gamma * (a - m) ** 2
    return float(np.max(np.abs(lhs - rhs))) if a.size else 0.0


def effective_residual_factor(
    dist: DiscreteJointDistribution,
    factor: ContextFactorSpec | None,
    c_star,
    z: float,
    hops: HopLookup | None = None,
) -> float:
    """``E[W^2 (Y - m_W)^2 | z] / E[W | z]^2``."""
    cond, W, y, gamma = _conditional_weights(dist, factor, c_star, z, hops)
    m = float((cond * W) @ y / gamma)
    return float((cond * W * W) @ ((y - m) ** 2) / gamma**2)


# --------------------------------------------------------------------------
# kernel moment matrices

DEFAULT_HALF_WIDTH = {"tricube": 1.0, "gaussian": 8.0, "laplacian": 40.0}
# the laplacian cusp at the origin limits the trapezoid rule to O(step^(d+1));
# beyond d=1 its defaults do not meet the 1e-6 doubling test
DEFAULT_NODES = {
    "tricube": {1: 401, 2: 201, 3: 81},
    "gaussian": {1: 641, 2: 641, 3: 641},
    "laplacian": {1: 64001, 2: 1601, 3: 81},
}


@dataclass(frozen=True)
class KernelMoments:
    kernel: str
    degree: int
    dim: int
    M0: np.ndarray
    Omega0: np.ndarray
    half_width: float
    nodes: int

    def variance_constant(self) -> float:
        """``e1' M0^-1 Omega0 M0^-1 e1``, the kernel part of the leading variance."""
        x = np.linalg.solve(self.M0, np.eye(self.M0.shape[0])[:, 0])
        return float(x @ self.Omega0 @ x)


def _moments_1d_gaussian(mi: MultiIndexSet, t: np.ndarray, wq: np.ndarray):
    # separable kernel: each entry is a product of 1-D trapezoid sums
    k = np.exp(-0.5 * t * t)
    top = 2 * int(mi.exponents.max(initial=0)) if mi.size else 0
    pw = t[None, :] ** np.arange(top + 1)[:, None]
    m1 = pw @ (wq * k)
    m2 = pw @ (wq * k * k)
    E = mi.exponents
    S = E[:, None, :] + E[None, :, :]
    M0 = np.prod(m1[S], axis=-1)
    Om = np.prod(m2[S], axis=-1)
    return M0, Om


def _moments_grid(kernel: str, mi: MultiIndexSet, t: np.ndarray, wq: np.ndarray):
    # full tensor grid, accumulated one slab (fixed first coordinate) at a time
    d = mi.exponents.shape[1]
    M = mi.size
    M0 = np.zeros((M, M))
    Om = np.zeros((M, M))
    if d > 1:
        rest = np.meshgrid(*([t] * (d - 1)), indexing="ij")
        T_rest = np.stack([g.ravel() for g in rest], axis=1)
        W_rest = np.ones(T_rest.shape[0])
        for g in np.meshgrid(*([wq] * (d - 1)), indexing="ij"):
            W_rest *= g.ravel()
        r2_rest = np.einsum("ij,ij->i", T_rest, T_rest)
    else:
        T_rest = np.zeros((1, 0))
        W_rest = np.ones(1)
        r2_rest = np.zeros(1)
    if d == 1:
        k = kernel_weight(kernel, np.abs(t))
        R = design_matrix(mi, t[:, None])
        return R.T @ (R * (wq * k)[:, None]), R.T @ (R * (wq * k * k)[:, None])
    for t0, w0 in zip(t, wq):
        k = kernel_weight(kernel, np.sqrt(t0 * t0 + r2_rest))
        keep = k > 0
        if not keep.any():
            continue
        T = np.column_stack([np.full(int(keep.sum()), t0), T_rest[keep]])
        kw = (w0 * W_rest[keep]) * k[keep]
        R = design_matrix(mi, T)
        M0 += R.T @ (R * kw[:, None])
        Om += R.T @ (R * (kw * k[keep])[:, None])
    return M0, Om


def _moments(kernel, mi, half_width, nodes):
    t = np.linspace(-half_width, half_width, nodes)
    wq = np.full(nodes, t[1] - t[0])
    wq[[0, -1]] *= 0.5
    if kernel == "gaussian":
        M0, Om = _moments_1d_gaussian(mi, t, wq)
    else:
        M0, Om = _moments_grid(kernel, mi, t, wq)
    return 0.5 * (M0 + M0.T), 0.5 * (Om + Om.T)


def kernel_moments(
    kernel: str,
    degree: int,
    dim: int,
    half_width: float | None = None,
    nodes: int | None = None,
    tol: float = 1e-6,
) -> KernelMoments:
    """Tensor-product trapezoid approximation of ``M0`` and ``Omega0``.

    ``M0 = int r(t) r(t)' K(|t|) dt`` and ``Omega0`` the same with ``K**2``,
    with the kernel applied to the Euclidean norm (no normalizing constant).
    The result is accepted only if doubling the node count moves no entry by
    more than ``tol``; otherwise ``QuadratureUnderresolved`` is raised.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    hw = DEFAULT_HALF_WIDTH[kernel] if half_width is None else float(half_width)
    if nodes is None:
        nodes = DEFAULT_NODES[kernel].get(dim, DEFAULT_NODES[kernel][3])
    mi = MultiIndexSet.build(degree, dim)
    M0, Om = _moments(kernel, mi, hw, nodes)
    M0f, Omf = _moments(kernel, mi, hw, 2 * nodes - 1)
    change = max(np.max(np.abs(M0f - M0)), np.max(np.abs(Omf - Om)))
    if not change <= tol:
        raise QuadratureUnderresolved(f"doubling quadrature nodes moved an entry by {change:.3g} > {tol:g}")
    return KernelMoments(kernel, degree, dim, M0f, Omf, hw, 2 * nodes - 1)


def radial_moment_oracle(kernel: str, alpha: Sequence[int], power: int = 1) -> float:
    """``int t^alpha K(|t|)^power dt`` over R^d via the polar decomposition.

    Independent of the grid quadrature above: a 1-D radial integral (by
    ``scipy.integrate.quad``) times the closed-form sphere moment.
    """
    from scipy.integrate import quad
    from scipy.special import gammaln

    alpha = np.asarray(alpha, dtype=int)
    if (alpha % 2).any():
        return 0.0
    d = alpha.size
    s = int(alpha.sum())
    sphere = 2.0 * math.exp(sum(gammaln((a + 1) / 2.0) for a in alpha) - gammaln((s + d) / 2.0))
    upper = 1.0 if kernel == "tricube" else np.inf
    radial, _ = quad(lambda r: float(kernel_weight(kernel, r)) ** power * r ** (s + d - 1), 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
    return sphere * radial


# --------------------------------------------------------------------------
# Monte-Carlo rate experiments

Sampler = Callable[[np.random.Generator, int], "tuple[Dataset, np.ndarray]"]


def _rep_rngs(seed: int, reps: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]


def _parallel_map(fn, items, threads: int):
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads or None) as ex:
        return list(ex.map(fn, items))


def fixed_bandwidth_estimate(
    data: Dataset, query: np.ndarray, degree: int, h: float, kernel: str = "tricube", factors=(), query_contexts=None
) -> float:
    """Intercept of the fixed-bandwidth local fit at ``query`` on raw coordinates."""
    hp = Hyperparameters(degree=degree, kernel=kernel, bandwidth=h, standardize=False, factors=tuple(factors))
    q = Dataset(np.atleast_2d(np.asarray(query, dtype=float)), contexts=query_contexts or {})
    return float(fit(data, hp).predict(q).y[0])


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    if not np.all(y > 0) or np.unique(x).size < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class RateResult:
    """Fitted log-log slope with a bootstrap band over replications."""

    x: np.ndarray
    value: np.ndarray
    se: np.ndarray
    slope: float
    ci: tuple[float, float]
    replications: int

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "value": [float(v) for v in self.value],
            "se": [float(v) for v in self.se],
            "slope": self.slope,
            "ci": [float(self.ci[0]), float(self.ci[1])],
            "replications": self.replications,
        }


def _bootstrap_ci(samples: np.ndarray, x: np.ndarray, stat, seed: int, B: int = 400) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    R = samples.shape[0]
    slopes = np.empty(B)
    for b in range(B):
        idx = rng.integers(0, R, R)
        slopes[b] = _loglog_slope(x, stat(samples[idx]))
    lo, hi = np.quantile(slopes, [0.025, 0.975])
    return float(lo), float(hi)


def bias_rate_experiment(
    sampler: Sampler,
    truth: Callable[[float], float],
    degree: int,
    h_grid: Sequence[float],
    n: int = 4000,
    replications: int = 200,
    query: float = 0.5,
    kernel: str = "tricube",
    seed: int = 0,
    threads: int = 1,
) -> RateResult:
    """Monte-Carlo bias ``|E m_hat(query) - m(query)|`` per bandwidth and its log-log slope.

    Every replication draws one sample and reuses it for all bandwidths, so
    the bias curve is smooth in ``h``. With a noiseless sampler the
    replication average estimates ``E[m_hat]`` directly, since the estimator
    is linear in the responses.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    target = float(truth(query))
    q = np.array([[query]])

    def one(rng):
        data, _ = sampler(rng, n)
        return [fixed_bandwidth_estimate(data, q, degree, h, kernel) for h in h_grid]

    est = np.asarray(_parallel_map(one, _rep_rngs(seed, replications), threads))
    err = est - target
    bias = np.abs(err.mean(axis=0))
    se = err.std(axis=0, ddof=1) / math.sqrt(replications)
    if np.all(bias > 0):
        slope = _loglog_slope(h_grid, bias)
        ci = _bootstrap_ci(err, h_grid, lambda e: np.abs(e.mean(axis=0)), seed + 1)
    else:
        slope, ci = float("nan"), (float("nan"), float("nan"))
    return RateResult(h_grid, bias, se, slope, ci, replications)


def variance_scaling_experiment(
    sampler: Sampler,
    degree: int,
    h: float,
    n_grid: Sequence[int],
    replications: int = 200,
    query: float = 0.5,
    kernel: str = "tricube",
    factors: Sequence[ContextFactorSpec] = (),
    query_contexts: dict | None = None,
    seed: int = 0,
    threads: int = 1,
) -> RateResult:
    """Monte-Carlo variance of ``m_hat(query)`` per sample size and slope of log-Var on log(n h^d)."""
    n_grid = np.asarray(n_grid, dtype=int)
    q = np.array([[query]])

    def one(rng):
        out = []
        for n in n_grid:
            data, _ = sampler(rng, int(n))
            out.append(fixed_bandwidth_estimate(data, q, degree, h, kernel, factors, query_contexts))
        return out

    est = np.asarray(_parallel_map(one, _rep_rngs(seed, replications), threads))
    var = est.var(axis=0, ddof=1)
    # standard error of a sample variance under normality
    se = var * math.sqrt(2.0 / (replications - 1))
    x = n_grid * h ** q.shape[1]
    if np.all(var > 0):
        slope = _loglog_slope(x, var)
        ci = _bootstrap_ci(est, x, lambda e: e.var(axis=0, ddof=1), seed + 1)
    else:
        slope, ci = float("nan"), (float("nan"), float("nan"))
    return RateResult(x.astype(float), var, se, slope, ci, replications)
