"""Seeded synthetic scenarios.

Desk-scale stand-ins for the kinds of data the method targets: smooth 1-D
curves, piecewise functions over categorical strata, contaminated data and
a node signal diffused over a random geometric graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DisconnectedRequested
from .estimator import Dataset
from .graphs import Graph, betweenness, degree, diffuse, pagerank
from .linalg import standardize_fit

SCENARIOS = ("sine1d", "piecewise_context", "contaminated", "graph_diffusion")

# bounding box used to place graph nodes on the globe (roughly the contiguous US)
LAT_RANGE = (25.0, 49.0)
LON_RANGE = (-125.0, -67.0)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "sine1d"
    n: int = 500
    seed: int = 0
    sigma: float = 0.1
    low: float = 0.0
    high: float = 1.0
    # piecewise_context: m_c(z) = means[c] + slopes[c] * z + amplitude * sin(2 pi z)
    strata: int = 3
    means: tuple[float, ...] | None = None
    slopes: tuple[float, ...] | None = None
    amplitude: float = 0.0
    # contaminated
    base_kind: str = "sine1d"
    outlier_fraction: float = 0.1
    outlier_scale: float = 8.0
    # graph_diffusion
    n_nodes: int = 300
    radius: float | None = None
    require_connected: bool = True
    noise: float = 0.1
    retain: float = 0.7
    steps: int = 7
    base_override: tuple[float, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.outlier_fraction < 0.5:
            raise ValueError("outlier_fraction must lie in [0, 0.5)")
        if self.base_kind not in ("sine1d", "piecewise_context"):
            raise ValueError("contaminated base must be sine1d or piecewise_context")


@dataclass
class Scenario:
    """Generated data plus noiseless truth at every row."""

    spec: ScenarioSpec
    data: Dataset
    truth: np.ndarray
    graph: Graph | None = None
    outliers: np.ndarray | None = None


def generate(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sine1d":
        return _sine1d(spec, rng)
    if spec.kind == "piecewise_context":
        return _piecewise(spec, rng)
    if spec.kind == "contaminated":
        return _contaminated(spec, rng)
    return _graph_diffusion(spec, rng)


def _sine1d(spec: ScenarioSpec, rng) -> Scenario:
    z = rng.uniform(spec.low, spec.high, spec.n)
    m = np.sin(2 * np.pi * z)
    y = m + spec.sigma * rng.standard_normal(spec.n)
    return Scenario(spec, Dataset(z[:, None], y, feature_names=("z",)), m)


def stratum_params(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    S = spec.strata
    means = np.asarray(spec.means if spec.means is not None else 3.0 * np.arange(S), dtype=float)
    slopes = np.asarray(spec.slopes if spec.slopes is not None else np.zeros(S), dtype=float)
    if means.shape != (S,) or slopes.shape != (S,):
        raise ValueError("means and slopes need one entry per stratum")
    return means, slopes


def _piecewise(spec: ScenarioSpec, rng) -> Scenario:
    means, slopes = stratum_params(spec)
    z = rng.uniform(spec.low, spec.high, spec.n)
    c = rng.integers(0, spec.strata, spec.n)
    m = means[c] + slopes[c] * z + spec.amplitude * np.sin(2 * np.pi * z)
    y = m + spec.sigma * rng.standard_normal(spec.n)
    labels = np.array([f"s{j}" for j in c], dtype=object)
    return Scenario(spec, Dataset(z[:, None], y, {"stratum": labels}, feature_names=("z",)), m)


def _contaminated(spec: ScenarioSpec, rng) -> Scenario:
    base = _sine1d(spec, rng) if spec.base_kind == "sine1d" else _piecewise(spec, rng)
    y = base.data.y.copy()
    n_out = int(round(spec.outlier_fraction * spec.n))
    idx = np.sort(rng.choice(spec.n, size=n_out, replace=False))
    sign = rng.choice([-1.0, 1.0], size=n_out)
    scale = spec.sigma if spec.sigma > 0 else 1.0
    y[idx] += sign * spec.outlier_scale * scale
    mask = np.zeros(spec.n, dtype=bool)
    mask[idx] = True
    data = Dataset(base.data.Z, y, base.data.contexts, feature_names=base.data.feature_names)
    return Scenario(spec, data, base.truth, outliers=mask)


def random_geometric_graph(n: int, radius: float, rng) -> tuple[Graph, np.ndarray]:
    """Nodes uniform in the unit square, joined when closer than ``radius``.

    Edge weights are log-uniform on [1, 100]. Returns the graph and the
    (n, 2) unit-square positions.
    """
    pos = rng.random((n, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    close = np.einsum("ijk,ijk->ij", diff, diff) < radius * radius
    ii, jj = np.nonzero(np.triu(close, k=1))
    w = np.exp(rng.uniform(0.0, np.log(100.0), ii.size))
    names = [f"n{i:04d}" for i in range(n)]
    g = Graph(names, [(names[a], names[b], float(wt)) for a, b, wt in zip(ii, jj, w)])
    return g, pos


def _standardized(values: dict, g: Graph) -> np.ndarray:
    v = np.array([values[x] for x in g.nodes], dtype=float)
    return standardize_fit(v[:, None]).apply(v[:, None])[:, 0]


def _graph_diffusion(spec: ScenarioSpec, rng) -> Scenario:
    n = spec.n_nodes
    radius = spec.radius if spec.radius is not None else float(np.sqrt(2.0 * np.log(n) / (np.pi * n)))
    for _ in range(50):
        g, pos = random_geometric_graph(n, radius, rng)
        if not spec.require_connected or np.all(np.isfinite(g.hops_from(0))):
            break
    else:
        raise DisconnectedRequested("no connected graph drawn in 50 attempts")

    pr = _standardized(pagerank(g), g)
    bw = _standardized(betweenness(g), g)
    dg = _standardized(degree(g), g)
    xi = rng.standard_normal(n)
    if spec.base_override is not None:
        base = np.asarray(spec.base_override, dtype=float)
    else:
        base = 0.3 * pr + 0.5 * bw + 0.2 * dg + spec.noise * xi
    y = diffuse(g, base, retain=spec.retain, mix=1.0 - spec.retain, steps=spec.steps)
    y = y + (0.1 - y.min())

    lat = LAT_RANGE[0] + (LAT_RANGE[1] - LAT_RANGE[0]) * pos[:, 1]
    lon = LON_RANGE[0] + (LON_RANGE[1] - LON_RANGE[0]) * pos[:, 0]
    Z = np.column_stack([pr, bw, dg, lat, lon])
    nodes = np.asarray(g.nodes, dtype=object)
    data = Dataset(
        Z,
        y,
        {"node": nodes, "latlon": np.column_stack([lat, lon])},
        row_ids=nodes.copy(),
        feature_names=("pagerank", "betweenness", "degree", "latitude", "longitude"),
    )
    return Scenario(spec, data, y.copy(), graph=g)


# --------------------------------------------------------------------------
# samplers for Monte-Carlo studies: callables (rng, n) -> (Dataset, truth)

Sampler = Callable[[np.random.Generator, int], tuple[Dataset, np.ndarray]]


def sine_sampler(sigma: float = 0.1, low: float = 0.0, high: float = 1.0) -> Sampler:
    def draw(rng, n):
        z = rng.uniform(low, high, n)
        m = np.sin(2 * np.pi * z)
        return Dataset(z[:, None], m + sigma * rng.standard_normal(n)), m

    return draw


def linear_sampler(intercept: float = 1.0, slope: float = 2.0, sigma: float = 0.0) -> Sampler:
    def draw(rng, n):
        z = rng.uniform(0.0, 1.0, n)
        m = intercept + slope * z
        return Dataset(z[:, None], m + sigma * rng.standard_normal(n)), m

    return draw


def two_context_sampler(means=(0.0, 1.0), sigma: float = 0.0, p_first: float = 0.5) -> Sampler:
    """Context label drawn independently of ``z``; ``m_c(z) = means[c]``."""

    def draw(rng, n):
        z = rng.uniform(0.0, 1.0, n)
        c = (rng.random(n) >= p_first).astype(int)
        m = np.asarray(means, dtype=float)[c]
        labels = np.array(["a", "b"], dtype=object)[c]
        return Dataset(z[:, None], m + sigma * rng.standard_normal(n), {"ctx": labels}), m

    return draw


def lag_features(series: np.ndarray, lags: int = 4, node_ids=None) -> Dataset:
    """Flatten a (T, N) panel into node-time rows with ``lags`` lagged predictors.

    Row for node ``v`` at time ``t >= lags`` has ``Z = (x[t-lags], ..., x[t-1])``
    and ``y = x[t]``; contexts carry the node id and the time index, rows are
    ordered by time then node.
    """
    X = np.asarray(series, dtype=float)
    T, N = X.shape
    if T <= lags:
        raise ValueError("series shorter than the number of lags")
    nodes = np.asarray(node_ids if node_ids is not None else [str(i) for i in range(N)], dtype=object)
    Z, y, node, time = [], [], [], []
    for t in range(lags, T):
        Z.append(X[t - lags : t].T)
        y.append(X[t])
        node.append(nodes)
        time.append(np.full(N, t))
    names = tuple(f"lag_{lags - j}" for j in range(lags))
    return Dataset(
        np.vstack(Z),
        np.concatenate(y),
        {"node": np.concatenate(node), "time": np.concatenate(time).astype(float)},
        row_ids=np.array([f"{v}@{t}" for t_, vs in zip(time, node) for v, t in zip(vs, t_)], dtype=object),
        feature_names=names,
    )
