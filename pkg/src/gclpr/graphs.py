"""Undirected graphs: hop distances, centralities and diffusion.

Node ids are opaque strings. The graph is immutable after construction;
hop distances are computed lazily by BFS per source and memoized.
"""
from __future__ import annotations

import csv
import threading
import warnings
from collections import deque
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import NoConvergence, UnknownNode
from .kernels import EARTH_RADIUS_KM, _haversine


class Graph:
    """Undirected graph with positive edge weights (default 1)."""

    def __init__(self, nodes: Sequence, edges: Iterable[tuple], *, merge_duplicates: bool = False):
        self.nodes: list[str] = [str(v) for v in nodes]
        self.index: dict[str, int] = {}
        for i, v in enumerate(self.nodes):
            if v in self.index:
                raise ValueError(f"duplicate node id {v!r}")
            self.index[v] = i
        n = len(self.nodes)
        wmap: dict[tuple[int, int], float] = {}
        for e in edges:
            a, b = str(e[0]), str(e[1])
            w = float(e[2]) if len(e) > 2 and e[2] is not None else 1.0
            if a == b:
                raise ValueError(f"self-loop on node {a!r}")
            if not w > 0 or not np.isfinite(w):
                raise ValueError(f"edge ({a}, {b}) has non-positive weight {w}")
            i, j = self._idx(a), self._idx(b)
            key = (min(i, j), max(i, j))
            if key in wmap:
                if not merge_duplicates:
                    raise ValueError(f"duplicate edge ({a}, {b})")
                wmap[key] += w
            else:
                wmap[key] = w
        self._edges = sorted(wmap.items())
        nbrs: list[list[int]] = [[] for _ in range(n)]
        wts: list[list[float]] = [[] for _ in range(n)]
        for (i, j), w in self._edges:
            nbrs[i].append(j)
            wts[i].append(w)
            nbrs[j].append(i)
            wts[j].append(w)
        self.neighbors: list[np.ndarray] = [np.asarray(x, dtype=np.int64) for x in nbrs]
        self.weights: list[np.ndarray] = [np.asarray(x, dtype=float) for x in wts]
        self._hop_cache: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def _idx(self, v) -> int:
        try:
            return self.index[str(v)]
        except KeyError:
            raise UnknownNode(f"node {v!r} not in graph") from None

    @classmethod
    def from_edges(cls, edges: Iterable[tuple], nodes: Sequence | None = None, **kw) -> "Graph":
        edges = [tuple(e) for e in edges]
        if nodes is None:
            seen: dict[str, None] = {}
            for e in edges:
                seen.setdefault(str(e[0]))
                seen.setdefault(str(e[1]))
            nodes = list(seen)
        return cls(nodes, edges, **kw)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def edges(self) -> list[tuple[str, str, float]]:
        return [(self.nodes[i], self.nodes[j], w) for (i, j), w in self._edges]

    def degree(self) -> dict[str, int]:
        return {v: int(len(self.neighbors[i])) for i, v in enumerate(self.nodes)}

    # ---- hop distances -------------------------------------------------

    def hops_from(self, source) -> np.ndarray:
        """Hop counts from ``source`` to every node (inf when unreachable), memoized."""
        s = source if isinstance(source, (int, np.integer)) else self._idx(source)
        row = self._hop_cache.get(s)
        if row is None:
            row = _bfs(self.neighbors, int(s))
            with self._lock:
                row = self._hop_cache.setdefault(int(s), row)
        return row

    def hop_lookup(self, query_node, row_nodes) -> np.ndarray:
        """Hops between ``query_node`` and each entry of ``row_nodes``."""
        row = self.hops_from(query_node)
        idx = np.fromiter((self._idx(v) for v in row_nodes), dtype=np.int64, count=len(row_nodes))
        return row[idx]

    def node_indices(self, ids: Sequence) -> np.ndarray:
        return np.fromiter((self._idx(v) for v in ids), dtype=np.int64, count=len(ids))

    def all_pairs_hops(self) -> np.ndarray:
        return np.vstack([self.hops_from(i) for i in range(self.n_nodes)])

    # ---- operators -------------------------------------------------------

    def transition_matrix(self) -> sparse.csr_matrix:
        """Row-normalized weighted adjacency; isolated rows act as identity."""
        n = self.n_nodes
        rows, cols, vals = [], [], []
        for i in range(n):
            nb = self.neighbors[i]
            if nb.size == 0:
                rows.append(i)
                cols.append(i)
                vals.append(1.0)
                continue
            w = self.weights[i]
            rows.extend([i] * nb.size)
            cols.extend(nb.tolist())
            vals.extend((w / w.sum()).tolist())
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))

    # ---- io --------------------------------------------------------------

    @classmethod
    def read_csv(cls, path, nodes: Sequence | None = None, **kw) -> "Graph":
        """Read an edge list with header ``src,dst[,weight]``."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            if "src" not in fields or "dst" not in fields:
                raise ValueError(f"{path}: edge list needs columns src,dst[,weight]")
            has_w = "weight" in fields
            edges = []
            for rec in reader:
                w = rec["weight"] if has_w and rec["weight"] not in (None, "") else None
                edges.append((rec["src"], rec["dst"], None if w is None else float(w)))
        return cls.from_edges(edges, nodes=nodes, **kw)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "dst", "weight"])
            for a, b, wt in self.edges():
                w.writerow([a, b, repr(float(wt))])

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [[a, b, w] for a, b, w in self.edges()]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Graph":
        return cls(d["nodes"], [tuple(e) for e in d["edges"]])


def _bfs(neighbors: list[np.ndarray], s: int) -> np.ndarray:
    dist = np.full(len(neighbors), np.inf)
    dist[s] = 0.0
    q = deque([s])
    while q:
        v = q.popleft()
        dv = dist[v] + 1.0
        for w in neighbors[v]:
            if dist[w] == np.inf:
                dist[w] = dv
                q.append(w)
    return dist


def bfs_hops(g: Graph, sources: Iterable) -> dict[str, dict[str, float]]:
    """Unweighted shortest-path lengths from each source; ``inf`` when unreachable."""
    out = {}
    for s in sources:
        row = g.hops_from(s)
        out[str(s)] = {v: float(row[i]) for i, v in enumerate(g.nodes)}
    return out


def pagerank(
    g: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200, weighted: bool = True
) -> dict[str, float]:
    """PageRank by power iteration with uniform teleport.

    Dangling (isolated) nodes redistribute their mass uniformly. Emits a
    ``NoConvergence`` warning and returns the last iterate when the L1 change
    is still above ``tol`` after ``max_iter`` steps.
    """
    n = g.n_nodes
    if n == 0:
        raise ValueError("empty graph")
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    rows, cols, vals = [], [], []
    dangling = np.zeros(n, dtype=bool)
    for i in range(n):
        nb = g.neighbors[i]
        if nb.size == 0:
            dangling[i] = True
            continue
        w = g.weights[i] if weighted else np.ones(nb.size)
        rows.extend([i] * nb.size)
        cols.extend(nb.tolist())
        vals.extend((w / w.sum()).tolist())
    PT = sparse.csr_matrix((vals, (cols, rows)), shape=(n, n))
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        x_new = damping * (PT @ x) + (damping * x[dangling].sum() + 1.0 - damping) / n
        x_new /= x_new.sum()
        err = np.abs(x_new - x).sum()
        x = x_new
        if err < tol:
            break
    else:
        warnings.warn(f"pagerank did not converge in {max_iter} iterations", NoConvergence, stacklevel=2)
    return {v: float(x[i]) for i, v in enumerate(g.nodes)}


def betweenness(g: Graph) -> dict[str, float]:
    """Exact unnormalized betweenness (Brandes), each unordered pair counted once."""
    n = g.n_nodes
    nbrs = [nb.tolist() for nb in g.neighbors]
    cb = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0.0] * n
        sigma[s] = 1.0
        dist = [-1] * n
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            dv = dist[v] + 1
            for w in nbrs[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    q.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                cb[w] += delta[w]
    return {v: cb[i] / 2.0 for i, v in enumerate(g.nodes)}


def degree(g: Graph) -> dict[str, int]:
    return g.degree()


def diffuse(
    g: Graph,
    base: Mapping[str, float] | np.ndarray,
    retain: float = 0.7,
    mix: float = 0.3,
    steps: int = 7,
) -> np.ndarray:
    """Iterate ``y <- retain * base + mix * A y`` ``steps`` times from ``y = base``.

    ``A`` is the row-normalized weighted adjacency; an isolated node keeps
    its own value under ``A``. ``base`` is an array in node order or a
    mapping node -> value. Returns an array in node order.
    """
    if abs(retain + mix - 1.0) > 1e-12:
        raise ValueError("retain + mix must equal 1")
    if isinstance(base, Mapping):
        y0 = np.array([float(base[v]) for v in g.nodes])
    else:
        y0 = np.asarray(base, dtype=float)
        if y0.shape != (g.n_nodes,):
            raise ValueError("base must have one value per node")
    A = g.transition_matrix()
    y = y0.copy()
    for _ in range(steps):
        y = retain * y0 + mix * (A @ y)
    return y


def nearest_node(node_latlon: np.ndarray, points_latlon: np.ndarray, radius_km: float = EARTH_RADIUS_KM) -> np.ndarray:
    """Index of the Haversine-nearest node for each (lat, lon) point."""
    P = np.atleast_2d(np.asarray(points_latlon, dtype=float))
    N = np.atleast_2d(np.asarray(node_latlon, dtype=float))
    out = np.empty(P.shape[0], dtype=np.int64)
    step = max(1, 200_000 // max(N.shape[0], 1))
    for s in range(0, P.shape[0], step):
        d = _haversine(P[s : s + step, None, :], N[None, :, :], radius_km)
        out[s : s + step] = np.argmin(d, axis=1)
    return out
