"""Smoothing kernels, distance metrics and context factors.

All kernels are unnormalized (peak value 1): normalizing constants cancel in
weighted least squares. A context factor maps a pair of context values to a
similarity in [0, 1]; the compound weight is the Euclidean kernel weight
times the product of every factor.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFinite

KERNELS = ("gaussian", "laplacian", "tricube")
METRICS = ("minkowski", "mahalanobis", "haversine")
FACTOR_KINDS = ("rbf_over_metric", "aitchison_aitken", "graph_hop", "indicator")

EARTH_RADIUS_KM = 6371.0088


# --------------------------------------------------------------------------
# smoothing kernels


def kernel_weight(kind: str, u):
    """Unnormalized kernel profile at normalized distance ``u >= 0``."""
    u = np.abs(np.asarray(u, dtype=float))
    if kind == "gaussian":
        out = np.exp(-0.5 * u * u)
    elif kind == "laplacian":
        out = np.exp(-u)
    elif kind == "tricube":
        v = np.clip(1.0 - u * u * u, 0.0, None)
        out = v * v * v
    else:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {KERNELS}")
    return out if out.ndim else float(out)


def has_compact_support(kind: str) -> bool:
    return kind == "tricube"


# --------------------------------------------------------------------------
# distance metrics


@dataclass(frozen=True)
class DistanceMetric:
    """Distance on the fitting coordinates or on a context channel.

    ``kind`` is "minkowski" (``order >= 1``), "mahalanobis" (``precision``
    matrix) or "haversine" (points are (lat, lon) in degrees).
    """

    kind: str = "minkowski"
    order: float = 2.0
    precision: np.ndarray | None = field(default=None, repr=False, compare=False)
    radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if self.kind not in METRICS:
            raise ValueError(f"unknown metric {self.kind!r}; expected one of {METRICS}")
        if self.kind == "minkowski" and self.order < 1:
            raise ValueError("Minkowski order must be >= 1")
        if self.kind == "haversine" and self.radius_km <= 0:
            raise ValueError("radius must be positive")

    def with_precision(self, P: np.ndarray) -> "DistanceMetric":
        return replace(self, precision=np.asarray(P, dtype=float))

    def whitener(self) -> np.ndarray:
        """Matrix ``B`` with ``B @ B.T == precision`` (eigen square root, PSD-clipped)."""
        if self.precision is None:
            raise ValueError("Mahalanobis metric has no precision matrix yet")
        vals, vecs = np.linalg.eigh(self.precision)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "minkowski":
            d["order"] = self.order
        if self.kind == "haversine":
            d["radius_km"] = self.radius_km
        if self.kind == "mahalanobis" and self.precision is not None:
            d["precision"] = self.precision.tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DistanceMetric":
        prec = d.get("precision")
        return cls(
            kind=d["kind"],
            order=float(d.get("order", 2.0)),
            precision=None if prec is None else np.asarray(prec, dtype=float),
            radius_km=float(d.get("radius_km", EARTH_RADIUS_KM)),
        )


def _haversine(a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    lat1, lon1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lat2, lon2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = np.sin(0.5 * (lat2 - lat1)) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(0.5 * (lon2 - lon1)) ** 2
    return 2.0 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def pairwise(metric: DistanceMetric, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distances between every row of ``A`` (q, d) and every row of ``B`` (n, d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dimension {A.shape[1]} vs {B.shape[1]}")
    if metric.kind == "haversine":
        if A.shape[1] != 2:
            raise DimensionMismatch("haversine points must be (lat, lon)")
        return _haversine(A[:, None, :], B[None, :, :], metric.radius_km)
    if metric.kind == "mahalanobis":
        W = metric.whitener()
        A = A @ W
        B = B @ W
        q = 2.0
    else:
        q = metric.order
    diff = np.abs(A[:, None, :] - B[None, :, :])
    if q == 2.0:
        return np.sqrt(np.einsum("qnd,qnd->qn", diff, diff))
    if q == 1.0:
        return diff.sum(axis=2)
    if np.isinf(q):
        return diff.max(axis=2)
    return (diff**q).sum(axis=2) ** (1.0 / q)


def distance(metric: DistanceMetric, a, b) -> float:
    """Distance between two points under ``metric``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DimensionMismatch(f"point shapes {a.shape} and {b.shape} differ")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFinite("non-finite coordinates")
    return float(pairwise(metric, a[None, :], b[None, :])[0, 0])


# --------------------------------------------------------------------------
# context factors


@dataclass(frozen=True)
class ContextFactorSpec:
    """One multiplicative context factor bound to a named context channel.

    kinds
        ``rbf_over_metric``: ``exp(-(d/length_scale)**2 / 2)`` with ``d`` the
        ``metric`` distance between channel values (Haversine for lat/lon).
        ``aitchison_aitken``: 1 for equal labels, ``lam`` otherwise.
        ``graph_hop``: ``exp(-hops/length_scale)``, 0 across components.
        ``indicator``: 1 for equal labels, 0 otherwise.

    The factor value is finally raised to ``temper`` in (0, 1].
    """

    kind: str
    channel: str
    length_scale: float = 1.0
    lam: float = 0.0
    category_count: int = 2
    metric: DistanceMetric | None = None
    temper: float = 1.0

    def __post_init__(self):
        if self.kind not in FACTOR_KINDS:
            raise ValueError(f"unknown context factor {self.kind!r}; expected one of {FACTOR_KINDS}")
        if not (0.0 < self.temper <= 1.0):
            raise ValueError("temper exponent must lie in (0, 1]")
        if self.kind in ("rbf_over_metric", "graph_hop") and not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if self.kind == "aitchison_aitken":
            if not (0.0 <= self.lam < 1.0):
                raise ValueError("Aitchison-Aitken lambda must lie in [0, 1)")
            if self.category_count < 2:
                raise ValueError("category_count must be >= 2")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "channel": self.channel, "temper": self.temper}
        if self.kind in ("rbf_over_metric", "graph_hop"):
            d["length_scale"] = self.length_scale
        if self.kind == "aitchison_aitken":
            d["lam"] = self.lam
            d["category_count"] = self.category_count
        if self.metric is not None:
            d["metric"] = self.metric.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContextFactorSpec":
        m = d.get("metric")
        return cls(
            kind=d["kind"],
            channel=d["channel"],
            length_scale=float(d.get("length_scale", 1.0)),
            lam=float(d.get("lam", 0.0)),
            category_count=int(d.get("category_count", 2)),
            metric=None if m is None else DistanceMetric.from_dict(m),
            temper=float(d.get("temper", 1.0)),
        )


HopLookup = Callable[[Any, Sequence[Any]], np.ndarray]


def factor_values(spec: ContextFactorSpec, query_value, row_values, hops: HopLookup | None = None) -> np.ndarray:
    """Vectorized context factor between one query value and many row values.

    ``hops(query_node, row_nodes)`` must return hop counts (inf when
    unreachable) for ``graph_hop`` factors.
    """
    kind = spec.kind
    if kind in ("indicator", "aitchison_aitken"):
        rv = np.asarray(row_values, dtype=object)
        eq = np.array([v == query_value for v in rv], dtype=bool) if rv.size else np.zeros(0, bool)
        other = 0.0 if kind == "indicator" else spec.lam
        out = np.where(eq, 1.0, other)
    elif kind == "rbf_over_metric":
        metric = spec.metric or DistanceMetric()
        rv = np.asarray(row_values, dtype=float)
        if rv.ndim == 1:
            rv = rv[:, None]
        qv = np.atleast_1d(np.asarray(query_value, dtype=float))
        d = pairwise(metric, qv[None, :], rv)[0]
        r = d / spec.length_scale
        out = np.exp(-0.5 * r * r)
    elif kind == "graph_hop":
        if hops is None:
            raise ValueError("graph_hop factor needs a hop-distance lookup")
        h = np.asarray(hops(query_value, row_values), dtype=float)
        out = np.exp(-h / spec.length_scale)  # exp(-inf) == 0 across components
    else:  # pragma: no cover - guarded in __post_init__
        raise ValueError(kind)
    if spec.temper != 1.0:
        out = out**spec.temper
    return out


def context_factor(spec: ContextFactorSpec, ctx_a, ctx_b, graph_dist: HopLookup | None = None) -> float:
    """Scalar context factor between two context values."""
    if spec.kind == "rbf_over_metric":
        rows = np.atleast_1d(np.asarray(ctx_b, dtype=float))[None, :]
    else:
        rows = np.empty(1, dtype=object)
        rows[0] = ctx_b
    return float(factor_values(spec, ctx_a, rows, graph_dist)[0])


@dataclass(frozen=True)
class CompoundKernelSpec:
    """Euclidean kernel on the fitting coordinates times a list of context factors."""

    kernel: str = "tricube"
    metric: DistanceMetric = field(default_factory=DistanceMetric)
    factors: tuple[ContextFactorSpec, ...] = ()

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; expected one of {KERNELS}")


def compound_weight(
    spec: CompoundKernelSpec,
    query: Mapping[str, Any],
    row: Mapping[str, Any],
    bandwidth: float,
    hops: HopLookup | None = None,
) -> float:
    """Compound weight between two full predictors.

    A predictor is a mapping with key ``"z"`` (fitting coordinates) plus one
    entry per context channel referenced by the factors.
    """
    d = distance(spec.metric, query["z"], row["z"])
    w = kernel_weight(spec.kernel, d / bandwidth)
    for f in spec.factors:
        if w == 0.0:
            break
        w *= context_factor(f, query[f.channel], row[f.channel], hops)
    return float(w)
