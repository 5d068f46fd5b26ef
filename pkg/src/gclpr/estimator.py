"""Local polynomial regression with compound context kernels.

One engine covers plain LPR (no context factors), GC-LPR (context factors)
and GRC-LPR (context factors plus robustness weights), and also hosts the
k-NN baseline. At each query:

1. take the ``k`` nearest training rows in the fitting metric on the
   standardized coordinates (ties at the k-th distance all included), or,
   in fixed-bandwidth mode, every row inside the kernel support;
2. weight each row by ``kernel(dist / h)``, every context factor and the
   row's robustness weight;
3. solve the weighted least-squares problem for the monomial basis of the
   displacements; the intercept is the prediction.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import _backend
from .basis import MultiIndexSet, basis_size
from .density import RobustnessSpec, conditional_density_weights
from .errors import EmptyTrainingSet, InsufficientSupport
from .graphs import Graph
from .kernels import (
    ContextFactorSpec,
    DistanceMetric,
    KERNELS,
    factor_values,
    has_compact_support,
    kernel_weight,
    pairwise,
)
from .linalg import Standardizer, covariance, precision, standardize_fit

BANDWIDTH_INFLATION = 1.05
DROP_RELATIVE = 1e-14
KNN_EPS = 1e-12

STATUS_OK = 0
STATUS_REDUCED_DEGREE = 1
STATUS_MEAN_FALLBACK = 2
STATUS_ERROR = 3


# --------------------------------------------------------------------------
# data containers


@dataclass
class Dataset:
    """Fitting coordinates, named context channels, response and row ids.

    ``contexts`` maps a channel name to an array with one entry (labels,
    node ids) or one row (vectors, lat/lon pairs) per observation.
    """

    Z: np.ndarray
    y: np.ndarray | None = None
    contexts: dict[str, np.ndarray] = field(default_factory=dict)
    row_ids: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        self.Z = Z
        n = Z.shape[0]
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float).reshape(-1)
            if self.y.shape[0] != n:
                raise ValueError("y length differs from number of rows")
        ctx = {}
        for name, vals in self.contexts.items():
            arr = np.asarray(vals)
            if arr.shape[0] != n:
                raise ValueError(f"context channel {name!r} has {arr.shape[0]} rows, expected {n}")
            ctx[name] = arr
        self.contexts = ctx
        if self.row_ids is None:
            self.row_ids = np.array([str(i) for i in range(n)], dtype=object)
        else:
            self.row_ids = np.asarray(self.row_ids, dtype=object)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            Z=self.Z[idx],
            y=None if self.y is None else self.y[idx],
            contexts={k: v[idx] for k, v in self.contexts.items()},
            row_ids=self.row_ids[idx],
            feature_names=self.feature_names,
        )

    def to_dict(self) -> dict:
        ctx = {}
        for k, v in self.contexts.items():
            if v.dtype.kind in "fiu":
                ctx[k] = {"dtype": "float", "values": v.astype(float).tolist()}
            else:
                ctx[k] = {"dtype": "str", "values": [str(x) for x in v]}
        return {
            "Z": self.Z.tolist(),
            "y": None if self.y is None else self.y.tolist(),
            "contexts": ctx,
            "row_ids": [str(r) for r in self.row_ids],
            "feature_names": None if self.feature_names is None else list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Dataset":
        ctx = {}
        for k, v in d.get("contexts", {}).items():
            if v["dtype"] == "float":
                ctx[k] = np.asarray(v["values"], dtype=float)
            else:
                ctx[k] = np.asarray(v["values"], dtype=object)
        Z = np.asarray(d["Z"], dtype=float)
        fn = d.get("feature_names")
        return cls(
            Z=Z.reshape(len(d["row_ids"]), -1) if Z.size == 0 else Z,
            y=None if d.get("y") is None else np.asarray(d["y"], dtype=float),
            contexts=ctx,
            row_ids=np.asarray(d["row_ids"], dtype=object),
            feature_names=None if fn is None else tuple(fn),
        )


@dataclass(frozen=True)
class Hyperparameters:
    """Everything that defines one model configuration.

    ``bandwidth`` switches to fixed-bandwidth mode (``k`` is then unused):
    every training row inside the kernel support enters the fit. ``model``
    selects the local polynomial engine ("lpr") or the k-NN baseline
    ("knn").
    """

    model: str = "lpr"
    degree: int = 1
    k: int = 30
    kernel: str = "tricube"
    metric: str = "minkowski"
    order: float = 2.0
    factors: tuple[ContextFactorSpec, ...] = ()
    robust: RobustnessSpec | None = None
    ridge_floor: float = 1e-8
    bandwidth: float | None = None
    standardize: bool = True
    response_transform: str = "none"
    knn_weighting: str = "uniform"

    def __post_init__(self):
        if self.model not in ("lpr", "knn"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1 or 2")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.metric not in ("minkowski", "mahalanobis"):
            raise ValueError(f"fitting metric must be minkowski or mahalanobis, got {self.metric!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.response_transform not in ("none", "log1p"):
            raise ValueError(f"unknown response transform {self.response_transform!r}")
        if self.knn_weighting not in ("uniform", "distance"):
            raise ValueError(f"unknown knn weighting {self.knn_weighting!r}")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def variant(self) -> str:
        if self.model == "knn":
            return "knn"
        if self.robust is not None:
            return "grclpr" if self.factors else "rsklpr"
        return "gclpr" if self.factors else "lpr"

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "degree": self.degree,
            "k": self.k,
            "kernel": self.kernel,
            "metric": self.metric,
            "order": self.order,
            "factors": [f.to_dict() for f in self.factors],
            "robust": None if self.robust is None else self.robust.to_dict(),
            "ridge_floor": self.ridge_floor,
            "bandwidth": self.bandwidth,
            "standardize": self.standardize,
            "response_transform": self.response_transform,
            "knn_weighting": self.knn_weighting,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Hyperparameters":
        d = dict(d)
        d["factors"] = tuple(ContextFactorSpec.from_dict(f) for f in d.get("factors", []))
        if d.get("robust") is not None:
            d["robust"] = RobustnessSpec.from_dict(d["robust"])
        return cls(**d)


@dataclass
class QueryFit:
    """Local fit at one query; ``prediction == beta[0]`` on the model scale."""

    prediction: float
    beta: np.ndarray
    weight_sum: float
    n_used: int
    degree_used: int
    bandwidth: float
    status: int


@dataclass
class Prediction:
    """Batch predictions (inverse-transformed) plus per-query diagnostics."""

    y: np.ndarray
    beta: np.ndarray
    weight_sum: np.ndarray
    n_used: np.ndarray
    degree_used: np.ndarray
    bandwidth: np.ndarray
    status: np.ndarray
    errors: dict[int, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.y.shape[0]


# --------------------------------------------------------------------------
# fitted model


def _forward(transform: str, y: np.ndarray) -> np.ndarray:
    if transform == "log1p":
        if np.any(y <= -1):
            raise ValueError("log1p transform needs y > -1")
        return np.log1p(y)
    return y


def _inverse(transform: str, y: np.ndarray) -> np.ndarray:
    return np.expm1(y) if transform == "log1p" else y


class FittedModel:
    """Training snapshot plus everything precomputed for prediction.

    Treat as immutable; predictions depend only on the stored state and the
    queries.
    """

    def __init__(
        self,
        data: Dataset,
        hp: Hyperparameters,
        graph: Graph | None = None,
        *,
        standardizer: Standardizer | None = None,
        precision_matrix: np.ndarray | None = None,
        robust_weights: np.ndarray | None = None,
    ):
        if data.n == 0:
            raise EmptyTrainingSet("no training rows")
        if data.y is None:
            raise ValueError("training data needs a response")
        if not np.all(np.isfinite(data.y)):
            raise ValueError("training response must be finite")
        if hp.k > data.n and hp.bandwidth is None:
            raise ValueError(f"k={hp.k} exceeds the {data.n} training rows")
        self.data = data
        self.hp = hp
        self.graph = graph

        if standardizer is None:
            standardizer = standardize_fit(data.Z) if hp.standardize else Standardizer.identity(data.dim)
        self.standardizer = standardizer
        self.Zs = standardizer.apply(data.Z)

        if hp.metric == "mahalanobis":
            if precision_matrix is None:
                precision_matrix = precision(covariance(self.Zs))
            self.metric = DistanceMetric("mahalanobis", precision=precision_matrix)
            self._whiten = self.metric.whitener()
            self._order = 2.0
        else:
            self.metric = DistanceMetric("minkowski", order=hp.order)
            self._whiten = None
            self._order = hp.order
        self._Zm = self._metric_coords(self.Zs)
        self._diameter = self._dist_rows(self._Zm.min(axis=0)[None, :], self._Zm.max(axis=0)[None, :])[0, 0]

        self.y_fit = _forward(hp.response_transform, data.y)

        for f in hp.factors:
            if f.channel not in data.contexts:
                raise ValueError(f"context channel {f.channel!r} missing from training data")
        self._train_nodes: dict[str, np.ndarray] = {}
        if any(f.kind == "graph_hop" for f in hp.factors):
            if graph is None:
                raise ValueError("graph_hop factor needs a graph")
            for f in hp.factors:
                if f.kind == "graph_hop" and f.channel not in self._train_nodes:
                    self._train_nodes[f.channel] = graph.node_indices(data.contexts[f.channel])

        if hp.robust is not None and hp.model == "lpr":
            if robust_weights is None:
                cols = hp.robust.chart_columns
                chart = self.Zs if cols is None else self.Zs[:, list(cols)]
                robust_weights = conditional_density_weights(chart, self.y_fit, hp.robust)
            self.robust_weights = np.asarray(robust_weights, dtype=float)
        else:
            self.robust_weights = None

        self.basis = MultiIndexSet.build(hp.degree, data.dim)

    # ---- geometry ----------------------------------------------------------

    def _metric_coords(self, Zs: np.ndarray) -> np.ndarray:
        return Zs @ self._whiten if self._whiten is not None else Zs

    def _dist_rows(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        return pairwise(DistanceMetric("minkowski", order=self._order), A, B)

    def _bandwidth_floor(self) -> float:
        return 1e-12 * self._diameter if self._diameter > 0 else 1e-12

    def _neighbors(self, drow: np.ndarray):
        """Candidate rows (sorted by distance, then index) and bandwidth."""
        hp = self.hp
        n = drow.shape[0]
        if hp.bandwidth is not None:
            h = hp.bandwidth
            if has_compact_support(hp.kernel):
                cand = np.nonzero(drow < h)[0]
            else:
                cand = np.arange(n)
        else:
            k = min(hp.k, n)
            dk = np.partition(drow, k - 1)[k - 1]
            cand = np.nonzero(drow <= dk)[0]
            h = max(BANDWIDTH_INFLATION * dk, self._bandwidth_floor())
        order = np.lexsort((cand, drow[cand]))
        return cand[order], h

    # ---- context factors ----------------------------------------------------

    def _factor(self, f: ContextFactorSpec, qval, cand: np.ndarray) -> np.ndarray:
        rows = self.data.contexts[f.channel][cand]
        if f.kind == "graph_hop":
            hops = self.graph.hops_from(qval)[self._train_nodes[f.channel][cand]]
            out = np.exp(-hops / f.length_scale)
            return out**f.temper if f.temper != 1.0 else out
        if f.kind in ("indicator", "aitchison_aitken"):
            eq = rows == qval
            out = np.where(eq, 1.0, 0.0 if f.kind == "indicator" else f.lam)
            return out**f.temper if f.temper != 1.0 else out
        return factor_values(f, qval, rows)

    # ---- prediction ---------------------------------------------------------

    def predict(self, queries: Dataset) -> Prediction:
        """Predict every query row; per-row failures are collected, not raised."""
        if queries.dim != self.data.dim:
            raise ValueError(f"queries have {queries.dim} fitting columns, model expects {self.data.dim}")
        if self.hp.model == "knn":
            return self._predict_knn(queries)
        return self._predict_lpr(queries)

    def _query_distances(self, queries: Dataset):
        n = self.data.n
        Zq = self._metric_coords(self.standardizer.apply(queries.Z))
        step = max(1, 2_000_000 // max(n, 1))
        for s in range(0, queries.n, step):
            yield s, self._dist_rows(Zq[s : s + step], self._Zm)

    def _predict_lpr(self, queries: Dataset) -> Prediction:
        hp = self.hp
        q = queries.n
        M = self.basis.size
        bw = np.zeros(q)
        wsum = np.zeros(q)
        n_used = np.zeros(q, dtype=np.int64)
        mean_fallback = np.full(q, np.nan)
        errors: dict[int, str] = {}
        disp_parts, w_parts, y_parts = [], [], []
        offsets = np.zeros(q + 1, dtype=np.int64)
        Zqs = self.standardizer.apply(queries.Z)
        for s, D in self._query_distances(queries):
            for r in range(D.shape[0]):
                j = s + r
                try:
                    cand, h = self._neighbors(D[r])
                    bw[j] = h
                    if cand.size == 0:
                        raise ValueError("no training rows inside the kernel support")
                    w = kernel_weight(hp.kernel, D[r, cand] / h)
                    for f in hp.factors:
                        w = w * self._factor(f, queries.contexts[f.channel][j], cand)
                    if self.robust_weights is not None:
                        w = w * self.robust_weights[cand]
                    wmax = w.max() if w.size else 0.0
                    keep = w > DROP_RELATIVE * wmax if wmax > 0 else np.zeros(w.shape, bool)
                    if not keep.any():
                        mean_fallback[j] = self.y_fit[cand].mean()
                        offsets[j + 1] = offsets[j]
                        continue
                    rows = cand[keep]
                    disp_parts.append(self.Zs[rows] - Zqs[j])
                    w_parts.append(w[keep])
                    y_parts.append(self.y_fit[rows])
                    wsum[j] = w[keep].sum()
                    n_used[j] = rows.size
                    offsets[j + 1] = offsets[j] + rows.size
                except (KeyError, ValueError) as exc:
                    errors[j] = f"{type(exc).__name__}: {exc}"
                    offsets[j + 1] = offsets[j]
        d = self.data.dim
        disp = np.ascontiguousarray(np.vstack(disp_parts)) if disp_parts else np.zeros((0, d))
        wv = np.ascontiguousarray(np.concatenate(w_parts)) if w_parts else np.zeros(0)
        yv = np.ascontiguousarray(np.concatenate(y_parts)) if y_parts else np.zeros(0)
        beta, used, _ = _backend.local_fit_batch(
            disp, wv, yv, offsets, np.ascontiguousarray(self.basis.exponents), self.basis.prefix_sizes(), hp.ridge_floor
        )
        status = np.where(used == hp.degree, STATUS_OK, STATUS_REDUCED_DEGREE)
        fb = ~np.isnan(mean_fallback)
        beta[fb, 0] = mean_fallback[fb]
        status[fb] = STATUS_MEAN_FALLBACK
        used[fb] = -1
        yhat = beta[:, 0].copy()
        for j in errors:
            status[j] = STATUS_ERROR
            yhat[j] = np.nan
        nbad = int(np.sum((status == STATUS_REDUCED_DEGREE) | (status == STATUS_MEAN_FALLBACK)))
        if nbad:
            warnings.warn(f"{nbad} query fit(s) fell back to a lower degree or mean", InsufficientSupport, stacklevel=3)
        return Prediction(
            y=_inverse(hp.response_transform, yhat),
            beta=beta,
            weight_sum=wsum,
            n_used=n_used,
            degree_used=used,
            bandwidth=bw,
            status=status,
            errors=errors,
        )

    def _predict_knn(self, queries: Dataset) -> Prediction:
        hp = self.hp
        q = queries.n
        k = min(hp.k, self.data.n)
        out = np.zeros(q)
        for s, D in self._query_distances(queries):
            idx = np.argsort(D, axis=1, kind="stable")[:, :k]
            dk = np.take_along_axis(D, idx, axis=1)
            yk = self.y_fit[idx]
            if hp.knn_weighting == "distance":
                w = 1.0 / (dk + KNN_EPS)
                out[s : s + D.shape[0]] = (w * yk).sum(axis=1) / w.sum(axis=1)
            else:
                out[s : s + D.shape[0]] = yk.mean(axis=1)
        return Prediction(
            y=_inverse(hp.response_transform, out),
            beta=out[:, None].copy(),
            weight_sum=np.full(q, float(k)),
            n_used=np.full(q, k, dtype=np.int64),
            degree_used=np.zeros(q, dtype=np.int64),
            bandwidth=np.zeros(q),
            status=np.zeros(q, dtype=np.int64),
        )

    # ---- serialization ------------------------------------------------------

    FORMAT = "gclpr-model"
    VERSION = 1

    def to_dict(self) -> dict:
        return {
            "format": self.FORMAT,
            "version": self.VERSION,
            "hyperparameters": self.hp.to_dict(),
            "data": self.data.to_dict(),
            "graph": None if self.graph is None else self.graph.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "precision": None if self.metric.precision is None else self.metric.precision.tolist(),
            "robust_weights": None if self.robust_weights is None else self.robust_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FittedModel":
        if d.get("format") != cls.FORMAT:
            raise ValueError("not a serialized gclpr model")
        if d.get("version") != cls.VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')!r}")
        prec = d.get("precision")
        rw = d.get("robust_weights")
        return cls(
            Dataset.from_dict(d["data"]),
            Hyperparameters.from_dict(d["hyperparameters"]),
            None if d.get("graph") is None else Graph.from_dict(d["graph"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            precision_matrix=None if prec is None else np.asarray(prec, dtype=float),
            robust_weights=None if rw is None else np.asarray(rw, dtype=float),
        )


# --------------------------------------------------------------------------
# functional surface


def fit(data: Dataset, hp: Hyperparameters, graph: Graph | None = None) -> FittedModel:
    return FittedModel(data, hp, graph)


def predict(model: FittedModel, queries: Dataset) -> Prediction:
    return model.predict(queries)


def _single(query: Dataset | Mapping[str, Any]) -> Dataset:
    if isinstance(query, Dataset):
        return query
    ctx = {}
    for k, v in query.items():
        if k == "z":
            continue
        if isinstance(v, (list, tuple, np.ndarray)):
            ctx[k] = np.asarray([v], dtype=float)
        else:
            ctx[k] = np.empty(1, dtype=object)
            ctx[k][0] = v
    return Dataset(Z=np.atleast_2d(np.asarray(query["z"], dtype=float)), contexts=ctx)


def fit_at(model: FittedModel, query: Dataset | Mapping[str, Any]) -> QueryFit:
    """Local fit at a single query (a one-row Dataset or ``{"z": ..., channel: value}``)."""
    qd = _single(query)
    if qd.n != 1:
        raise ValueError("fit_at takes exactly one query")
    pred = model.predict(qd)
    if pred.errors:
        raise ValueError(pred.errors[0])
    return QueryFit(
        prediction=float(pred.beta[0, 0]),
        beta=pred.beta[0, : basis_size(max(int(pred.degree_used[0]), 0), model.data.dim)].copy(),
        weight_sum=float(pred.weight_sum[0]),
        n_used=int(pred.n_used[0]),
        degree_used=int(pred.degree_used[0]),
        bandwidth=float(pred.bandwidth[0]),
        status=int(pred.status[0]),
    )


def adaptive_bandwidth(model: FittedModel, query) -> float:
    """``1.05 x`` distance to the k-th nearest training row (positive-floored)."""
    if model.data.n == 0:
        raise EmptyTrainingSet("no training rows")
    z = np.atleast_2d(np.asarray(query["z"] if isinstance(query, Mapping) else query, dtype=float))
    zm = model._metric_coords(model.standardizer.apply(z))
    d = model._dist_rows(zm, model._Zm)[0]
    hp = model.hp if model.hp.bandwidth is None else replace(model.hp, bandwidth=None)
    k = min(hp.k, d.shape[0])
    dk = np.partition(d, k - 1)[k - 1]
    return max(BANDWIDTH_INFLATION * dk, model._bandwidth_floor())


def knn_predict(
    data: Dataset,
    queries: Dataset,
    k: int,
    weighting: str = "uniform",
    metric: str = "minkowski",
    order: float = 2.0,
    standardize: bool = True,
) -> np.ndarray:
    """Mean (or inverse-distance weighted mean) of the ``k`` nearest responses."""
    if data.n == 0:
        raise EmptyTrainingSet("no training rows")
    hp = Hyperparameters(model="knn", k=k, knn_weighting=weighting, metric=metric, order=order, standardize=standardize)
    return FittedModel(data, hp).predict(queries).y
