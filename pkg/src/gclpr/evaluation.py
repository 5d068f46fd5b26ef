"""Metrics, split protocols and cross-validated grid search.

Two outer protocols are supported: repeated random hold-out with inner
k-fold CV, and rolling-origin evaluation with inner time-series CV. Every
split records which rows were touched by fitting and tuning so that leakage
can be asserted, not just assumed.
"""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.model_selection import KFold, ShuffleSplit, TimeSeriesSplit

from .errors import AllFitsFailed, GCLPRError, InsufficientSupport, TooFewRows
from .estimator import Dataset, Hyperparameters, fit
from .graphs import Graph

SPLIT_KINDS = ("repeated_holdout", "kfold", "rolling_origin")
OBJECTIVES = ("rmse", "mae")


# --------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    r2: float  # nan when the truth is constant

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "r2": None if math.isnan(self.r2) else self.r2}


def metrics(y_true, y_pred) -> Metrics:
    """RMSE, MAE and R^2 (about the mean of ``y_true``)."""
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape or yt.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D of equal length")
    if yt.size < 2:
        raise TooFewRows("metrics need at least 2 rows")
    e = yt - yp
    sse = float(e @ e)
    dev = yt - yt.mean()
    sst = float(dev @ dev)
    r2 = 1.0 - sse / sst if sst > 0 else float("nan")
    return Metrics(math.sqrt(sse / yt.size), float(np.abs(e).mean()), r2)


# --------------------------------------------------------------------------
# split plans


@dataclass(frozen=True)
class SplitPlan:
    """Outer evaluation protocol.

    ``repeated_holdout`` draws ``reps`` independent ``test_fraction`` hold-outs
    and tunes by ``inner_folds``-fold CV on each training part. ``kfold`` is a
    plain shuffled partition. ``rolling_origin`` makes ``outer_splits``
    expanding-window splits over the ordered time values, tuned by
    ``inner_folds`` time-series folds inside each window.
    """

    kind: str = "repeated_holdout"
    reps: int = 5
    test_fraction: float = 0.2
    folds: int = 4
    outer_splits: int = 5
    inner_folds: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.kind!r}; expected one of {SPLIT_KINDS}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if min(self.reps, self.folds, self.outer_splits, self.inner_folds) < 1:
            raise ValueError("split counts must be positive")
        if self.kind == "kfold" and self.folds < 2:
            raise ValueError("kfold needs at least 2 folds")

    @property
    def chronological(self) -> bool:
        return self.kind == "rolling_origin"

    def inner(self, seed: int) -> "SplitPlan":
        """Plan used for tuning inside one outer training part."""
        if self.chronological:
            return SplitPlan("rolling_origin", outer_splits=self.inner_folds, seed=seed)
        return SplitPlan("kfold", folds=self.inner_folds, seed=seed)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "reps": self.reps,
            "test_fraction": self.test_fraction,
            "folds": self.folds,
            "outer_splits": self.outer_splits,
            "inner_folds": self.inner_folds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitPlan":
        return cls(**dict(d))


Split = tuple[np.ndarray, np.ndarray]


def make_splits(n_or_times, plan: SplitPlan) -> list[Split]:
    """Train/test index pairs for ``plan``.

    ``n_or_times`` is a row count or, for chronological plans, an array of
    per-row time stamps; rows sharing a time stamp always land on the same
    side. Without time stamps row order is the timeline.
    """
    if np.ndim(n_or_times) == 0:
        n = int(n_or_times)
        times = np.arange(n, dtype=float)
    else:
        times = np.asarray(n_or_times, dtype=float)
        n = times.size
    if plan.kind == "repeated_holdout":
        if n < 2:
            raise TooFewRows(f"hold-out needs at least 2 rows, got {n}")
        ss = ShuffleSplit(n_splits=plan.reps, test_size=plan.test_fraction, random_state=plan.seed)
        return [(np.sort(tr), np.sort(te)) for tr, te in ss.split(np.zeros(n))]
    if plan.kind == "kfold":
        if n < plan.folds:
            raise TooFewRows(f"{plan.folds}-fold CV needs at least {plan.folds} rows, got {n}")
        kf = KFold(n_splits=plan.folds, shuffle=True, random_state=plan.seed)
        return [(np.sort(tr), np.sort(te)) for tr, te in kf.split(np.zeros(n))]
    # rolling origin over distinct time stamps
    uniq, inv = np.unique(times, return_inverse=True)
    if uniq.size < plan.outer_splits + 1:
        raise TooFewRows(f"rolling origin with {plan.outer_splits} splits needs more than {plan.outer_splits} time points")
    out = []
    for tr_t, te_t in TimeSeriesSplit(n_splits=plan.outer_splits).split(uniq):
        out.append((np.nonzero(np.isin(inv, tr_t))[0], np.nonzero(np.isin(inv, te_t))[0]))
    return out


def check_split(train: np.ndarray, test: np.ndarray, times: np.ndarray | None = None) -> None:
    """Raise ``AssertionError`` on overlap or, given times, on broken chronology."""
    if np.intersect1d(train, test).size:
        raise AssertionError("train and test rows overlap")
    if times is not None and train.size and test.size and not times[train].max() < times[test].min():
        raise AssertionError("a test time precedes the end of its training window")


# --------------------------------------------------------------------------
# grid search


def expand_grid(base: Hyperparameters | Mapping, grid: Mapping[str, Sequence]) -> list[Hyperparameters]:
    """Cartesian product of ``grid`` applied to ``base``.

    Keys are hyperparameter names or dotted paths into the serialized form,
    e.g. ``"factors.0.length_scale"`` or ``"robust.k_r"``. Keys vary in sorted
    order with the last key fastest; values keep their given order.
    """
    base_d = base.to_dict() if isinstance(base, Hyperparameters) else dict(base)
    keys = sorted(grid)
    out = []
    for combo in itertools.product(*(list(grid[k]) for k in keys)):
        d = _deep_copy(base_d)
        for k, v in zip(keys, combo):
            _set_path(d, k, v)
        out.append(Hyperparameters.from_dict(d))
    return out


def _deep_copy(d):
    if isinstance(d, dict):
        return {k: _deep_copy(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_deep_copy(v) for v in d]
    return d


def _set_path(d: dict, path: str, value) -> None:
    parts = path.split(".")
    cur: Any = d
    for p in parts[:-1]:
        cur = cur[int(p)] if isinstance(cur, list) else cur[p]
        if cur is None:
            raise KeyError(f"grid key {path!r} points into an unset section")
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        if last not in cur:
            raise KeyError(f"unknown grid key {path!r}")
        cur[last] = value


def _objective(name: str, y_true, y_pred) -> float:
    m = metrics(y_true, y_pred)
    return m.rmse if name == "rmse" else m.mae


def _fold_score(data: Dataset, hp: Hyperparameters, train, test, graph, objective) -> float:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InsufficientSupport)
            pred = fit(data.subset(train), hp, graph).predict(data.subset(test))
    except (GCLPRError, ValueError, KeyError, np.linalg.LinAlgError):
        return float("inf")
    if not np.all(np.isfinite(pred.y)):
        return float("inf")
    return _objective(objective, data.y[test], pred.y)


@dataclass
class GridResult:
    best: Hyperparameters
    best_index: int
    table: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best_index": self.best_index, "best": self.best.to_dict(), "table": self.table}


def grid_search(
    data: Dataset,
    grid: Sequence[Hyperparameters],
    folds: Sequence[Split],
    graph: Graph | None = None,
    objective: str = "rmse",
    threads: int = 1,
) -> GridResult:
    """Score every grid point by its mean fold objective and pick the best.

    ``folds`` index into ``data``. A fold whose fit raises or yields a
    non-finite prediction scores ``inf``. Ties in the mean go to the smaller
    ``k``, then the smaller degree, then the earlier grid position.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    tasks = [(g, f) for g in range(len(grid)) for f in range(len(folds))]

    def run(task):
        g, f = task
        tr, te = folds[f]
        return _fold_score(data, grid[g], tr, te, graph, objective)

    if threads == 1:
        scores = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as ex:
            scores = list(ex.map(run, tasks))
    S = np.asarray(scores, dtype=float).reshape(len(grid), len(folds))
    table = []
    for g, hp in enumerate(grid):
        row = S[g]
        mean = math.fsum(row) / row.size if np.all(np.isfinite(row)) else float("inf")
        table.append({"index": g, "hyperparameters": hp.to_dict(), "fold_scores": [float(v) for v in row], "mean": mean})
    finite = [t for t in table if math.isfinite(t["mean"])]
    if not finite:
        raise AllFitsFailed(f"all {len(grid)} grid points failed on at least one fold")
    best = min(finite, key=lambda t: (t["mean"], grid[t["index"]].k, grid[t["index"]].degree, t["index"]))
    return GridResult(grid[best["index"]], best["index"], table)


# --------------------------------------------------------------------------
# experiments


def _summary(values: Sequence[float]) -> dict:
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "std": None}
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


@dataclass
class ExperimentResult:
    report: dict
    predictions: list[list[dict]]
    cv_tables: list[dict]


def run_experiment(
    data: Dataset,
    grid: Sequence[Hyperparameters],
    plan: SplitPlan,
    graph: Graph | None = None,
    objective: str = "rmse",
    threads: int = 1,
    time_channel: str | None = None,
    truth: np.ndarray | None = None,
) -> ExperimentResult:
    """Outer evaluation with inner-CV tuning on each training part.

    Returns the metrics report (per split and mean/std), test predictions
    per split and the CV table of every split. With ``truth`` given, test
    metrics are also computed against it (``clean`` block in each split).
    """
    times = None
    if plan.chronological:
        times = np.asarray(data.contexts[time_channel], dtype=float) if time_channel else np.arange(data.n, dtype=float)
    outer = make_splits(times if times is not None else data.n, plan)
    splits, preds, tables = [], [], []
    for s, (train, test) in enumerate(outer):
        check_split(train, test, times)
        inner_plan = plan.inner(seed=plan.seed + 1 + s)
        inner = make_splits(times[train] if times is not None else train.size, inner_plan)
        # inner folds index into the training part only
        touched = np.unique(np.concatenate([train[np.concatenate([a, b])] for a, b in inner]))
        if np.intersect1d(touched, test).size or not np.isin(touched, train).all():
            raise AssertionError("tuning touched rows outside the training part")
        for a, b in inner:
            check_split(train[a], train[b], times)
        train_data = data.subset(train)
        gs = grid_search(train_data, grid, inner, graph, objective, threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InsufficientSupport)
            pred = fit(train_data, gs.best, graph).predict(data.subset(test))
        yt = data.y[test]
        m = metrics(yt, pred.y)
        entry = {
            "split": s,
            "n_train": int(train.size),
            "n_test": int(test.size),
            **m.to_dict(),
            "cv_score": gs.table[gs.best_index]["mean"],
            "selected": gs.best.to_dict(),
            "leakage_check": "passed",
        }
        if truth is not None:
            entry["clean"] = metrics(np.asarray(truth)[test], pred.y).to_dict()
        splits.append(entry)
        rid = data.row_ids[test]
        preds.append(
            [
                {"row_id": str(r), "y_true": float(a), "y_pred": float(b), "abs_error": float(abs(a - b))}
                for r, a, b in zip(rid, yt, pred.y)
            ]
        )
        tables.append({"split": s, **gs.to_dict()})
    summary = {k: _summary([e[k] for e in splits]) for k in ("rmse", "mae", "r2")}
    if truth is not None:
        summary["clean"] = {k: _summary([e["clean"][k] for e in splits]) for k in ("rmse", "mae", "r2")}
    report = {
        "variant": grid[0].variant,
        "plan": plan.to_dict(),
        "objective": objective,
        "grid_size": len(grid),
        "splits": splits,
        "summary": summary,
    }
    return ExperimentResult(report, preds, tables)
