"""Run configuration: a versioned JSON document validated up front.

Validation is total: every problem (unknown keys, bad values, missing
columns, graph channels without an edge list) is collected and reported at
once through ``ConfigInvalid`` before any computation starts.
"""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .density import RobustnessSpec
from .errors import ConfigInvalid
from .estimator import Hyperparameters
from .evaluation import SPLIT_KINDS, SplitPlan, expand_grid
from .kernels import DistanceMetric, ContextFactorSpec

CONFIG_VERSION = 1
MODELS = ("lpr", "gclpr", "rsklpr", "grclpr", "knn")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataPaths(_Strict):
    features: str
    edges: str | None = None


class ChannelBinding(_Strict):
    """A context channel built from one or more CSV columns.

    ``label`` channels hold one categorical column, ``node`` channels one
    column of graph node ids, ``vector`` channels one or more numeric
    columns (e.g. latitude, longitude).
    """

    name: str
    type: Literal["label", "node", "vector"]
    columns: list[str] = Field(min_length=1)

    @model_validator(mode="after")
    def _single_column(self):
        if self.type != "vector" and len(self.columns) != 1:
            raise ValueError(f"{self.type} channel {self.name!r} takes exactly one column")
        return self


class Columns(_Strict):
    fitting: list[str] = Field(min_length=1)
    response: str
    row_id: str | None = None
    time: str | None = None
    contexts: list[ChannelBinding] = []


class MetricConfig(_Strict):
    kind: Literal["minkowski", "haversine", "mahalanobis"] = "minkowski"
    order: float = 2.0
    radius_km: float | None = None


class FactorConfig(_Strict):
    kind: Literal["rbf_over_metric", "aitchison_aitken", "graph_hop", "indicator"]
    channel: str
    length_scale: float = 1.0
    lam: float = 0.0
    category_count: int = 2
    metric: MetricConfig | None = None
    temper: float = 1.0


class RobustConfig(_Strict):
    enabled: bool = False
    chart_columns: list[str] | None = None
    k_r: int = 20
    bandwidth_multiplier: float = 1.0


class ModelConfig(_Strict):
    degree: int = 1
    k: int = 30
    kernel: Literal["tricube", "gaussian", "laplacian"] = "tricube"
    metric: Literal["minkowski", "mahalanobis"] = "minkowski"
    order: float = 2.0
    ridge_floor: float = 1e-8
    bandwidth: float | None = None
    standardize: bool = True
    response_transform: Literal["none", "log1p"] = "none"
    knn_weighting: Literal["uniform", "distance"] = "uniform"


class SplitConfig(_Strict):
    kind: Literal[SPLIT_KINDS] = "repeated_holdout"  # type: ignore[valid-type]
    reps: int = 5
    test_fraction: float = 0.2
    folds: int = 4
    outer_splits: int = 5
    inner_folds: int = 4


class RunConfig(_Strict):
    version: Literal[1]
    data: DataPaths
    columns: Columns
    model: Literal[MODELS] = "lpr"  # type: ignore[valid-type]
    hyperparameters: ModelConfig = ModelConfig()
    factors: list[FactorConfig] = []
    robust: RobustConfig = RobustConfig()
    grid: dict[str, list[Any]] = {}
    split: SplitConfig = SplitConfig()
    objective: Literal["rmse", "mae"] = "rmse"
    output_dir: str = "out"
    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int = Field(default=1, ge=0)

    # ---- derived objects ---------------------------------------------------

    def channel(self, name: str) -> ChannelBinding | None:
        return next((c for c in self.columns.contexts if c.name == name), None)

    def base_hyperparameters(self) -> Hyperparameters:
        hp = self.hyperparameters.model_dump()
        factors = []
        for f in self.factors:
            metric = None
            if f.metric is not None:
                m = f.metric.model_dump(exclude_none=True)
                metric = DistanceMetric.from_dict(m)
            factors.append(
                ContextFactorSpec(f.kind, f.channel, f.length_scale, f.lam, f.category_count, metric, f.temper)
            )
        robust = None
        if self.robust.enabled:
            cc = self.robust.chart_columns
            cols = None if cc is None else tuple(self.columns.fitting.index(c) for c in cc)
            robust = RobustnessSpec(cols, self.robust.k_r, self.robust.bandwidth_multiplier)
        return Hyperparameters(
            model="knn" if self.model == "knn" else "lpr",
            factors=tuple(factors),
            robust=robust,
            **hp,
        )

    def grid_points(self) -> list[Hyperparameters]:
        base = self.base_hyperparameters()
        return expand_grid(base, self.grid) if self.grid else [base]

    def split_plan(self, seed: int | None = None) -> SplitPlan:
        return SplitPlan(seed=self.seed if seed is None else seed, **self.split.model_dump())


def _semantic_problems(cfg: RunConfig) -> list[str]:
    problems = []
    names = [c.name for c in cfg.columns.contexts]
    if len(set(names)) != len(names):
        problems.append("columns.contexts: duplicate channel names")
    for i, f in enumerate(cfg.factors):
        ch = cfg.channel(f.channel)
        where = f"factors[{i}]"
        if ch is None:
            problems.append(f"{where}: channel {f.channel!r} is not declared in columns.contexts")
            continue
        need = {"graph_hop": "node", "rbf_over_metric": "vector"}.get(f.kind, "label")
        if ch.type != need and not (need == "label" and ch.type == "node"):
            problems.append(f"{where}: {f.kind} factor needs a {need} channel, {f.channel!r} is {ch.type}")
        if f.kind == "graph_hop" and cfg.data.edges is None:
            problems.append(f"{where}: graph_hop factor needs data.edges")
        try:
            ContextFactorSpec(f.kind, f.channel, f.length_scale, f.lam, f.category_count, None, f.temper)
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
    has_f = bool(cfg.factors)
    rob = cfg.robust.enabled
    expect = {"lpr": (False, False), "gclpr": (True, False), "rsklpr": (False, True), "grclpr": (True, True)}
    if cfg.model in expect and expect[cfg.model] != (has_f, rob):
        wf, wr = expect[cfg.model]
        problems.append(
            f"model {cfg.model!r} needs {'some' if wf else 'no'} factors and robust.enabled={str(wr).lower()}"
        )
    if cfg.model == "knn" and (has_f or rob):
        problems.append("model 'knn' takes no factors and no robustness weights")
    if cfg.robust.chart_columns is not None:
        for c in cfg.robust.chart_columns:
            if c not in cfg.columns.fitting:
                problems.append(f"robust.chart_columns: {c!r} is not a fitting column")
    if not problems:
        try:
            cfg.grid_points()
            cfg.split_plan()
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            problems.append(f"grid/split: {exc}")
    return problems


def parse_config(doc: Any) -> RunConfig:
    """Validate a config document; raise ``ConfigInvalid`` listing every problem."""
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigInvalid(
            [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
        ) from None
    problems = _semantic_problems(cfg)
    if problems:
        raise ConfigInvalid(problems)
    return cfg


def check_columns(cfg: RunConfig, header: list[str], queries: bool = False) -> list[str]:
    """Every bound column must exist in ``header`` (response optional for queries)."""
    need = list(cfg.columns.fitting)
    if not queries:
        need.append(cfg.columns.response)
    for opt in (cfg.columns.row_id, cfg.columns.time):
        if opt is not None:
            need.append(opt)
    for ch in cfg.columns.contexts:
        need.extend(ch.columns)
    return [f"column {c!r} not in CSV header" for c in dict.fromkeys(need) if c not in header]
