"""Command-line entry point: ``gclpr <command> [options]``.

Commands
--------
generate      write a synthetic scenario as CSV files
fit           fit one model (grid-tuned if the config has a grid) and save it
predict       predict a queries CSV with a saved model
experiment    run the outer evaluation protocol and write reports
theory-check  run the numerical identity and rate checks

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit failure.
Failures print a JSON error record to stderr (and to ``<out>/error.json``
when an output directory is known).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as gio
from .config import RunConfig, check_columns, parse_config
from .errors import (
    AllFitsFailed,
    ConfigInvalid,
    DimensionMismatch,
    GCLPRError,
    InsufficientSupport,
    NonFinite,
    UnknownNode,
)
from .estimator import Dataset, FittedModel, fit
from .evaluation import grid_search, make_splits, metrics, run_experiment
from .graphs import Graph
from .io import DataError

log = logging.getLogger("gclpr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, problems: Sequence[str] = ()):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.problems = list(problems)

    def record(self) -> dict:
        return {"error": self.kind, "message": str(self), "problems": self.problems, "exit_code": self.code}


# --------------------------------------------------------------------------
# loading


def load_config(path: str | None, seed: int | None = None, out: str | None = None, threads: int | None = None) -> RunConfig:
    if path is None:
        raise CliError(EXIT_CONFIG, "ConfigInvalid", "--config is required")
    try:
        doc = gio.read_json(path)
    except DataError as exc:
        raise CliError(EXIT_CONFIG, "ConfigInvalid", str(exc)) from None
    if isinstance(doc, dict):
        doc = dict(doc)
        if seed is not None:
            doc["seed"] = seed
        if out is not None:
            doc["output_dir"] = out
        if threads is not None:
            doc["threads"] = threads
    try:
        cfg = parse_config(doc)
    except ConfigInvalid as exc:
        raise CliError(EXIT_CONFIG, "ConfigInvalid", "invalid configuration", exc.problems) from None
    return _resolve_paths(cfg, Path(path).parent)


def _resolve_paths(cfg: RunConfig, base: Path) -> RunConfig:
    def res(p):
        return None if p is None else str(p if Path(p).is_absolute() else base / p)

    data = cfg.data.model_copy(update={"features": res(cfg.data.features), "edges": res(cfg.data.edges)})
    return cfg.model_copy(update={"data": data})


def load_dataset(cfg: RunConfig, path: str, queries: bool = False) -> Dataset:
    header, rows = gio.read_table(path)
    problems = check_columns(cfg, header, queries=queries)
    if problems:
        raise CliError(EXIT_CONFIG, "ConfigInvalid", f"{path}: column bindings do not match the CSV", problems)
    if not rows:
        raise DataError(f"{path} has no data rows")
    src = f"{Path(path).name}: "
    Z = np.column_stack([gio.column(header, rows, c, True, src) for c in cfg.columns.fitting])
    y = None
    if cfg.columns.response in header:
        if queries:
            raw = gio.column(header, rows, cfg.columns.response, False)
            y = None if any(v == "" for v in raw) else gio.column(header, rows, cfg.columns.response, True, src)
        else:
            y = gio.column(header, rows, cfg.columns.response, True, src)
    ctx = {}
    for ch in cfg.columns.contexts:
        if ch.type == "vector":
            ctx[ch.name] = np.column_stack([gio.column(header, rows, c, True, src) for c in ch.columns])
        else:
            ctx[ch.name] = gio.column(header, rows, ch.columns[0], False)
    if cfg.columns.time is not None:
        ctx.setdefault("__time__", gio.column(header, rows, cfg.columns.time, True, src))
    rid = gio.column(header, rows, cfg.columns.row_id, False) if cfg.columns.row_id else None
    return Dataset(Z, y, ctx, row_ids=rid, feature_names=tuple(cfg.columns.fitting))


def load_graph(cfg: RunConfig, data: Dataset) -> Graph | None:
    if cfg.data.edges is None:
        return None
    node_ids = set()
    for ch in cfg.columns.contexts:
        if ch.type == "node":
            node_ids.update(str(v) for v in data.contexts[ch.name])
    try:
        edges = Graph.read_csv(cfg.data.edges)
        nodes = sorted(set(edges.nodes) | node_ids)
        return Graph(nodes, edges.edges())
    except OSError as exc:
        raise DataError(f"cannot read {cfg.data.edges}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{cfg.data.edges}: {exc}") from exc


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> dict:
    from .synthetic import ScenarioSpec, generate

    fields = dict(kind=args.scenario, n=args.n, seed=args.seed if args.seed is not None else 0)
    if args.sigma is not None:
        fields["sigma"] = args.sigma
    if args.nodes is not None:
        fields["n_nodes"] = args.nodes
    try:
        spec = ScenarioSpec(**fields)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "ConfigInvalid", str(exc), [str(exc)]) from None
    sc = generate(spec)
    out = Path(args.out)
    d = sc.data
    names = list(d.feature_names or [f"z{j}" for j in range(d.dim)])
    ctx_cols, ctx_vals = [], []
    for k, v in d.contexts.items():
        if v.ndim == 2:
            for j in range(v.shape[1]):
                ctx_cols.append(f"{k}_{j}")
                ctx_vals.append(v[:, j])
        else:
            ctx_cols.append(k)
            ctx_vals.append(v)
    header = ["row_id", *names, *ctx_cols, "y"]
    rows = (
        [d.row_ids[i], *d.Z[i].tolist(), *[c[i] for c in ctx_vals], d.y[i]]
        for i in range(d.n)
    )
    gio.write_table(out / "features.csv", header, rows)
    gio.write_table(out / "truth.csv", ["row_id", "m"], zip(d.row_ids, sc.truth))
    files = ["features.csv", "truth.csv"]
    if sc.graph is not None:
        sc.graph.write_csv(out / "edges.csv")
        files.append("edges.csv")
    if sc.outliers is not None:
        gio.write_table(out / "outliers.csv", ["row_id", "outlier"], zip(d.row_ids, sc.outliers.astype(int)))
        files.append("outliers.csv")
    info = {"scenario": spec.kind, "n": d.n, "seed": spec.seed, "files": files}
    gio.write_json(out / "scenario.json", info)
    return info


def _fit_config(cfg: RunConfig):
    data = load_dataset(cfg, cfg.data.features)
    graph = load_graph(cfg, data)
    grid = cfg.grid_points()
    table = None
    if len(grid) > 1:
        plan = cfg.split_plan().inner(seed=cfg.seed)
        times = data.contexts.get("__time__") if plan.chronological else None
        folds = make_splits(times if times is not None else data.n, plan)
        gs = grid_search(data, grid, folds, graph, cfg.objective, cfg.threads)
        hp, table = gs.best, gs.to_dict()
    else:
        hp = grid[0]
    return data, graph, fit(data, hp, graph), table


def cmd_fit(args) -> dict:
    cfg = load_config(args.config, args.seed, args.out, args.threads)
    data, graph, model, table = _fit_config(cfg)
    out = Path(cfg.output_dir)
    art = {"model": model.to_dict(), "columns": cfg.columns.model_dump()}
    gio.write_json(out / "model.json", art)
    if table is not None:
        gio.write_json(out / "cv_table.json", table)
    return {"model": str(out / "model.json"), "n_train": data.n, "hyperparameters": model.hp.to_dict()}


def cmd_predict(args) -> dict:
    try:
        art = gio.read_json(args.model)
        model = FittedModel.from_dict(art["model"])
        cols = art["columns"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.model} is not a usable model artifact: {exc}") from exc
    # rebuild a minimal config to reuse the column binding logic
    cfg = parse_config({"version": 1, "data": {"features": args.queries}, "columns": cols})
    q = load_dataset(cfg, args.queries, queries=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", InsufficientSupport)
        pred = model.predict(q)
    records = []
    for i in range(q.n):
        yt = None if q.y is None else float(q.y[i])
        yp = float(pred.y[i])
        records.append(
            {
                "row_id": str(q.row_ids[i]),
                "y_true": yt,
                "y_pred": yp if math.isfinite(yp) else None,
                "abs_error": abs(yt - yp) if yt is not None and math.isfinite(yp) else None,
            }
        )
    out = Path(args.out)
    gio.write_predictions(out / "predictions.csv", records)
    summary = {
        "n_queries": q.n,
        "status_counts": {str(s): int(np.sum(pred.status == s)) for s in range(4)},
        "row_errors": {str(q.row_ids[j]): msg for j, msg in sorted(pred.errors.items())},
        "warnings": len(caught),
    }
    if q.y is not None:
        ok = np.isfinite(pred.y)
        if ok.sum() >= 2:
            summary["metrics"] = metrics(q.y[ok], pred.y[ok]).to_dict()
    gio.write_json(out / "predict_summary.json", summary)
    return summary


def cmd_experiment(args) -> dict:
    cfg = load_config(args.config, args.seed, args.out, args.threads)
    data = load_dataset(cfg, cfg.data.features)
    graph = load_graph(cfg, data)
    plan = cfg.split_plan()
    res = run_experiment(
        data,
        cfg.grid_points(),
        plan,
        graph,
        cfg.objective,
        cfg.threads,
        time_channel="__time__" if cfg.columns.time is not None else None,
    )
    out = Path(cfg.output_dir)
    report = {**res.report, "model": cfg.model, "seed": cfg.seed, "n_rows": data.n}
    gio.write_json(out / "report.json", report)
    gio.write_json(out / "cv_tables.json", res.cv_tables)
    for s, recs in enumerate(res.predictions):
        gio.write_predictions(out / "predictions" / f"split_{s:02d}.csv", recs)
    return report["summary"]


def cmd_theory_check(args) -> dict:
    from . import theory
    from .synthetic import linear_sampler, sine_sampler, two_context_sampler

    seed = args.seed if args.seed is not None else 0
    reps = args.replications
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        dist = theory.random_distribution(rng)
        z = float(dist.z[0])
        worst = max(worst, theory.lemma1_residual(dist, None, "a", z, rng.normal(0, 3, 20)))
    moments = {}
    for kern in ("tricube", "gaussian"):
        km = theory.kernel_moments(kern, 1, 1)
        moments[kern] = {"M0": km.M0, "Omega0": km.Omega0, "variance_constant": km.variance_constant()}
    m = lambda z: float(np.sin(2 * np.pi * z))  # noqa: E731
    hs = np.geomspace(0.05, 0.2, 5)
    b1 = theory.bias_rate_experiment(sine_sampler(0.1), m, 1, hs, 4000, reps, 0.25, seed=seed, threads=args.threads)
    b0 = theory.bias_rate_experiment(sine_sampler(0.1), m, 0, hs, 4000, reps, 0.0, seed=seed, threads=args.threads)
    ns = [1000, 2000, 4000, 8000]
    v = theory.variance_scaling_experiment(sine_sampler(0.5), 1, 0.1, ns, reps, 0.5, seed=seed, threads=args.threads)
    v0 = theory.variance_scaling_experiment(linear_sampler(sigma=0.0), 1, 0.1, [1000], 20, 0.5, seed=seed)
    vm = theory.variance_scaling_experiment(two_context_sampler(sigma=0.0), 1, 0.1, [1000], 20, 0.5, seed=seed)
    report = {
        "seed": seed,
        "replications": reps,
        "decomposition_max_residual": worst,
        "kernel_moments": moments,
        "bias_rate": {"p1_interior": b1.to_dict(), "p0_boundary": b0.to_dict()},
        "variance_scaling": v.to_dict(),
        "variance_zero_noise": float(v0.value[0]),
        "variance_context_mixing": float(vm.value[0]),
        "checks": {
            "decomposition_identity": worst < 1e-12,
            "bias_p1": 1.6 <= b1.slope <= 2.4,
            "bias_p0": 0.7 <= b0.slope <= 1.3,
            "variance_slope": -1.25 <= v.slope <= -0.75,
            "variance_zero_noise": float(v0.value[0]) < 1e-16,
            "variance_context_mixing": float(vm.value[0]) > 0,
        },
    }
    gio.write_json(Path(args.out) / "theory_report.json", report)
    return report["checks"]


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gclpr", description="Context-aware local polynomial regression.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads, 0 = auto")
        p.add_argument("--verbose", action="store_true")

    g = sub.add_parser("generate", help="write a synthetic scenario")
    common(g, config=False)
    g.add_argument("--scenario", default="sine1d", choices=("sine1d", "piecewise_context", "contaminated", "graph_diffusion"))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--sigma", type=float)
    g.add_argument("--nodes", type=int, help="graph size for graph_diffusion")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit and save a model")
    common(f)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict with a saved model")
    common(p, config=False)
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True)
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("experiment", help="run the evaluation protocol")
    common(e)
    e.set_defaults(func=cmd_experiment)

    t = sub.add_parser("theory-check", help="numerical identity and rate checks")
    common(t, config=False)
    t.add_argument("--replications", type=int, default=200)
    t.set_defaults(func=cmd_theory_check)
    return ap


def _classify(exc: BaseException) -> CliError:
    if isinstance(exc, CliError):
        return exc
    if isinstance(exc, ConfigInvalid):
        return CliError(EXIT_CONFIG, "ConfigInvalid", "invalid configuration", exc.problems)
    if isinstance(exc, (DataError, UnknownNode, DimensionMismatch, NonFinite, OSError)):
        return CliError(EXIT_DATA, type(exc).__name__, str(exc))
    if isinstance(exc, (AllFitsFailed, GCLPRError, ValueError, ArithmeticError, np.linalg.LinAlgError)):
        return CliError(EXIT_FIT, type(exc).__name__, str(exc))
    raise exc


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command in ("generate", "predict", "theory-check") and args.out is None:
        args.out = "out"
    if args.threads is None and args.command == "theory-check":
        args.threads = 1
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        err = _classify(exc)
        rec = err.record()
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        out = getattr(args, "out", None)
        if out:
            try:
                gio.write_json(Path(out) / "error.json", rec)
            except OSError:
                pass
        return err.code
    if args.verbose:
        print(gio.dumps(result), end="")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
