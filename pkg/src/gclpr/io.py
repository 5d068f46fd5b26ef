"""CSV and JSON reading/writing with deterministic output."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Input file missing, unreadable or malformed."""


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Header and string rows of a UTF-8 CSV file."""
    p = Path(path)
    try:
        with p.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {p}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{p} is not UTF-8: {exc}") from exc
    if not rows:
        raise DataError(f"{p} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{p}: row {i + 2} has {len(r)} fields, header has {len(header)}")
    return header, body


def column(header: Sequence[str], rows: Sequence[Sequence[str]], name: str, numeric: bool, source="") -> np.ndarray:
    j = header.index(name)
    vals = [r[j] for r in rows]
    if not numeric:
        return np.asarray(vals, dtype=object)
    try:
        out = np.asarray([float(v) for v in vals], dtype=float)
    except ValueError as exc:
        raise DataError(f"{source}column {name!r} is not numeric: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise DataError(f"{source}column {name!r} contains non-finite values")
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


PREDICTION_HEADER = ("row_id", "y_true", "y_pred", "abs_error")


def write_predictions(path, records: Sequence[Mapping]) -> None:
    """Rows ``row_id,y_true,y_pred,abs_error``; unknown truth leaves blanks."""
    write_table(path, PREDICTION_HEADER, ([r.get(k) for k in PREDICTION_HEADER] for r in records))


def _clean(obj):
    # JSON has no nan/inf: map them to null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(obj), encoding="utf-8")


def read_json(path) -> Any:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{p} is not valid JSON: {exc}") from exc
