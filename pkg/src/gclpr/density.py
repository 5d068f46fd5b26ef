"""Response-based robustness weights.

Each training row gets a weight proportional to a Gaussian KDE of its own
response among its ``k_r`` nearest neighbours in a robustness chart (by
default the standardized fitting coordinates). Rows whose response is
implausible given their neighbourhood get small weights.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateWindow


@dataclass(frozen=True)
class RobustnessSpec:
    """Robustness factor settings.

    chart_columns
        Indices of fitting columns spanning the chart; ``None`` means all.
    k_r
        Window size, the row itself included.
    bandwidth_multiplier
        Scales the rule-of-thumb response bandwidth.
    """

    chart_columns: tuple[int, ...] | None = None
    k_r: int = 20
    bandwidth_multiplier: float = 1.0

    def __post_init__(self):
        if self.k_r < 2:
            raise ValueError("k_r must be >= 2")
        if not self.bandwidth_multiplier > 0:
            raise ValueError("bandwidth_multiplier must be positive")
        if self.chart_columns is not None and len(self.chart_columns) == 0:
            raise ValueError("chart_columns must be non-empty")

    def to_dict(self) -> dict:
        return {
            "chart_columns": None if self.chart_columns is None else list(self.chart_columns),
            "k_r": self.k_r,
            "bandwidth_multiplier": self.bandwidth_multiplier,
        }

    @classmethod
    def from_dict(cls, d) -> "RobustnessSpec":
        cc = d.get("chart_columns")
        return cls(
            chart_columns=None if cc is None else tuple(int(c) for c in cc),
            k_r=int(d.get("k_r", 20)),
            bandwidth_multiplier=float(d.get("bandwidth_multiplier", 1.0)),
        )


def conditional_density_weights(chart: np.ndarray, y: np.ndarray, spec: RobustnessSpec) -> np.ndarray:
    """Max-normalized conditional-density weights in [0, 1], one per row.

    For row ``i`` with window ``N(i)`` (its ``k_r`` nearest chart neighbours,
    itself included)::

        h_i = mult * 1.06 * std(y[N(i)]) * k_r**(-1/5)   (floored at 1e-9 * range(y))
        w_i = mean_j exp(-((y_i - y_j) / h_i)**2 / 2)

    A window with zero response range yields ``w_i = 1`` and a
    ``DegenerateWindow`` warning.
    """
    chart = np.asarray(chart, dtype=float)
    if chart.ndim == 1:
        chart = chart[:, None]
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if chart.shape[0] != n:
        raise ValueError("chart and y row counts differ")
    k = spec.k_r
    if n < k:
        raise ValueError(f"need at least k_r={k} rows, got {n}")
    _, idx = cKDTree(chart).query(chart, k=k)
    idx = np.asarray(idx).reshape(n, k)
    # the row itself always belongs to its window
    has_self = (idx == np.arange(n)[:, None]).any(axis=1)
    idx[~has_self, -1] = np.nonzero(~has_self)[0]

    Yw = y[idx]
    sd = Yw.std(axis=1, ddof=1)
    yrange = float(np.ptp(y)) if n else 0.0
    h = spec.bandwidth_multiplier * 1.06 * sd * k ** (-0.2)
    h = np.maximum(h, 1e-9 * yrange)
    degenerate = np.ptp(Yw, axis=1) == 0.0
    raw = np.ones(n)
    ok = ~degenerate & (h > 0)
    r = (y[ok, None] - Yw[ok]) / h[ok, None]
    raw[ok] = np.exp(-0.5 * r * r).mean(axis=1)
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} density window(s) with zero response range", DegenerateWindow, stacklevel=2)
    top = raw.max() if n else 0.0
    return raw / top if top > 0 else raw
