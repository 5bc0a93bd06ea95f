"""Sweep tables and the log-log slope verdicts used by every diagnostic."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

SATISFIED = "satisfied"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass
class SweepRecord:
    """A tabulated sweep: ``values`` against a strictly monotone axis.

    ``columns`` holds auxiliary per-point data (residuals, witness norms...).
    """

    axis_name: str
    axis_values: list[float]
    values: list[float]
    metadata: dict[str, Any] = field(default_factory=dict)
    columns: dict[str, list[float]] = field(default_factory=dict)
    value_name: str = "value"

    def __post_init__(self):
        self.axis_values = [float(a) for a in self.axis_values]
        self.values = [float(v) for v in self.values]
        if len(self.axis_values) != len(self.values):
            raise ValueError("axis and values differ in length")
        d = np.diff(self.axis_values)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("axis values must be strictly monotone")
        for name, col in self.columns.items():
            if len(col) != len(self.values):
                raise ValueError(f"column {name!r} has wrong length")

    def to_csv(self) -> str:
        names = [self.axis_name, self.value_name, *self.columns]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for i, a in enumerate(self.axis_values):
            row = [a, self.values[i], *(self.columns[c][i] for c in self.columns)]
            writer.writerow([format_number(x) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "axis_name": self.axis_name,
            "axis_values": self.axis_values,
            "value_name": self.value_name,
            "values": self.values,
            "columns": {k: [float(x) for x in v] for k, v in self.columns.items()},
            "metadata": self.metadata,
        }


def format_number(x) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "points": self.points}


def fit_loglog(x, y, confidence: float = 0.95) -> SlopeFit:
    """Least-squares slope of log y against log x with a t-based interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    x, y = np.log(x[ok]), np.log(y[ok])
    if x.size < 2:
        return SlopeFit(math.nan, math.nan, math.nan, math.nan, int(x.size))
    res = stats.linregress(x, y)
    if x.size < 3:
        half = math.inf
    else:
        half = stats.t.ppf(0.5 + confidence / 2.0, x.size - 2) * res.stderr
    return SlopeFit(float(res.slope), float(res.intercept), float(res.slope - half),
                    float(res.slope + half), int(x.size))


def tail(axis, values, decades: float = 1.0, end: str = "high") -> tuple[np.ndarray, np.ndarray]:
    """Points of the last ``decades`` of the axis toward ``end``."""
    axis = np.asarray(axis, dtype=float)
    values = np.asarray(values, dtype=float)
    if end == "high":
        keep = axis >= axis.max() / 10.0**decades
    else:
        keep = axis <= axis.min() * 10.0**decades
    return axis[keep], values[keep]


def slope_verdict(fit: SlopeFit, threshold: float, want: str = "below") -> str:
    """Satisfied when the whole confidence interval sits on the wanted side."""
    if not math.isfinite(fit.slope):
        return INCONCLUSIVE
    if want == "below":
        # a slope pinned at the threshold still means a divergent integral
        if fit.ci_high < threshold:
            return SATISFIED
        if fit.ci_low >= threshold:
            return VIOLATED
    else:
        if fit.ci_low > threshold:
            return SATISFIED
        if fit.ci_high < threshold:
            return VIOLATED
    return INCONCLUSIVE


def decay_verdict(axis, values, threshold: float, decades: float = 1.0) -> tuple[str, SlopeFit]:
    """Verdict for an integrability proxy over a growing axis (r or t).

    A profile that has reached exactly zero at the end of the axis counts as
    decaying (compact support).
    """
    ax, val = tail(axis, values, decades, "high")
    if val.size and val[-1] == 0.0:
        return SATISFIED, SlopeFit(-math.inf, math.nan, -math.inf, -math.inf, int(val.size))
    fit = fit_loglog(ax, val)
    return slope_verdict(fit, threshold, "below"), fit
