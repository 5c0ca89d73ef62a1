"""Mixed-frequency GDP nowcasting bridge.

Daily factor paths are collapsed into monthly mean/standard-deviation
indicators, drawing from the smoothed path before a supplied boundary date
and from the filtered path after it so out-of-sample evaluation never sees
future information.  Quarterly growth is then nowcast by an AR(1) baseline
and by the AR(1) augmented with the three constituent months of indicators,
both fit by least squares with one-step-ahead predictions using realized
previous-quarter growth.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError

Quarter = tuple[int, int]
Month = tuple[int, int]


def _check_quarter(q: Quarter) -> Quarter:
    year, qtr = int(q[0]), int(q[1])
    if not 1 <= qtr <= 4:
        raise DataError(f"quarter index must be 1..4, got {qtr}")
    return year, qtr


def quarter_add(q: Quarter, k: int) -> Quarter:
    year, qtr = _check_quarter(q)
    idx = year * 4 + (qtr - 1) + k
    return idx // 4, idx % 4 + 1


def quarter_range(start: Quarter, end: Quarter) -> list[Quarter]:
    start, end = _check_quarter(start), _check_quarter(end)
    out = []
    q = start
    while q <= end:
        out.append(q)
        q = quarter_add(q, 1)
    return out


def quarter_months(q: Quarter) -> list[Month]:
    year, qtr = _check_quarter(q)
    first = 3 * (qtr - 1) + 1
    return [(year, first), (year, first + 1), (year, first + 2)]


@dataclass(frozen=True)
class QuarterlySeries:
    """Quarterly GDP growth rates in percent points."""

    quarters: list[Quarter]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "quarters", [_check_quarter(q) for q in self.quarters])
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.quarters),):
            raise DataError("one value per quarter required")
        if not np.all(np.isfinite(values)):
            raise DataError("growth values must be finite")
        for prev, curr in zip(self.quarters, self.quarters[1:]):
            if quarter_add(prev, 1) != curr:
                raise DataError(f"quarters must be contiguous; gap after {prev}")

    def lookup(self) -> dict[Quarter, float]:
        return dict(zip(self.quarters, self.values))


def load_gdp_csv(path) -> QuarterlySeries:
    """Read a CSV with columns year, quarter, growth (percent points)."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read GDP CSV {path}: {exc}") from exc
    needed = {"year", "quarter", "growth"}
    if not needed.issubset(frame.columns):
        raise DataError(f"GDP CSV must have columns {sorted(needed)}")
    frame = frame.sort_values(["year", "quarter"])
    quarters = [(int(y), int(q)) for y, q in zip(frame["year"], frame["quarter"])]
    return QuarterlySeries(quarters=quarters, values=frame["growth"].to_numpy(float))


@dataclass(frozen=True)
class MonthlyIndicators:
    """Per-month mean and standard deviation of each daily factor path."""

    months: list[Month]
    means: np.ndarray  # (M, n_factors)
    stds: np.ndarray   # (M, n_factors)

    def lookup(self) -> dict[Month, int]:
        return {m: i for i, m in enumerate(self.months)}


def monthly_indicators(dates, smoothed, filtered, boundary) -> MonthlyIndicators:
    """Collapse daily factor paths to monthly indicators, leakage-safe.

    For each trading day the factor value comes from the smoothed path when
    the day falls before ``boundary`` and from the filtered path otherwise;
    each calendar month present in ``dates`` then contributes its mean and its
    sample standard deviation (zero for one-day months).
    """
    dates = pd.DatetimeIndex(dates)
    smoothed = np.atleast_2d(np.asarray(smoothed, dtype=float).T).T
    filtered = np.atleast_2d(np.asarray(filtered, dtype=float).T).T
    if smoothed.shape != filtered.shape or smoothed.shape[0] != len(dates):
        raise DataError("factor paths must share the panel dates")
    if len(dates) == 0:
        raise DataError("factor paths are empty")
    boundary = pd.Timestamp(boundary)
    values = np.where((dates < boundary)[:, None], smoothed, filtered)

    keys = np.array([d.year * 100 + d.month for d in dates])
    months: list[Month] = []
    means, stds = [], []
    for key in pd.unique(keys):
        rows = values[keys == key]
        months.append((int(key) // 100, int(key) % 100))
        means.append(rows.mean(axis=0))
        stds.append(rows.std(axis=0, ddof=1) if rows.shape[0] > 1
                    else np.zeros(rows.shape[1]))
    return MonthlyIndicators(months=months, means=np.array(means), stds=np.array(stds))


@dataclass(frozen=True)
class BridgeModel:
    """Least-squares nowcasting model and its evaluation.

    ``coefficients`` holds the intercept, the coefficient on previous-quarter
    growth, then one coefficient per indicator regressor ordered month-1,
    month-2, month-3 of the quarter, factors within month, mean before
    standard deviation.
    """

    coefficients: np.ndarray
    in_sample_rmse: float
    out_sample_rmse: float
    in_quarters: list[Quarter]
    in_pred: np.ndarray
    in_actual: np.ndarray
    out_quarters: list[Quarter]
    out_pred: np.ndarray
    out_actual: np.ndarray


def rmse(pred, actual) -> float:
    """Root mean squared difference of two equal-length series."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.ndim != 1 or pred.size < 1:
        raise DataError("prediction and actual series must align and be nonempty")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def _indicator_row(indicators: MonthlyIndicators, quarter: Quarter) -> np.ndarray:
    idx = indicators.lookup()
    row = []
    for month in quarter_months(quarter):
        if month not in idx:
            raise DataError(f"indicators missing for month {month}")
        i = idx[month]
        for j in range(indicators.means.shape[1]):
            row.extend([indicators.means[i, j], indicators.stds[i, j]])
    return np.array(row)


def _rows(gdp: QuarterlySeries, quarters, indicators):
    """Design rows with realized previous-quarter growth and optional indicators."""
    table = gdp.lookup()
    kept, design, target = [], [], []
    for q in quarters:
        prev = quarter_add(q, -1)
        if q not in table or prev not in table:
            continue
        row = [1.0, table[prev]]
        if indicators is not None:
            row.extend(_indicator_row(indicators, q))
        kept.append(q)
        design.append(row)
        target.append(table[q])
    return kept, np.array(design), np.array(target)


def _fit_least_squares(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            "nowcast design is rank deficient; minimum-norm coefficients used",
            stacklevel=3,
        )
    return coef


def _evaluate(gdp, indicators, window, out_window):
    in_quarters = quarter_range(*window)
    if out_window is None:
        tail = [q for q in gdp.quarters if q > window[1]]
        out_quarters = tail
    else:
        out_quarters = quarter_range(*out_window)
    kept_in, design_in, y_in = _rows(gdp, in_quarters, indicators)
    kept_out, design_out, y_out = _rows(gdp, out_quarters, indicators)
    return kept_in, design_in, y_in, kept_out, design_out, y_out


def fit_ar1(gdp: QuarterlySeries, window: tuple[Quarter, Quarter],
            out_window: tuple[Quarter, Quarter] | None = None) -> BridgeModel:
    """Baseline: growth on intercept plus previous-quarter growth."""
    kept_in, design_in, y_in, kept_out, design_out, y_out = _evaluate(
        gdp, None, window, out_window
    )
    if len(kept_in) < 3:
        raise DataError(f"need at least 3 in-sample quarters, got {len(kept_in)}")
    coef = _fit_least_squares(design_in, y_in)
    pred_in = design_in @ coef
    pred_out = design_out @ coef if len(kept_out) else np.zeros(0)
    return BridgeModel(
        coefficients=coef,
        in_sample_rmse=rmse(pred_in, y_in),
        out_sample_rmse=rmse(pred_out, y_out) if len(kept_out) else float("nan"),
        in_quarters=kept_in, in_pred=pred_in, in_actual=y_in,
        out_quarters=kept_out, out_pred=pred_out, out_actual=y_out,
    )


def fit_bridge(gdp: QuarterlySeries, indicators: MonthlyIndicators,
               window: tuple[Quarter, Quarter],
               out_window: tuple[Quarter, Quarter] | None = None) -> BridgeModel:
    """AR(1) augmented with the quarter's three months of factor indicators.

    Every in-window quarter must have all three constituent months present.
    In-sample rows match the AR(1) baseline exactly, so the in-sample RMSE can
    never exceed the baseline's.
    """
    kept_in, design_in, y_in, kept_out, design_out, y_out = _evaluate(
        gdp, indicators, window, out_window
    )
    if len(kept_in) < 3:
        raise DataError(f"need at least 3 in-sample quarters, got {len(kept_in)}")
    coef = _fit_least_squares(design_in, y_in)
    pred_in = design_in @ coef
    pred_out = design_out @ coef if len(kept_out) else np.zeros(0)
    return BridgeModel(
        coefficients=coef,
        in_sample_rmse=rmse(pred_in, y_in),
        out_sample_rmse=rmse(pred_out, y_out) if len(kept_out) else float("nan"),
        in_quarters=kept_in, in_pred=pred_in, in_actual=y_in,
        out_quarters=kept_out, out_pred=pred_out, out_actual=y_out,
    )
