"""Price and return panels: CSV ingestion, the missingness filter, and
stationary percentage returns.

Missing entries are carried as NaN throughout.  Panels are immutable after
construction (arrays are made read-only) and safe to share across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError


def _as_dates(dates) -> pd.DatetimeIndex:
    idx = pd.DatetimeIndex(dates)
    if idx.has_duplicates:
        raise DataError("duplicate dates in panel")
    if not idx.is_monotonic_increasing:
        raise DataError("dates must be strictly increasing")
    return idx


def _freeze(obj, **arrays):
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class PricePanel:
    """Date-indexed closing prices for S series; NaN marks a missing quote."""

    dates: pd.DatetimeIndex
    tickers: list[str]
    prices: np.ndarray  # (T, S)

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "tickers", list(self.tickers))
        _freeze(self, prices=self.prices)
        t, s = self.prices.shape
        if t != len(self.dates):
            raise DataError("prices row count must match dates")
        if s != len(self.tickers):
            raise DataError("prices column count must match tickers")
        if len(set(self.tickers)) != s:
            raise DataError("duplicate tickers in panel")
        if t < 2:
            raise DataError(f"need at least 2 rows of prices, got {t}")
        with np.errstate(invalid="ignore"):
            if np.any(self.prices <= 0):
                raise DataError("all present prices must be strictly positive")

    @property
    def n_dates(self) -> int:
        return self.prices.shape[0]

    @property
    def n_series(self) -> int:
        return self.prices.shape[1]

    def missing_fraction(self) -> np.ndarray:
        """Per-series fraction of missing entries."""
        return np.isnan(self.prices).mean(axis=0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.prices, index=self.dates, columns=self.tickers)


@dataclass(frozen=True)
class ReturnsPanel:
    """Percentage returns (percent points) with per-series centering means."""

    dates: pd.DatetimeIndex
    tickers: list[str]
    returns: np.ndarray  # (T, S)
    means: np.ndarray    # (S,) means removed during centering; zeros if uncentered

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "tickers", list(self.tickers))
        _freeze(self, returns=self.returns, means=self.means)
        t, s = self.returns.shape
        if t != len(self.dates):
            raise DataError("returns row count must match dates")
        if s != len(self.tickers):
            raise DataError("returns column count must match tickers")
        if len(set(self.tickers)) != s:
            raise DataError("duplicate tickers in panel")
        if self.means.shape != (s,):
            raise DataError("means must have one entry per series")

    @property
    def n_dates(self) -> int:
        return self.returns.shape[0]

    @property
    def n_series(self) -> int:
        return self.returns.shape[1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.returns, index=self.dates, columns=self.tickers)


def load_price_csv(path, date_column: str | None = None) -> PricePanel:
    """Parse a wide CSV of closing prices.

    The first column (or ``date_column``) holds ISO-8601 dates; every other
    column is one ticker.  Unparseable numeric cells become missing entries;
    rows are sorted by date.
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, header=None)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read price CSV {path}: {exc}") from exc
    # pandas would silently mangle duplicate column names, so handle the
    # header row ourselves
    header = [str(c) for c in raw.iloc[0]]
    if len(header) < 2:
        raise DataError("price CSV needs a date column and at least one ticker")
    date_pos = 0 if date_column is None else (
        header.index(date_column) if date_column in header else -1
    )
    if date_pos < 0:
        raise DataError(f"date column {date_column!r} not found")
    body = raw.iloc[1:]
    if body.shape[0] < 2:
        raise DataError(f"need at least 2 rows of prices, got {body.shape[0]}")
    try:
        dates = pd.to_datetime(body.iloc[:, date_pos], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable dates in {header[date_pos]!r}: {exc}") from exc
    tickers = [c for i, c in enumerate(header) if i != date_pos]
    cols = [i for i in range(len(header)) if i != date_pos]
    values = body.iloc[:, cols].apply(pd.to_numeric, errors="coerce").to_numpy(float)
    order = np.argsort(dates.to_numpy(), kind="stable")
    return PricePanel(dates=dates.iloc[order], tickers=tickers, prices=values[order])


def filter_missing(panel: PricePanel, threshold: float) -> PricePanel:
    """Retain exactly the series whose missing fraction is <= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold must lie in [0, 1], got {threshold}")
    keep = panel.missing_fraction() <= threshold
    if not keep.any():
        raise DataError(
            f"threshold {threshold} drops every series; loosen it for this data"
        )
    tickers = [t for t, k in zip(panel.tickers, keep) if k]
    return PricePanel(dates=panel.dates, tickers=tickers, prices=panel.prices[:, keep])


def compute_returns(panel: PricePanel, center: bool = True, percent: bool = True) -> ReturnsPanel:
    """Percentage returns 100 * (S_t - S_{t-1}) / S_{t-1}, missing-aware.

    A return is present only when both adjacent prices are; a price gap
    therefore kills the two returns it touches.  With ``center`` the
    per-series sample mean over present entries is subtracted and recorded so
    the transformation stays invertible.
    """
    scale = 100.0 if percent else 1.0
    prev = panel.prices[:-1]
    curr = panel.prices[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        rets = scale * (curr - prev) / prev
    rets[~(np.isfinite(prev) & np.isfinite(curr))] = np.nan

    thin = np.isnan(rets).all(axis=0)
    if thin.any():
        bad = [t for t, flag in zip(panel.tickers, thin) if flag]
        warnings.warn(
            f"series with fewer than 2 usable prices yield all-missing returns: {bad}",
            stacklevel=2,
        )

    means = np.zeros(panel.n_series)
    if center:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN slices
            col_means = np.nanmean(rets, axis=0)
        col_means = np.where(np.isfinite(col_means), col_means, 0.0)
        rets = rets - col_means
        means = col_means

    return ReturnsPanel(
        dates=panel.dates[1:], tickers=panel.tickers, returns=rets, means=means
    )


def write_returns_csv(panel: ReturnsPanel, path) -> None:
    """Emit the returns panel in the same wide schema as the price input."""
    frame = panel.to_frame()
    frame.index.name = "date"
    frame.to_csv(path, date_format="%Y-%m-%d")


def load_returns_csv(path) -> ReturnsPanel:
    """Read a returns CSV written by write_returns_csv (means are not stored)."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read returns CSV {path}: {exc}") from exc
    if frame.shape[1] < 2:
        raise DataError("returns CSV needs a date column and at least one ticker")
    date_col = frame.columns[0]
    dates = pd.to_datetime(frame[date_col], format="ISO8601")
    tickers = [c for c in frame.columns if c != date_col]
    values = frame[tickers].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    return ReturnsPanel(
        dates=dates, tickers=tickers, returns=values, means=np.zeros(len(tickers))
    )
