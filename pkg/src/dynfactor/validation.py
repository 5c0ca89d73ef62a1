"""CAPM betas and the correlation/regression diagnostics used to validate
extracted factors against a composite index and principal components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError
from .panels import ReturnsPanel


@dataclass(frozen=True)
class CapmResult:
    tickers: list[str]
    betas: np.ndarray
    intercepts: np.ndarray
    r_squared: np.ndarray
    risk_free: float


def _pairwise_complete(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("series must be one-dimensional and equal length")
    keep = np.isfinite(a) & np.isfinite(b)
    return a[keep], b[keep]


def _align_market(panel: ReturnsPanel, market) -> np.ndarray:
    """Market returns as an array aligned with the panel dates."""
    if isinstance(market, pd.Series):
        aligned = market.reindex(panel.dates)
        return aligned.to_numpy(dtype=float)
    arr = np.asarray(market, dtype=float)
    if arr.shape != (panel.n_dates,):
        raise DataError(
            "market series must be date-indexed or match the panel length"
        )
    return arr


def capm_betas(stock_returns: ReturnsPanel, market_returns,
               risk_free: float = 0.0) -> CapmResult:
    """Per-series OLS of excess stock return on excess market return.

    The regression includes an intercept; the slope is the beta.  Daily data
    defaults to a zero risk-free rate.
    """
    market = _align_market(stock_returns, market_returns) - risk_free
    s = stock_returns.n_series
    betas = np.empty(s)
    intercepts = np.empty(s)
    r_squared = np.empty(s)
    for i in range(s):
        y, x = _pairwise_complete(stock_returns.returns[:, i] - risk_free, market)
        if y.size < 3:
            raise DataError(
                f"series {stock_returns.tickers[i]!r} has fewer than 3 "
                "observations aligned with the market"
            )
        coef, r2 = regress(y, x)
        intercepts[i] = coef[0]
        betas[i] = coef[1]
        r_squared[i] = r2
    return CapmResult(
        tickers=list(stock_returns.tickers),
        betas=betas,
        intercepts=intercepts,
        r_squared=r_squared,
        risk_free=risk_free,
    )


def correlation(a, b) -> float:
    """Pearson correlation over pairs present in both series."""
    x, y = _pairwise_complete(a, b)
    if x.size < 2:
        raise DataError("need at least 2 aligned pairs")
    x = x - x.mean()
    y = y - y.mean()
    nx = np.sqrt(x @ x)
    ny = np.sqrt(y @ y)
    if nx == 0 or ny == 0:
        raise DataError("correlation undefined for a zero-variance series")
    return float((x @ y) / (nx * ny))


def regress(y, x) -> tuple[np.ndarray, float]:
    """OLS with intercept; returns (coefficients, R^2).

    ``x`` may be a single series or a (T, k) design; the intercept coefficient
    comes first.  Raises on rank deficiency.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim != 1 or x.shape[0] != y.size:
        raise DataError("regressand and regressors must align")
    if not (np.isfinite(y).all() and np.isfinite(x).all()):
        raise DataError("regression inputs contain missing values")
    design = np.column_stack([np.ones(y.size), x])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DataError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    total = y - y.mean()
    sst = total @ total
    r2 = 1.0 - (resid @ resid) / sst if sst > 0 else 1.0
    return coef, float(r2)
