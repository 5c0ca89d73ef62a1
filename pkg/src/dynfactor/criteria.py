"""Factor-count selection via penalized residual criteria and lag-order
selection via BIC over a fit grid.

The three criteria penalize the PCA residual mean square V(n) with panel-size
terms so the argmin consistently estimates the number of common factors:

    IC1(n) = ln V(n) + n ((N + T) / (N T)) ln(N T / (N + T))
    IC2(n) = ln V(n) + n ((N + T) / (N T)) ln min(N, T)
    IC3(n) = ln V(n) + n (ln min(N, T) / min(N, T))
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError, NumericalError
from .panels import ReturnsPanel
from .pca import pca_residual_mse
from .statespace import DFMSpec


@dataclass(frozen=True)
class CriteriaTable:
    n_values: np.ndarray  # candidate factor counts 0..n_max
    ic1: np.ndarray
    ic2: np.ndarray
    ic3: np.ndarray

    def argmin(self) -> dict[str, int]:
        return {
            "ic1": int(self.n_values[np.argmin(self.ic1)]),
            "ic2": int(self.n_values[np.argmin(self.ic2)]),
            "ic3": int(self.n_values[np.argmin(self.ic3)]),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"n": self.n_values, "ic1": self.ic1, "ic2": self.ic2, "ic3": self.ic3}
        )


def ic_values(v: float, n: int, n_series: int, t_obs: int) -> tuple[float, float, float]:
    """The three criteria for one (V(n), n, N, T) combination."""
    log_v = math.log(v)
    nt = n_series * t_obs
    both = (n_series + t_obs) / nt
    min_nt = min(n_series, t_obs)
    return (
        log_v + n * both * math.log(nt / (n_series + t_obs)),
        log_v + n * both * math.log(min_nt),
        log_v + n * (math.log(min_nt) / min_nt),
    )


def bai_ng_table(returns: ReturnsPanel, n_max: int) -> CriteriaTable:
    """Evaluate the three criteria for n = 0..n_max (zero penalty at n = 0)."""
    if n_max < 1:
        raise DataError("n_max must be at least 1")
    t, n_series = returns.returns.shape
    if n_max > min(t, n_series):
        raise DataError(f"n_max={n_max} exceeds min(N, T)={min(t, n_series)}")
    n_values = np.arange(n_max + 1)
    v = np.array([pca_residual_mse(returns, int(n)) for n in n_values])
    if np.any(v <= max(1e-14 * v[0], 0.0)):
        raise DataError(
            "residual mean square hits zero at or before n_max; panel is "
            "degenerate for these criteria"
        )
    rows = np.array([ic_values(v[n], int(n), n_series, t) for n in n_values])
    return CriteriaTable(n_values=n_values, ic1=rows[:, 0], ic2=rows[:, 1],
                         ic3=rows[:, 2])


def bic(loglik: float, k_params: int, t_obs: int) -> float:
    """Bayesian information criterion -2 loglik + k ln(T)."""
    if t_obs < 1:
        raise DataError("t_obs must be at least 1")
    return -2.0 * loglik + k_params * math.log(t_obs)


@dataclass(frozen=True)
class OrderCandidate:
    p: int
    q: int
    loglik: float | None
    bic: float | None
    error: str | None


def order_search(returns: ReturnsPanel, n: int, p_grid, q_grid,
                 opts=None, jobs: int = 1) -> list[OrderCandidate]:
    """Fit every (p, q) candidate and score it by BIC; failures are recorded.

    The parameter count charged to BIC is every free scalar of the model:
    S n loadings + S sigmas + n^2 p VAR coefficients + S q AR coefficients.
    """
    from .estimation import FitOptions, fit_mle  # local import: avoids cycle

    p_grid = [int(p) for p in p_grid]
    q_grid = [int(q) for q in q_grid]
    if not p_grid or not q_grid:
        raise DataError("order grids must be nonempty")
    opts = opts or FitOptions()
    t_obs = returns.n_dates

    def fit_one(pq):
        p, q = pq
        spec = DFMSpec(n=n, p=p, q=q, s=returns.n_series)
        try:
            fitted = fit_mle(returns, spec, opts)
        except (DataError, NumericalError, np.linalg.LinAlgError) as exc:
            return OrderCandidate(p, q, None, None, str(exc))
        return OrderCandidate(
            p, q, fitted.loglik, bic(fitted.loglik, spec.n_free_params, t_obs), None
        )

    grid = [(p, q) for p in p_grid for q in q_grid]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fit_one, grid))
    return [fit_one(pq) for pq in grid]


def select_order(returns: ReturnsPanel, n: int, p_grid, q_grid,
                 opts=None, jobs: int = 1) -> tuple[int, int]:
    """Grid point minimizing BIC; ties broken by smaller p+q, then smaller p."""
    candidates = order_search(returns, n, p_grid, q_grid, opts=opts, jobs=jobs)
    failed = [c for c in candidates if c.bic is None]
    for c in failed:
        warnings.warn(f"order candidate (p={c.p}, q={c.q}) failed: {c.error}",
                      stacklevel=2)
    scored = [c for c in candidates if c.bic is not None]
    if not scored:
        raise NumericalError("every order candidate failed to fit")
    best = min(scored, key=lambda c: (c.bic, c.p + c.q, c.p))
    return best.p, best.q
