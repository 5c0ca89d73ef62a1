"""Synthetic return panels drawn from known model parameters.

Used for recovery studies and as the generator behind most test oracles.
Paths are reproducible bit-for-bit given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .exceptions import DataError
from .panels import ReturnsPanel
from .statespace import DFMParams, DFMSpec, check_stationarity


@dataclass(frozen=True)
class SimOutput:
    returns: ReturnsPanel
    true_factors: np.ndarray  # (T, n)
    true_idio: np.ndarray     # (T, S), unit-innovation Z paths (before sigma scaling)
    seed: int


def simulate_dfm(
    params: DFMParams,
    spec: DFMSpec | None = None,
    t_obs: int = 500,
    seed: int = 0,
    burn_in: int = 500,
    start_date: str = "2015-01-01",
) -> SimOutput:
    """Advance the factor VAR and idiosyncratic ARs with seeded Gaussian noise.

    The recursion starts from zeros and discards the first ``burn_in`` rows so
    the retained sample is effectively stationary.  Observed returns are
    assembled as ``beta @ F_t + sigma * Z_t``.
    """
    if spec is None:
        spec = params.spec()
    if burn_in < 0:
        raise DataError("burn_in must be nonnegative")
    if t_obs < 1:
        raise DataError("t_obs must be positive")
    if not check_stationarity(params).stationary:
        raise DataError("cannot simulate from non-stationary parameters")

    n, p, q, s = spec.n, spec.p, spec.q, spec.s
    rng = np.random.default_rng(seed)
    total = burn_in + t_obs

    eps = rng.standard_normal((total, n))
    gam = rng.standard_normal((total, s))

    # scalar AR recursions run through lfilter (zero initial state); the
    # multivariate factor VAR falls back to an explicit loop
    if n == 1:
        coeffs = np.array([lam[0, 0] for lam in params.lam])
        factors = lfilter([1.0], np.r_[1.0, -coeffs], eps[:, 0])[:, None]
    else:
        factors = np.zeros((total, n))
        for t in range(total):
            f_t = eps[t].copy()
            for j, lam_j in enumerate(params.lam, start=1):
                if t - j >= 0:
                    f_t += lam_j @ factors[t - j]
            factors[t] = f_t
    if q > 0:
        psi_mat = np.column_stack(params.psi)  # (S, q)
        idio = np.empty((total, s))
        for i in range(s):
            idio[:, i] = lfilter([1.0], np.r_[1.0, -psi_mat[i]], gam[:, i])
    else:
        idio = gam

    factors = factors[burn_in:]
    idio = idio[burn_in:]
    returns = factors @ params.beta.T + idio * params.sigma

    if t_obs <= 60_000:
        dates = pd.bdate_range(start_date, periods=t_obs)
    else:
        # nanosecond timestamps cannot span this many business days; long
        # law-of-large-numbers paths get a coarse daily calendar instead
        dates = pd.date_range(start_date, periods=t_obs, freq="D", unit="s")
    tickers = [f"SIM{i + 1:02d}" for i in range(s)]
    panel = ReturnsPanel(
        dates=dates,
        tickers=tickers,
        returns=returns,
        means=np.zeros(s),
    )
    return SimOutput(returns=panel, true_factors=factors, true_idio=idio, seed=seed)
