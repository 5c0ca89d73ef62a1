"""Exact filtering, smoothing, and log-likelihood for the assembled model.

Missing observations are NaN entries: the corresponding measurement rows are
deleted before each update, and a fully missing time step contributes zero to
the log-likelihood.  Infinities are rejected.  By default the filter starts
from the stationary state distribution (mean zero, Lyapunov covariance) and
falls back to a diffuse diagonal when the transition matrix is unstable, as
happens for interim parameter values during optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import pinvh

from . import _kalman_core as core
from .exceptions import DataError, NumericalError
from .statespace import STATIONARITY_TOL, StateSpaceModel, spectral_radius, stationary_state_covariance

DIFFUSE_VARIANCE = 1e7


@dataclass(frozen=True)
class FilterResult:
    pred_mean: np.ndarray     # (T, d) state means given data up to t-1
    pred_cov: np.ndarray      # (T, d, d)
    filt_mean: np.ndarray     # (T, d) state means given data up to t
    filt_cov: np.ndarray      # (T, d, d)
    loglik_terms: np.ndarray  # (T,) per-step Gaussian log-densities
    loglik: float


@dataclass(frozen=True)
class SmootherResult:
    smooth_mean: np.ndarray  # (T, d) state means given the full sample
    smooth_cov: np.ndarray   # (T, d, d)


def default_initialization(model: StateSpaceModel) -> tuple[np.ndarray, np.ndarray]:
    """Stationary initial state; diffuse diagonal if the model is unstable."""
    d = model.state_dim
    if spectral_radius(model.transit) < 1.0 - STATIONARITY_TOL:
        return np.zeros(d), stationary_state_covariance(model)
    return np.zeros(d), DIFFUSE_VARIANCE * np.eye(d)


def _prepare(model, obs, init):
    obs = np.ascontiguousarray(np.asarray(obs, dtype=float))
    if obs.ndim != 2:
        raise DataError("observations must be a T x S grid")
    if obs.shape[1] != model.n_series:
        raise DataError(
            f"observation width {obs.shape[1]} does not match model series count "
            f"{model.n_series}"
        )
    if np.isinf(obs).any():
        raise DataError("observations contain non-finite (infinite) values")
    if init is None:
        mean0, cov0 = default_initialization(model)
    else:
        mean0, cov0 = init
        mean0 = np.asarray(mean0, dtype=float)
        cov0 = np.asarray(cov0, dtype=float)
        if mean0.shape != (model.state_dim,) or cov0.shape != (model.state_dim,) * 2:
            raise DataError("initial state dimensions do not match the model")
        if np.min(np.linalg.eigvalsh(0.5 * (cov0 + cov0.T))) < -1e-8:
            raise DataError("initial covariance must be positive semidefinite")
    mats = tuple(
        np.ascontiguousarray(np.asarray(a, dtype=float))
        for a in (model.measure, model.transit, model.measure_noise, model.state_noise)
    )
    return mats, obs, np.ascontiguousarray(mean0), np.ascontiguousarray(cov0)


def kalman_filter(model: StateSpaceModel, obs, init=None) -> FilterResult:
    """Forward recursions with per-step prediction and Joseph-form update.

    ``init`` optionally gives the pre-sample state distribution as a
    (mean, covariance) pair; the first prediction propagates it one step.
    """
    mats, obs, mean0, cov0 = _prepare(model, obs, init)
    t_obs = obs.shape[0]
    d = model.state_dim
    if t_obs == 0:
        empty_cov = np.zeros((0, d, d))
        empty_mean = np.zeros((0, d))
        return FilterResult(empty_mean, empty_cov, empty_mean.copy(), empty_cov.copy(),
                            np.zeros(0), 0.0)
    pred_mean, pred_cov, filt_mean, filt_cov, ll_terms, status = core.filter_full(
        *mats, obs, mean0, cov0
    )
    if status == core.STATUS_SINGULAR:
        raise NumericalError(
            "innovation covariance is numerically singular beyond the jitter budget"
        )
    return FilterResult(pred_mean, pred_cov, filt_mean, filt_cov, ll_terms,
                        float(ll_terms.sum()))


def kalman_smoother(model: StateSpaceModel, filt: FilterResult,
                    pinv_rtol: float | None = None) -> SmootherResult:
    """Backward gain recursions; terminal step equals the filtered values.

    The gain inverts the one-step prediction covariance through a
    tolerance-controlled pseudo-inverse since companion models routinely make
    it singular.
    """
    t_obs = filt.filt_mean.shape[0]
    smooth_mean = filt.filt_mean.copy()
    smooth_cov = filt.filt_cov.copy()
    if t_obs <= 1:
        return SmootherResult(smooth_mean, smooth_cov)
    transit_t = model.transit.T
    for t in range(t_obs - 2, -1, -1):
        pinv = pinvh(filt.pred_cov[t + 1], rtol=pinv_rtol)
        gain = filt.filt_cov[t] @ transit_t @ pinv
        smooth_mean[t] = filt.filt_mean[t] + gain @ (
            smooth_mean[t + 1] - filt.pred_mean[t + 1]
        )
        cov = filt.filt_cov[t] + gain @ (
            smooth_cov[t + 1] - filt.pred_cov[t + 1]
        ) @ gain.T
        smooth_cov[t] = 0.5 * (cov + cov.T)
    return SmootherResult(smooth_mean, smooth_cov)


def log_likelihood(model: StateSpaceModel, obs, init=None,
                   steady_state_tol: float = 0.0) -> float:
    """Sum of per-step innovation log-densities.

    ``steady_state_tol`` > 0 freezes gains once the covariance recursion has
    converged to that relative tolerance (used by the fitter); zero keeps the
    recursion exact at every step.
    """
    mats, obs, mean0, cov0 = _prepare(model, obs, init)
    if obs.shape[0] == 0:
        return 0.0
    return _loglik_unchecked(*mats, obs, mean0, cov0, steady_state_tol)


def _loglik_unchecked(measure, transit, measure_noise, state_noise, obs,
                      mean0, cov0, steady_state_tol) -> float:
    """Kernel call without input re-validation; all arrays must be
    float64 C-contiguous with matching shapes (the optimizer hot path)."""
    value, status = core.loglik_only(
        measure, transit, measure_noise, state_noise, obs, mean0, cov0,
        steady_state_tol,
    )
    if status == core.STATUS_SINGULAR:
        raise NumericalError(
            "innovation covariance is numerically singular beyond the jitter budget"
        )
    return float(value)
