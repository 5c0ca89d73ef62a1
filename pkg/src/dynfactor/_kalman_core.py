"""Numba kernels for the Kalman recursions.

Compiled lazily and cached on disk.  The lean likelihood kernel optionally
freezes the covariance recursion once successive prediction covariances agree
to within ``steady_tol`` (relative), which collapses per-step cost to the mean
update; this only engages on fully observed rows and is exact to the chosen
tolerance.  Cholesky factorization carries a jitter ladder because the models
have zero measurement noise, so the innovation covariance inherits any
near-singularity of the state covariance.
"""

import numpy as np
from numba import njit

LOG2PI = np.log(2.0 * np.pi)

STATUS_OK = 0
STATUS_SINGULAR = 1

# Relative jitter ladder: start at 1e-10 of the mean diagonal, escalate
# tenfold up to 1e-6 before giving up.
JITTER_START = 1e-10
JITTER_MAX = 1e-6


@njit(cache=True, nogil=True)
def _cholesky(a, lower):
    """Lower Cholesky factor of ``a`` into ``lower``; False if not PD."""
    m = a.shape[0]
    for i in range(m):
        for j in range(m):
            lower[i, j] = 0.0
    for j in range(m):
        s = a[j, j]
        for k in range(j):
            s -= lower[j, k] * lower[j, k]
        if s <= 0.0 or not np.isfinite(s):
            return False
        ljj = np.sqrt(s)
        lower[j, j] = ljj
        for i in range(j + 1, m):
            t = a[i, j]
            for k in range(j):
                t -= lower[i, k] * lower[j, k]
            lower[i, j] = t / ljj
    return True


@njit(cache=True, nogil=True)
def _cholesky_jittered(a, lower):
    """Factor with escalating diagonal jitter; returns success flag."""
    if _cholesky(a, lower):
        return True
    m = a.shape[0]
    tr = 0.0
    for i in range(m):
        tr += a[i, i]
    base = tr / m
    if base <= 0.0 or not np.isfinite(base):
        base = 1.0
    eps = JITTER_START
    while eps <= JITTER_MAX * 1.0000001:
        bumped = a.copy()
        for i in range(m):
            bumped[i, i] += eps * base
        if _cholesky(bumped, lower):
            return True
        eps *= 10.0
    return False


@njit(cache=True, nogil=True)
def _solve_chol(lower, b):
    """Solve (L L') x = b for matrix b of shape (m, k)."""
    m, k = b.shape
    x = b.copy()
    for col in range(k):
        for i in range(m):
            s = x[i, col]
            for t in range(i):
                s -= lower[i, t] * x[t, col]
            x[i, col] = s / lower[i, i]
        for i in range(m - 1, -1, -1):
            s = x[i, col]
            for t in range(i + 1, m):
                s -= lower[t, i] * x[t, col]
            x[i, col] = s / lower[i, i]
    return x


@njit(cache=True, nogil=True)
def _forward_sub(lower, v):
    """Solve L w = v for a vector v."""
    m = v.shape[0]
    w = v.copy()
    for i in range(m):
        s = w[i]
        for t in range(i):
            s -= lower[i, t] * w[t]
        w[i] = s / lower[i, i]
    return w


@njit(cache=True, nogil=True)
def _log_det_from_chol(lower):
    m = lower.shape[0]
    s = 0.0
    for i in range(m):
        s += np.log(lower[i, i])
    return 2.0 * s


@njit(cache=True, nogil=True)
def _symmetrize(a):
    m = a.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            v = 0.5 * (a[i, j] + a[j, i])
            a[i, j] = v
            a[j, i] = v


@njit(cache=True, nogil=True)
def _max_abs_diff(a, b):
    m = a.shape[0]
    best = 0.0
    for i in range(m):
        for j in range(m):
            v = abs(a[i, j] - b[i, j])
            if v > best:
                best = v
    return best


@njit(cache=True, nogil=True)
def _update_step(row_obs, mt, rt, pred_mean, pred_cov, lower_buf):
    """Measurement update on the observed sub-vector.

    Returns (filt_mean, filt_cov, kt, ll_term, ok) with kt = S^{-1} M P so the
    gain is kt' and the mean update is pred_mean + v @ kt.  The covariance
    update uses the Joseph stabilized form.
    """
    d = pred_cov.shape[0]
    m = mt.shape[0]
    innov_cov = np.dot(np.dot(mt, pred_cov), mt.T.copy()) + rt
    _symmetrize(innov_cov)
    if not _cholesky_jittered(innov_cov, lower_buf):
        return pred_mean, pred_cov, np.zeros((m, d)), 0.0, False
    v = row_obs - np.dot(mt, pred_mean)
    w = _forward_sub(lower_buf, v)
    quad = 0.0
    for i in range(m):
        quad += w[i] * w[i]
    ll_term = -0.5 * (m * LOG2PI + _log_det_from_chol(lower_buf) + quad)

    kt = _solve_chol(lower_buf, np.dot(mt, pred_cov))  # (m, d)
    filt_mean = pred_mean + np.dot(v, kt)
    a_mat = np.eye(d) - np.dot(kt.T.copy(), mt)
    filt_cov = np.dot(np.dot(a_mat, pred_cov), a_mat.T.copy())
    gain = kt.T.copy()
    filt_cov += np.dot(np.dot(gain, rt), gain.T.copy())
    _symmetrize(filt_cov)
    return filt_mean, filt_cov, kt, ll_term, True


@njit(cache=True, nogil=True)
def filter_full(measure, transit, measure_noise, state_noise, obs, init_mean, init_cov):
    """Exact filter storing every prediction/update moment.

    Missing entries are NaN; their measurement rows are deleted before the
    update and a fully missing row contributes zero log-likelihood.
    Returns (pred_mean, pred_cov, filt_mean, filt_cov, ll_terms, status).
    """
    t_obs, n_series = obs.shape
    d = transit.shape[0]
    pred_mean = np.zeros((t_obs, d))
    pred_cov = np.zeros((t_obs, d, d))
    filt_mean = np.zeros((t_obs, d))
    filt_cov = np.zeros((t_obs, d, d))
    ll_terms = np.zeros(t_obs)
    lower_buf = np.zeros((n_series, n_series))

    transit_t = transit.T.copy()
    mean = init_mean.copy()
    cov = init_cov.copy()
    for t in range(t_obs):
        pm = np.dot(transit, mean)
        pc = np.dot(np.dot(transit, cov), transit_t) + state_noise
        _symmetrize(pc)
        pred_mean[t] = pm
        pred_cov[t] = pc

        row = obs[t]
        n_obs = 0
        for i in range(n_series):
            if not np.isnan(row[i]):
                n_obs += 1
        if n_obs == 0:
            mean = pm
            cov = pc.copy()
        elif n_obs == n_series:
            mean, cov, _, ll, ok = _update_step(
                row, measure, measure_noise, pm, pc, lower_buf
            )
            if not ok:
                return pred_mean, pred_cov, filt_mean, filt_cov, ll_terms, STATUS_SINGULAR
            ll_terms[t] = ll
        else:
            idx = np.empty(n_obs, dtype=np.int64)
            k = 0
            for i in range(n_series):
                if not np.isnan(row[i]):
                    idx[k] = i
                    k += 1
            mt = measure[idx, :]
            rt = measure_noise[idx, :][:, idx]
            sub_lower = np.zeros((n_obs, n_obs))
            mean, cov, _, ll, ok = _update_step(row[idx], mt, rt, pm, pc, sub_lower)
            if not ok:
                return pred_mean, pred_cov, filt_mean, filt_cov, ll_terms, STATUS_SINGULAR
            ll_terms[t] = ll
        filt_mean[t] = mean
        filt_cov[t] = cov
    return pred_mean, pred_cov, filt_mean, filt_cov, ll_terms, STATUS_OK


@njit(cache=True, nogil=True)
def loglik_only(measure, transit, measure_noise, state_noise, obs, init_mean,
                init_cov, steady_tol):
    """Log-likelihood without storage; optional steady-state freeze.

    Returns (loglik, status).
    """
    t_obs, n_series = obs.shape
    d = transit.shape[0]
    lower_buf = np.zeros((n_series, n_series))
    transit_t = transit.T.copy()

    mean = init_mean.copy()
    cov = init_cov.copy()
    prev_pc = np.zeros((d, d))
    have_prev = False
    steady = False
    kt_cached = np.zeros((n_series, d))
    logdet_cached = 0.0
    pm_buf = np.zeros(d)
    pc_frozen = np.zeros((d, d))
    lower_frozen = np.zeros((n_series, n_series))

    total = 0.0
    for t in range(t_obs):
        row = obs[t]
        n_obs = 0
        for i in range(n_series):
            if not np.isnan(row[i]):
                n_obs += 1

        if steady and n_obs == n_series:
            pm = np.dot(transit, mean)
            v = row - np.dot(measure, pm)
            w = _forward_sub(lower_frozen, v)
            quad = 0.0
            for i in range(n_series):
                quad += w[i] * w[i]
            total += -0.5 * (n_series * LOG2PI + logdet_cached + quad)
            mean = pm + np.dot(v, kt_cached)
            continue
        if steady:
            # Pattern broke: resume the exact recursion from the frozen state.
            steady = False
            have_prev = False
            cov = pc_frozen.copy()  # frozen filtered covariance

        pm = np.dot(transit, mean)
        pc = np.dot(np.dot(transit, cov), transit_t) + state_noise
        _symmetrize(pc)

        if n_obs == 0:
            mean = pm
            cov = pc
            have_prev = False
            continue
        if n_obs == n_series:
            mean, cov, kt, ll, ok = _update_step(
                row, measure, measure_noise, pm, pc, lower_buf
            )
            if not ok:
                return np.nan, STATUS_SINGULAR
            total += ll
            if steady_tol > 0.0:
                if have_prev:
                    scale = 1.0 + np.max(np.abs(pc))
                    if _max_abs_diff(pc, prev_pc) <= steady_tol * scale:
                        steady = True
                        kt_cached = kt
                        logdet_cached = _log_det_from_chol(lower_buf)
                        lower_frozen = lower_buf.copy()
                        pc_frozen = cov.copy()
                prev_pc = pc
                have_prev = True
        else:
            idx = np.empty(n_obs, dtype=np.int64)
            k = 0
            for i in range(n_series):
                if not np.isnan(row[i]):
                    idx[k] = i
                    k += 1
            mt = measure[idx, :]
            rt = measure_noise[idx, :][:, idx]
            sub_lower = np.zeros((n_obs, n_obs))
            mean, cov, _, ll, ok = _update_step(row[idx], mt, rt, pm, pc, sub_lower)
            if not ok:
                return np.nan, STATUS_SINGULAR
            total += ll
            have_prev = False
    return total, STATUS_OK


def warmup():
    """Trigger compilation of both kernels on a trivial model."""
    measure = np.array([[1.0]])
    transit = np.array([[0.5]])
    noise = np.array([[0.0]])
    state_noise = np.array([[1.0]])
    obs = np.array([[0.1], [np.nan], [0.2]])
    init_mean = np.zeros(1)
    init_cov = np.array([[1.0]])
    filter_full(measure, transit, noise, state_noise, obs, init_mean, init_cov)
    loglik_only(measure, transit, noise, state_noise, obs, init_mean, init_cov, 1e-13)
