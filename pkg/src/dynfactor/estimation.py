"""Maximum-likelihood fitting of the dynamic factor model.

The fit runs a quasi-Newton optimizer over an unconstrained reparameterization
of the parameters: sigmas through log, the identification diagonal of the
loadings through softplus, and every VAR/AR coefficient block through a
partial-autocorrelation transform that keeps its companion matrix strictly
stable.  Gradients are central finite differences.  Initialization comes from
principal components; standard errors from the numerical Hessian of the
log-likelihood, delta-method mapped to the natural parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from statsmodels.tsa.statespace.tools import (
    constrain_stationary_multivariate,
    unconstrain_stationary_multivariate,
)

from .exceptions import DataError, NumericalError
from .kalman import _loglik_unchecked, kalman_filter, kalman_smoother, log_likelihood
from .panels import ReturnsPanel
from .pca import principal_components
from .statespace import DFMParams, DFMSpec, assemble_state_space, check_stationarity, var_companion, spectral_radius

SIGMA_FLOOR = 1e-4
SHRINK_TARGET = 0.995


# ---------------------------------------------------------------------------
# Stationarity-preserving AR transform (vectorized over series)
# ---------------------------------------------------------------------------

def constrain_ar(unconstrained: np.ndarray) -> np.ndarray:
    """Map rows of unconstrained reals to stationary AR coefficient rows.

    Each row is squashed into partial autocorrelations in (-1, 1) and expanded
    through the Durbin-Levinson recursion, so every output row has a companion
    spectral radius below one.
    """
    z = np.atleast_2d(np.asarray(unconstrained, dtype=float))
    r = z / np.sqrt(1.0 + z * z)
    y = np.zeros_like(r)
    for k in range(r.shape[1]):
        if k > 0:
            y[:, :k] = y[:, :k] - r[:, [k]] * y[:, :k][:, ::-1]
        y[:, k] = r[:, k]
    return y if unconstrained.ndim == 2 else y[0]


def unconstrain_ar(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of constrain_ar; requires strictly stationary rows."""
    phi = np.atleast_2d(np.asarray(coeffs, dtype=float))
    y = phi.copy()
    r = np.empty_like(phi)
    for k in range(phi.shape[1] - 1, -1, -1):
        r[:, k] = y[:, k]
        if np.any(np.abs(r[:, k]) >= 1.0):
            raise DataError("AR coefficients are not strictly stationary")
        if k > 0:
            rk = r[:, [k]]
            y[:, :k] = (y[:, :k] + rk * y[:, :k][:, ::-1]) / (1.0 - rk * rk)
    z = r / np.sqrt(1.0 - r * r)
    return z if coeffs.ndim == 2 else z[0]


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DataError("cannot pack a nonpositive identification diagonal")
    return np.where(y > 30, y, np.log(np.expm1(np.minimum(y, 30.0))))


class ParamTransform:
    """Bijection between DFMParams and an unconstrained real vector.

    Layout: free loadings (row-major, skipping the fixed upper triangle of the
    identification block), factor VAR block, idiosyncratic AR block, log
    sigmas.  The zero vector maps to valid stationary parameters.
    """

    def __init__(self, spec: DFMSpec):
        self.spec = spec
        n, s = spec.n, spec.s
        free = []
        for i in range(s):
            for j in range(n):
                if i < n and j > i:
                    continue  # fixed zero by identification
                free.append((i, j, i < n and j == i))
        self._beta_slots = free
        self.n_beta = len(free)
        self.n_lam = n * n * spec.p
        self.n_psi = s * spec.q
        self.size = self.n_beta + self.n_lam + self.n_psi + s

    def pack(self, params: DFMParams) -> np.ndarray:
        spec = self.spec
        x = np.empty(self.size)
        pos = 0
        for i, j, is_diag in self._beta_slots:
            v = params.beta[i, j]
            x[pos] = _softplus_inv(v) if is_diag else v
            pos += 1
        if spec.n == 1:
            lam_row = np.array([l[0, 0] for l in params.lam])
            x[pos:pos + self.n_lam] = unconstrain_ar(lam_row)
        else:
            stacked = np.hstack(params.lam)
            uncon = np.asarray(
                unconstrain_stationary_multivariate(stacked, np.eye(spec.n))[0]
            )
            x[pos:pos + self.n_lam] = uncon.ravel()
        pos += self.n_lam
        if spec.q > 0:
            psi_mat = np.column_stack(params.psi)  # (S, q)
            x[pos:pos + self.n_psi] = unconstrain_ar(psi_mat).ravel()
        pos += self.n_psi
        if np.any(params.sigma <= 0):
            raise DataError("cannot pack nonpositive sigma")
        x[pos:] = np.log(params.sigma)
        if not np.all(np.isfinite(x)):
            raise DataError("packed vector has non-finite entries")
        return x

    def unpack(self, x: np.ndarray, validate: bool = False) -> DFMParams:
        spec = self.spec
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise DataError(f"expected a vector of length {self.size}")
        if not np.all(np.isfinite(x)):
            raise DataError("packed vector has non-finite entries")
        n, p, q, s = spec.n, spec.p, spec.q, spec.s
        beta = np.zeros((s, n))
        pos = 0
        for i, j, is_diag in self._beta_slots:
            beta[i, j] = _softplus(x[pos]) if is_diag else x[pos]
            pos += 1
        lam_flat = x[pos:pos + self.n_lam]
        if n == 1:
            lam_row = constrain_ar(lam_flat)
            lam = [np.array([[v]]) for v in lam_row]
        else:
            cons = np.asarray(
                constrain_stationary_multivariate(
                    lam_flat.reshape(n, n * p), np.eye(n)
                )[0]
            )
            lam = [cons[:, j * n:(j + 1) * n].copy() for j in range(p)]
        pos += self.n_lam
        if q > 0:
            psi_mat = constrain_ar(x[pos:pos + self.n_psi].reshape(s, q))
            psi = [psi_mat[:, j].copy() for j in range(q)]
        else:
            psi = []
        pos += self.n_psi
        sigma = np.exp(x[pos:])
        params = DFMParams(beta=beta, sigma=sigma, lam=lam, psi=psi)
        if validate:
            params.validate()
        return params

    def natural_vector(self, params: DFMParams) -> np.ndarray:
        """Flatten parameters as beta (row-major), sigma, VAR blocks, AR columns."""
        pieces = [params.beta.ravel(), params.sigma]
        pieces += [l.ravel() for l in params.lam]
        pieces += list(params.psi)
        return np.concatenate(pieces)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _triangularize(beta: np.ndarray, scores: np.ndarray):
    """Rotate loadings/scores so the top block is lower-triangular, diag >= 0."""
    n = beta.shape[1]
    if n == 1:
        if beta[0, 0] < 0:
            beta = -beta
            scores = -scores
        return beta, scores
    q_mat, r_mat = np.linalg.qr(beta[:n, :n].T)
    rot = q_mat
    beta = beta @ rot
    scores = scores @ rot
    signs = np.sign(np.diag(beta[:n, :n]))
    signs[signs == 0] = 1.0
    beta = beta * signs
    scores = scores * signs
    beta[:n, :n][np.triu_indices(n, k=1)] = 0.0
    return beta, scores


def _lagged_design(series: np.ndarray, order: int):
    """Stack lags 1..order of a (T, k) series for least squares."""
    t = series.shape[0]
    rows = t - order
    blocks = [series[order - j - 1:t - j - 1] for j in range(order)]
    return np.hstack(blocks), series[order:], rows


def initialize_params(returns: ReturnsPanel, spec: DFMSpec) -> DFMParams:
    """PCA-based starting point, shrunk into the stationary region."""
    t, s = returns.returns.shape
    if s != spec.s:
        raise DataError(f"panel has {s} series but spec expects {spec.s}")
    x = np.where(np.isnan(returns.returns), 0.0, returns.returns)
    stds = x.std(axis=0)
    if np.any(stds == 0):
        bad = [tk for tk, sd in zip(returns.tickers, stds) if sd == 0]
        raise DataError(f"zero-variance series: {bad}")

    pca = principal_components(returns, spec.n)
    eig = np.maximum(pca.eigenvalues, 1e-12)
    beta = pca.loadvectors * np.sqrt(eig)
    scores = pca.components / np.sqrt(eig)
    beta, scores = _triangularize(beta, scores)
    diag_idx = np.arange(spec.n)
    beta[diag_idx, diag_idx] = np.maximum(beta[diag_idx, diag_idx], 1e-4)

    # factor VAR by least squares on the scores
    lam = [np.zeros((spec.n, spec.n)) for _ in range(spec.p)]
    if t > spec.p + spec.n:
        design, target, _ = _lagged_design(scores, spec.p)
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        for j in range(spec.p):
            lam[j] = coef[j * spec.n:(j + 1) * spec.n].T.copy()

    resid = x - scores @ beta.T
    psi = [np.zeros(s) for _ in range(spec.q)]
    sigma = np.maximum(resid.std(axis=0), SIGMA_FLOOR)
    if spec.q > 0 and t > spec.q + 2:
        psi_mat = np.zeros((s, spec.q))
        for i in range(s):
            design, target, _ = _lagged_design(resid[:, [i]], spec.q)
            coef, *_ = np.linalg.lstsq(design, target, rcond=None)
            psi_mat[i] = coef[:, 0]
            innov = target[:, 0] - design @ coef[:, 0]
            sigma[i] = max(innov.std(), SIGMA_FLOOR)
        # shrink each series toward zero until its companion is stable
        for i in range(s):
            comp = var_companion([np.array([[c]]) for c in psi_mat[i]])
            while spectral_radius(comp) >= SHRINK_TARGET:
                psi_mat[i] *= 0.9
                comp = var_companion([np.array([[c]]) for c in psi_mat[i]])
        psi = [psi_mat[:, j].copy() for j in range(spec.q)]

    while spectral_radius(var_companion(lam)) >= SHRINK_TARGET:
        lam = [0.9 * l for l in lam]

    params = DFMParams(beta=beta, sigma=sigma, lam=lam, psi=psi)
    params.validate()
    return params


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitOptions:
    maxiter: int = 500
    gtol: float = 1e-4            # max-norm convergence for the gradient
    ftol: float = 1e-9            # relative log-likelihood change convergence
    fd_step: float = 1e-5         # relative central-difference step
    steady_state_tol: float = 1e-13  # covariance-freeze tolerance inside the fit
    compute_std_errors: bool = False
    verbose: bool = False


@dataclass(frozen=True)
class ParamStdErrors:
    beta: np.ndarray
    sigma: np.ndarray
    lam: list[np.ndarray] = field(default_factory=list)
    psi: list[np.ndarray] = field(default_factory=list)
    beta_significant: np.ndarray | None = None


@dataclass(frozen=True)
class FittedModel:
    params: DFMParams
    spec: DFMSpec
    loglik: float
    std_errors: ParamStdErrors | None
    converged: bool
    iterations: int
    factors_filtered: np.ndarray  # (T, n)
    factors_smoothed: np.ndarray  # (T, n)


def _small_lyapunov(transit: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Direct vectorized solve of P = A P A' + Q for small blocks."""
    m = transit.shape[0]
    lhs = np.eye(m * m) - np.kron(transit, transit)
    return np.linalg.solve(lhs, noise.ravel()).reshape(m, m)


def _companion(coeff_row: np.ndarray) -> np.ndarray:
    """Scalar-AR companion matrix from a coefficient row."""
    q = coeff_row.size
    comp = np.zeros((q, q))
    comp[0, :] = coeff_row
    if q > 1:
        comp[1:, :-1] = np.eye(q - 1)
    return comp


def _stationary_init_blockwise(params: DFMParams, spec: DFMSpec):
    """Stationary state covariance assembled from the decoupled blocks.

    The transition is block-diagonal between the factor companion and the
    per-series idiosyncratic companions, so the Lyapunov equation splits into
    one small solve per block; this matters inside the optimizer loop.
    """
    n, p, q, s = spec.n, spec.p, spec.q, spec.s
    qq = max(q, 1)
    d = spec.state_dim
    cov = np.zeros((d, d))
    comp_f = var_companion(params.lam)
    noise_f = np.zeros((n * p, n * p))
    noise_f[:n, :n] = np.eye(n)
    cov[:n * p, :n * p] = _small_lyapunov(comp_f, noise_f)
    if q == 0:
        cov[n * p:, n * p:] = np.diag(params.sigma**2)
    else:
        psi_mat = np.column_stack(params.psi)
        noise_i = np.zeros((qq, qq))
        for i in range(s):
            noise_i[0, 0] = params.sigma[i] ** 2
            block = _small_lyapunov(_companion(psi_mat[i]), noise_i)
            idx = n * p + i + s * np.arange(qq)
            cov[np.ix_(idx, idx)] = block
    return np.zeros(d), 0.5 * (cov + cov.T)


def _central_diff_grad(fun, x, step):
    grad = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        grad[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


def fit_mle(returns: ReturnsPanel, spec: DFMSpec,
            opts: FitOptions = FitOptions(),
            start: DFMParams | None = None) -> FittedModel:
    """Maximize the Kalman log-likelihood over the packed parameter space.

    ``start`` overrides the PCA-based initializer (e.g. to warm-restart from
    an earlier fit).  The result never degrades the starting point: if the
    optimizer somehow ends below the starting log-likelihood, the starting
    parameters are returned with ``converged=False``.
    """
    transform = ParamTransform(spec)
    init = initialize_params(returns, spec) if start is None else start
    x0 = transform.pack(init)
    obs = np.ascontiguousarray(returns.returns)
    if np.isinf(obs).any():
        raise DataError("returns contain non-finite (infinite) values")

    def nll(x):
        try:
            params = transform.unpack(x)
            model = assemble_state_space(params, spec)
            mean0, cov0 = _stationary_init_blockwise(params, spec)
            value = _loglik_unchecked(
                model.measure, model.transit, model.measure_noise,
                model.state_noise, obs, mean0, cov0, opts.steady_state_tol,
            )
        except (NumericalError, DataError, FloatingPointError):
            return 1e12
        if not np.isfinite(value):
            return 1e12
        return -value

    def fun_and_grad(x):
        return nll(x), _central_diff_grad(nll, x, opts.fd_step)

    result = minimize(
        fun_and_grad, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": opts.maxiter, "ftol": opts.ftol,
                 "gtol": opts.gtol, "maxls": 40},
    )
    if opts.verbose:
        print(f"optimizer: {result.message} after {result.nit} iterations, "
              f"nll {result.fun:.6f}")

    def exact_loglik(params):
        model = assemble_state_space(params, spec)
        init_state = _stationary_init_blockwise(params, spec)
        return log_likelihood(model, obs, init=init_state), model, init_state

    fitted_params = transform.unpack(result.x, validate=True)
    ll_fit, model, init_state = exact_loglik(fitted_params)
    ll_init, model_init, init_state0 = exact_loglik(init)
    converged = bool(result.success)
    if not np.isfinite(ll_fit) or ll_fit < ll_init:
        fitted_params, ll_fit = init, ll_init
        model, init_state = model_init, init_state0
        converged = False

    filt = kalman_filter(model, obs, init=init_state)
    smooth = kalman_smoother(model, filt)
    n = spec.n
    fitted = FittedModel(
        params=fitted_params,
        spec=spec,
        loglik=float(ll_fit),
        std_errors=None,
        converged=converged,
        iterations=int(result.nit),
        factors_filtered=filt.filt_mean[:, :n].copy(),
        factors_smoothed=smooth.smooth_mean[:, :n].copy(),
    )
    if opts.compute_std_errors:
        fitted = replace(fitted, std_errors=standard_errors(fitted, returns, opts))
    return fitted


# ---------------------------------------------------------------------------
# Standard errors
# ---------------------------------------------------------------------------

def _numerical_hessian(fun, x, step):
    m = x.size
    hess = np.empty((m, m))
    f0 = fun(x)
    h = step * np.maximum(1.0, np.abs(x))
    for i in range(m):
        xp = x.copy()
        xp[i] += h[i]
        xm = x.copy()
        xm[i] -= h[i]
        hess[i, i] = (fun(xp) - 2.0 * f0 + fun(xm)) / h[i] ** 2
    for i in range(m):
        for j in range(i + 1, m):
            xpp = x.copy(); xpp[[i, j]] += h[[i, j]]
            xpm = x.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
            xmp = x.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
            xmm = x.copy(); xmm[[i, j]] -= h[[i, j]]
            hess[i, j] = hess[j, i] = (
                fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)
            ) / (4.0 * h[i] * h[j])
    return hess


def standard_errors(fitted: FittedModel, returns: ReturnsPanel,
                    opts: FitOptions = FitOptions()) -> ParamStdErrors:
    """Delta-method standard errors from the packed-space observed information.

    Coordinates that load on non-positive-curvature directions of the Hessian
    are reported as NaN with a warning.  Identification-fixed loadings have
    zero standard error and are never flagged significant.
    """
    if not fitted.converged:
        warnings.warn("standard errors requested for a fit that did not converge",
                      stacklevel=2)
    spec = fitted.spec
    transform = ParamTransform(spec)
    x_hat = transform.pack(fitted.params)
    obs = np.ascontiguousarray(returns.returns)

    def nll(x):
        try:
            params = transform.unpack(x)
            model = assemble_state_space(params, spec)
            mean0, cov0 = _stationary_init_blockwise(params, spec)
            value = _loglik_unchecked(
                model.measure, model.transit, model.measure_noise,
                model.state_noise, obs, mean0, cov0, 1e-15,
            )
        except (NumericalError, DataError, FloatingPointError):
            return 1e12
        return -value if np.isfinite(value) else 1e12

    hess = _numerical_hessian(nll, x_hat, step=1e-3)
    hess = 0.5 * (hess + hess.T)
    eigval, eigvec = np.linalg.eigh(hess)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(eigval))))
    bad = eigval <= tol
    if bad.any():
        warnings.warn(
            "observed information is not positive definite; affected standard "
            "errors reported as missing", stacklevel=2,
        )
    inv_eig = np.where(bad, 0.0, 1.0 / np.where(bad, 1.0, eigval))
    cov_x = (eigvec * inv_eig) @ eigvec.T

    # Jacobian of the natural parameters with respect to the packed vector
    m = x_hat.size
    theta0 = transform.natural_vector(transform.unpack(x_hat))
    jac = np.empty((theta0.size, m))
    for i in range(m):
        h = 1e-6 * max(1.0, abs(x_hat[i]))
        xp = x_hat.copy(); xp[i] += h
        xm = x_hat.copy(); xm[i] -= h
        jac[:, i] = (
            transform.natural_vector(transform.unpack(xp))
            - transform.natural_vector(transform.unpack(xm))
        ) / (2.0 * h)

    var_nat = np.einsum("ij,jk,ik->i", jac, cov_x, jac)
    se = np.sqrt(np.maximum(var_nat, 0.0))
    if bad.any():
        null_dirs = eigvec[:, bad]
        weight = np.abs(jac @ null_dirs).max(axis=1)
        se[(weight > 1e-8 * (1.0 + np.abs(theta0)))] = np.nan

    # slice the flat vector back into parameter shapes
    pos = 0
    s, n = spec.s, spec.n
    se_beta = se[pos:pos + s * n].reshape(s, n); pos += s * n
    se_sigma = se[pos:pos + s]; pos += s
    se_lam = []
    for _ in range(spec.p):
        se_lam.append(se[pos:pos + n * n].reshape(n, n)); pos += n * n
    se_psi = []
    for _ in range(spec.q):
        se_psi.append(se[pos:pos + s]); pos += s

    with np.errstate(invalid="ignore"):
        significant = np.abs(fitted.params.beta) > 1.959963984540054 * se_beta
    significant &= np.isfinite(se_beta)
    return ParamStdErrors(beta=se_beta, sigma=se_sigma, lam=se_lam, psi=se_psi,
                          beta_significant=significant)
