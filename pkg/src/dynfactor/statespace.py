"""Dynamic factor model parameterization and its state-space assembly.

A panel of S return series is modeled as loadings times a vector of n latent
common factors plus per-series idiosyncratic factors.  The common factors
follow a VAR(p) with unit-covariance Gaussian innovations; each idiosyncratic
factor follows an AR(q) with unit Gaussian innovations scaled by a per-series
sigma.  Stacking current and lagged factors yields a first-order linear
Gaussian state-space model with

    measurement  y_t = M x_t            (no measurement noise)
    transition   x_t = T x_{t-1} + eta_t,   eta_t ~ N(0, state_noise)

with state x_t = [F_t, ..., F_{t-p+1}, Z~_t, ..., Z~_{t-q'+1}] where
Z~_t = sigma * Z_t and q' = max(q, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .exceptions import DataError, NumericalError

# Spectral radii at or above this are treated as non-stationary.
STATIONARITY_TOL = 1e-8


@dataclass(frozen=True)
class DFMSpec:
    """Model orders: n common factors, VAR(p) factors, AR(q) idiosyncratics, S series."""

    n: int
    p: int
    q: int
    s: int

    def __post_init__(self):
        if self.n < 1:
            raise DataError(f"need at least one common factor, got n={self.n}")
        if self.p < 1:
            raise DataError(f"factor VAR order must be >= 1, got p={self.p}")
        if self.q < 0:
            raise DataError(f"idiosyncratic AR order must be >= 0, got q={self.q}")
        if self.s < 1:
            raise DataError(f"need at least one series, got s={self.s}")

    @property
    def state_dim(self) -> int:
        return self.n * self.p + self.s * max(self.q, 1)

    @property
    def n_free_params(self) -> int:
        """Count of estimable scalars: loadings, sigmas, VAR and AR coefficients."""
        return self.s * self.n + self.s + self.n**2 * self.p + self.s * self.q


@dataclass(frozen=True)
class DFMParams:
    """All estimable quantities of the model.

    beta : (S, n) loadings; the top n-by-n block is lower-triangular with a
        nonnegative diagonal (identification).
    sigma : (S,) positive idiosyncratic scales.
    lam : list of p (n, n) VAR coefficient matrices for the common factors.
    psi : list of q (S,) arrays; psi[j][i] is the lag-(j+1) AR coefficient of
        series i's idiosyncratic factor.
    """

    beta: np.ndarray
    sigma: np.ndarray
    lam: list[np.ndarray] = field(default_factory=list)
    psi: list[np.ndarray] = field(default_factory=list)

    def spec(self) -> DFMSpec:
        s, n = self.beta.shape
        return DFMSpec(n=n, p=len(self.lam), q=len(self.psi), s=s)

    def validate(self) -> None:
        """Raise DataError unless all invariants hold."""
        s, n = self.beta.shape
        if self.sigma.shape != (s,):
            raise DataError("sigma must have one entry per series")
        if np.any(self.sigma <= 0):
            raise DataError("sigma entries must be strictly positive")
        for j, lam_j in enumerate(self.lam):
            if lam_j.shape != (n, n):
                raise DataError(f"lambda[{j}] must be {n}x{n}")
        for j, psi_j in enumerate(self.psi):
            if psi_j.shape != (s,):
                raise DataError(f"psi[{j}] must have one entry per series")
        top = self.beta[:n, :n]
        if n > 1 and np.any(top[np.triu_indices(n, k=1)] != 0.0):
            raise DataError("top block of beta must be lower-triangular")
        if np.any(np.diag(top) < 0):
            raise DataError("diagonal of beta's top block must be nonnegative")
        report = check_stationarity(self)
        if not report.stationary:
            raise DataError(
                "parameters are not stationary: factor radius "
                f"{report.factor_radius:.6f}, idiosyncratic radius "
                f"{report.idio_radius:.6f}"
            )


@dataclass(frozen=True)
class StateSpaceModel:
    """Measurement/transition matrices with noise covariances, companion form."""

    measure: np.ndarray        # (S, d)
    transit: np.ndarray        # (d, d)
    measure_noise: np.ndarray  # (S, S), exactly zero for assembled DFMs
    state_noise: np.ndarray    # (d, d)

    @property
    def n_series(self) -> int:
        return self.measure.shape[0]

    @property
    def state_dim(self) -> int:
        return self.transit.shape[0]


@dataclass(frozen=True)
class StationarityReport:
    factor_radius: float
    idio_radius: float
    stationary: bool


def var_companion(coeffs: list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Companion matrix of a VAR: coefficient blocks on top, shift identity below."""
    coeffs = [np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs]
    n = coeffs[0].shape[0]
    p = len(coeffs)
    comp = np.zeros((n * p, n * p))
    comp[:n, :] = np.hstack(coeffs)
    if p > 1:
        comp[n:, :-n] = np.eye(n * (p - 1))
    return comp


def spectral_radius(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def check_stationarity(params: DFMParams) -> StationarityReport:
    """Spectral radii of the factor and per-series idiosyncratic companions."""
    factor_radius = spectral_radius(var_companion(params.lam))
    idio_radius = 0.0
    if params.psi:
        s = params.beta.shape[0]
        psi_mat = np.column_stack(params.psi)  # (S, q)
        for i in range(s):
            comp = var_companion([np.array([[c]]) for c in psi_mat[i]])
            idio_radius = max(idio_radius, spectral_radius(comp))
    stationary = max(factor_radius, idio_radius) < 1.0 - STATIONARITY_TOL
    return StationarityReport(factor_radius, idio_radius, stationary)


def assemble_state_space(params: DFMParams, spec: DFMSpec | None = None) -> StateSpaceModel:
    """Build companion-form measurement/transition matrices and noise covariances.

    The measurement matrix is [beta 0 ... 0 | I_S 0 ... 0]; the transition
    matrix stacks the VAR coefficient blocks with factor shift identities and
    the diagonal AR coefficient blocks with idiosyncratic shift identities.
    Measurement noise is exactly zero; state noise is block-diagonal with an
    identity on the current-factor block and sigma^2 on the current
    idiosyncratic block.
    """
    if spec is None:
        spec = params.spec()
    derived = params.spec()
    if (derived.n, derived.p, derived.q, derived.s) != (spec.n, spec.p, spec.q, spec.s):
        raise DataError(f"params imply spec {derived}, expected {spec}")

    n, p, q, s = spec.n, spec.p, spec.q, spec.s
    qq = max(q, 1)
    d = spec.state_dim
    idio = n * p  # offset of the current idiosyncratic block

    measure = np.zeros((s, d))
    measure[:, :n] = params.beta
    measure[:, idio:idio + s] = np.eye(s)

    transit = np.zeros((d, d))
    for j, lam_j in enumerate(params.lam):
        transit[:n, j * n:(j + 1) * n] = lam_j
    if p > 1:
        transit[n:idio, :n * (p - 1)] = np.eye(n * (p - 1))
    for j, psi_j in enumerate(params.psi):
        block = idio + j * s
        transit[idio:idio + s, block:block + s] = np.diag(psi_j)
    if qq > 1:
        transit[idio + s:, idio:idio + s * (qq - 1)] = np.eye(s * (qq - 1))

    state_noise = np.zeros((d, d))
    state_noise[:n, :n] = np.eye(n)
    state_noise[idio:idio + s, idio:idio + s] = np.diag(params.sigma**2)

    return StateSpaceModel(
        measure=measure,
        transit=transit,
        measure_noise=np.zeros((s, s)),
        state_noise=state_noise,
    )


def disassemble_state_space(model: StateSpaceModel, spec: DFMSpec) -> DFMParams:
    """Exact inverse of assemble_state_space (bit-for-bit on round trip)."""
    n, p, q, s = spec.n, spec.p, spec.q, spec.s
    idio = n * p
    beta = model.measure[:, :n].copy()
    sigma = np.sqrt(np.diag(model.state_noise)[idio:idio + s].copy())
    lam = [model.transit[:n, j * n:(j + 1) * n].copy() for j in range(p)]
    psi = [
        np.diag(model.transit[idio:idio + s, idio + j * s:idio + (j + 1) * s]).copy()
        for j in range(q)
    ]
    return DFMParams(beta=beta, sigma=sigma, lam=lam, psi=psi)


def stationary_state_covariance(model: StateSpaceModel) -> np.ndarray:
    """Solve the discrete Lyapunov equation P = T P T' + state_noise.

    Requires the transition matrix to be stable; houses the stationary factor
    covariance (top-left block) and the idiosyncratic variances (diagonal of
    the current idiosyncratic block).
    """
    radius = spectral_radius(model.transit)
    if radius >= 1.0 - STATIONARITY_TOL:
        raise NumericalError(
            f"transition spectral radius {radius:.8f} is not inside the unit circle"
        )
    method = "direct" if model.state_dim <= 40 else "bilinear"
    cov = solve_discrete_lyapunov(model.transit, model.state_noise, method=method)
    return 0.5 * (cov + cov.T)


def implied_return_variance(params: DFMParams, spec: DFMSpec | None = None) -> np.ndarray:
    """Stationary per-series return variance beta' Sigma_F beta + sigma^2 sigma_Z^2."""
    if spec is None:
        spec = params.spec()
    model = assemble_state_space(params, spec)
    cov = stationary_state_covariance(model)
    n, idio = spec.n, spec.n * spec.p
    sigma_f = cov[:n, :n]
    idio_var = np.diag(cov)[idio:idio + spec.s]
    common = np.einsum("ij,jk,ik->i", params.beta, sigma_f, params.beta)
    return common + idio_var


def params_to_json(params: DFMParams, spec: DFMSpec | None = None) -> str:
    """Serialize parameters with a spec header; arrays stored row-major."""
    if spec is None:
        spec = params.spec()
    payload = {
        "spec": {"n": spec.n, "p": spec.p, "q": spec.q, "s": spec.s},
        "beta": params.beta.tolist(),
        "sigma": params.sigma.tolist(),
        "lambda": [lam.tolist() for lam in params.lam],
        "psi": [psi.tolist() for psi in params.psi],
    }
    return json.dumps(payload, indent=2)


def params_from_json(text: str) -> tuple[DFMParams, DFMSpec]:
    try:
        payload = json.loads(text)
        spec = DFMSpec(**payload["spec"])
        params = DFMParams(
            beta=np.asarray(payload["beta"], dtype=float),
            sigma=np.asarray(payload["sigma"], dtype=float),
            lam=[np.asarray(m, dtype=float) for m in payload["lambda"]],
            psi=[np.asarray(v, dtype=float) for v in payload["psi"]],
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed parameter JSON: {exc}") from exc
    if params.spec() != spec:
        raise DataError("parameter arrays do not match the spec header")
    return params, spec
