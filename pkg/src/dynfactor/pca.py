"""Principal components of a returns panel.

Serves as the baseline factor extractor, the initializer for maximum
likelihood fits, and the residual engine behind the factor-count criteria.
Missing entries are imputed with zero (the centered per-series mean) for
these purposes only; the Kalman path handles missingness exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .panels import ReturnsPanel


@dataclass(frozen=True)
class PCAResult:
    eigenvalues: np.ndarray   # (k,) descending covariance eigenvalues
    loadvectors: np.ndarray   # (S, k) unit eigenvectors, sign-fixed
    components: np.ndarray    # (T, k) component scores X @ a


def _matrix(returns: ReturnsPanel, impute: bool) -> np.ndarray:
    x = np.array(returns.returns, dtype=float)
    if np.isnan(x).any():
        if not impute:
            raise DataError("panel has missing entries; impute or use pairwise mode")
        x = np.where(np.isnan(x), 0.0, x)
    return x


def sample_covariance(returns: ReturnsPanel, pairwise: bool = False) -> np.ndarray:
    """Unbiased (T-1 denominator) sample covariance of the panel.

    With ``pairwise`` each entry uses the rows where both series are present;
    otherwise missing entries are rejected.
    """
    t, s = returns.returns.shape
    if t < 2:
        raise DataError("need at least 2 time rows for a covariance")
    if np.isnan(returns.returns).all(axis=0).any():
        raise DataError("a series is entirely missing")
    if pairwise:
        frame_cov = np.asarray(
            np.ma.cov(np.ma.masked_invalid(returns.returns), rowvar=False, ddof=1)
        )
        return 0.5 * (frame_cov + frame_cov.T)
    x = _matrix(returns, impute=False)
    x = x - x.mean(axis=0)
    cov = x.T @ x / (t - 1)
    return 0.5 * (cov + cov.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def principal_components(
    returns: ReturnsPanel, k: int, use_correlation: bool = False
) -> PCAResult:
    """Top-k eigenpairs of the panel covariance and the implied score series.

    Eigenvalues come out descending; each loadvector has unit norm with its
    largest-magnitude entry positive so output is deterministic.
    """
    t, s = returns.returns.shape
    if not 1 <= k <= min(s, t):
        raise DataError(f"k={k} out of range for a {t}x{s} panel")
    x = _matrix(returns, impute=True)
    x = x - x.mean(axis=0)
    if use_correlation:
        scale = x.std(axis=0, ddof=1)
        if np.any(scale == 0):
            raise DataError("zero-variance series; correlation PCA undefined")
        x = x / scale
    cov = x.T @ x / (t - 1)
    eigvals, eigvecs = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(eigvals)[::-1][:k]
    eigvals = eigvals[order]
    eigvecs = _fix_signs(eigvecs[:, order])
    return PCAResult(
        eigenvalues=eigvals, loadvectors=eigvecs, components=x @ eigvecs
    )


def pca_residual_mse(returns: ReturnsPanel, n: int) -> float:
    """Mean squared reconstruction residual after projecting onto n components.

    n = 0 means no factors: the residual is the centered (zero-imputed) data
    itself.
    """
    t, s = returns.returns.shape
    if not 0 <= n <= min(s, t):
        raise DataError(f"n={n} out of range for a {t}x{s} panel")
    x = _matrix(returns, impute=True)
    x = x - x.mean(axis=0)
    if n == 0:
        return float(np.mean(x**2))
    result = principal_components(returns, n)
    recon = result.components @ result.loadvectors.T
    return float(np.mean((x - recon) ** 2))
