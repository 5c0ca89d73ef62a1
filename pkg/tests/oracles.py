"""Brute-force reference computations for the test suite.

Everything here is deliberately independent of the package's recursive
implementations: joint-Gaussian densities are evaluated by stacking the full
state path into one multivariate normal, and random stable parameters are
drawn directly with spectral rescaling rather than through the package's
reparameterization.
"""

import numpy as np

from dynfactor.statespace import DFMParams, StateSpaceModel

LOG2PI = np.log(2.0 * np.pi)


def stacked_state_covariance(transit, state_noise, init_cov, t_obs):
    """Covariance of [X_1, ..., X_T] with X_1 = T X_0 + eta, X_0 ~ N(0, init_cov)."""
    d = transit.shape[0]
    diag_blocks = []
    cov = transit @ init_cov @ transit.T + state_noise
    for _ in range(t_obs):
        diag_blocks.append(cov)
        cov = transit @ cov @ transit.T + state_noise
    big = np.zeros((t_obs * d, t_obs * d))
    for s in range(t_obs):
        big[s * d:(s + 1) * d, s * d:(s + 1) * d] = diag_blocks[s]
        block = diag_blocks[s]
        for t in range(s + 1, t_obs):
            block = block @ transit.T  # Cov(X_s, X_t) = Cov(X_s, X_{t-1}) T'
            big[s * d:(s + 1) * d, t * d:(t + 1) * d] = block
            big[t * d:(t + 1) * d, s * d:(s + 1) * d] = block.T
    return big


def _stacked_obs_pieces(model: StateSpaceModel, obs, init_cov):
    t_obs, n_series = obs.shape
    d = model.state_dim
    big_x = stacked_state_covariance(model.transit, model.state_noise,
                                     init_cov, t_obs)
    sel = np.kron(np.eye(t_obs), model.measure)
    big_y = sel @ big_x @ sel.T + np.kron(np.eye(t_obs), model.measure_noise)
    y = obs.ravel()
    keep = np.isfinite(y)
    return big_x, sel, big_y, y, keep


def joint_gaussian_loglik(model: StateSpaceModel, obs, init_cov) -> float:
    """Log-density of the observed entries under the exact stacked Gaussian."""
    _, _, big_y, y, keep = _stacked_obs_pieces(model, obs, init_cov)
    yk = y[keep]
    if yk.size == 0:
        return 0.0
    cov = big_y[np.ix_(keep, keep)]
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0, "stacked observation covariance must be positive definite"
    quad = yk @ np.linalg.solve(cov, yk)
    return float(-0.5 * (yk.size * LOG2PI + logdet + quad))


def joint_gaussian_conditioning(model: StateSpaceModel, obs, init_cov):
    """E[X_t | all observed Y] and Cov(X_t | all observed Y) for every t."""
    big_x, sel, big_y, y, keep = _stacked_obs_pieces(model, obs, init_cov)
    t_obs = obs.shape[0]
    d = model.state_dim
    yk = y[keep]
    cov = big_y[np.ix_(keep, keep)]
    cross = (big_x @ sel.T)[:, keep]
    solve = np.linalg.solve(cov, cross.T)  # (kept, T d)
    mean_all = cross @ np.linalg.solve(cov, yk)
    cov_all = big_x - cross @ solve
    means = mean_all.reshape(t_obs, d)
    covs = np.stack([cov_all[t * d:(t + 1) * d, t * d:(t + 1) * d]
                     for t in range(t_obs)])
    return means, covs


def scale_to_radius(coeffs, target, eigfun):
    """Rescale lag blocks geometrically until the companion radius <= target."""
    coeffs = [c.copy() for c in coeffs]
    while eigfun(coeffs) > target:
        coeffs = [0.9 ** (j + 1) * c for j, c in enumerate(coeffs)]
    return coeffs


def random_params(rng, n=1, p=1, q=1, s=4, radius=0.7) -> DFMParams:
    """Stable parameters drawn directly (no package transform involved)."""
    from dynfactor.statespace import spectral_radius, var_companion

    beta = rng.normal(0.8, 0.5, size=(s, n))
    beta[:n, :n] = np.tril(beta[:n, :n])
    diag = np.abs(np.diag(beta[:n, :n])) + 0.1
    beta[np.arange(n), np.arange(n)] = diag
    sigma = rng.uniform(0.5, 1.5, size=s)

    lam = [rng.normal(0.0, 0.4, size=(n, n)) for _ in range(p)]
    lam = scale_to_radius(lam, radius, lambda c: spectral_radius(var_companion(c)))

    psi = []
    if q > 0:
        psi_mat = rng.normal(0.0, 0.3, size=(s, q))
        for i in range(s):
            row = [np.array([[v]]) for v in psi_mat[i]]
            row = scale_to_radius(
                row, radius, lambda c: spectral_radius(var_companion(c))
            )
            psi_mat[i] = [m[0, 0] for m in row]
        psi = [psi_mat[:, j].copy() for j in range(q)]
    return DFMParams(beta=beta, sigma=sigma, lam=lam, psi=psi)


def random_generic_model(rng, d=4, s=3, with_noise=True) -> StateSpaceModel:
    """Arbitrary stable state-space model, usually with PD measurement noise."""
    transit = rng.normal(size=(d, d))
    radius = np.max(np.abs(np.linalg.eigvals(transit)))
    transit *= rng.uniform(0.3, 0.9) / max(radius, 1e-12)
    measure = rng.normal(size=(s, d))
    root = rng.normal(size=(d, d))
    state_noise = root @ root.T / d + 0.2 * np.eye(d)
    if with_noise:
        mroot = rng.normal(size=(s, s))
        measure_noise = mroot @ mroot.T / s + 0.1 * np.eye(s)
    else:
        measure_noise = np.zeros((s, s))
    return StateSpaceModel(measure=measure, transit=transit,
                           measure_noise=measure_noise, state_noise=state_noise)
