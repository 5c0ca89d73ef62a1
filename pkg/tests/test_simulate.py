import numpy as np
import pytest

from dynfactor.exceptions import DataError
from dynfactor.statespace import DFMParams
from dynfactor.simulate import simulate_dfm

from oracles import random_params


class TestStructure:
    def test_zero_sigma_reproduces_factor_path(self):
        params = DFMParams(
            beta=np.ones((3, 1)), sigma=np.zeros(3),
            lam=[np.array([[0.5]])], psi=[np.array([0.3, 0.2, 0.1])],
        )
        sim = simulate_dfm(params, t_obs=100, seed=4)
        for i in range(3):
            assert np.array_equal(sim.returns.returns[:, i], sim.true_factors[:, 0])

    def test_zero_loadings_leave_scaled_ar_paths(self, rng):
        params = random_params(rng, n=1, p=1, q=2, s=3)
        params = DFMParams(beta=np.zeros((3, 1)), sigma=params.sigma,
                           lam=params.lam, psi=params.psi)
        sim = simulate_dfm(params, t_obs=200, seed=8)
        assert np.array_equal(sim.returns.returns, sim.true_idio * params.sigma)

    def test_reconstruction_identity(self, rng):
        params = random_params(rng, n=2, p=2, q=1, s=4)
        sim = simulate_dfm(params, t_obs=150, seed=3)
        rebuilt = sim.true_factors @ params.beta.T + sim.true_idio * params.sigma
        assert np.array_equal(sim.returns.returns, rebuilt)

    def test_non_stationary_params_rejected(self):
        params = DFMParams(beta=np.ones((2, 1)), sigma=np.ones(2),
                           lam=[np.array([[1.01]])], psi=[])
        with pytest.raises(DataError):
            simulate_dfm(params, t_obs=50, seed=0)

    def test_bad_lengths_rejected(self, rng):
        params = random_params(rng)
        with pytest.raises(DataError):
            simulate_dfm(params, t_obs=0, seed=0)
        with pytest.raises(DataError):
            simulate_dfm(params, t_obs=10, seed=0, burn_in=-1)


class TestStatistics:
    def test_determinism(self, rng):
        params = random_params(rng, n=1, p=2, q=2, s=3)
        a = simulate_dfm(params, t_obs=200, seed=123)
        b = simulate_dfm(params, t_obs=200, seed=123)
        assert np.array_equal(a.returns.returns, b.returns.returns)
        assert np.array_equal(a.true_factors, b.true_factors)
        c = simulate_dfm(params, t_obs=200, seed=124)
        assert not np.array_equal(a.returns.returns, c.returns.returns)

    def test_ar1_autocorrelation(self):
        psi = 0.45
        params = DFMParams(
            beta=np.zeros((2, 1)), sigma=np.array([1.0, 1.0]),
            lam=[np.array([[0.2]])], psi=[np.array([psi, psi])],
        )
        sim = simulate_dfm(params, t_obs=10**5, seed=6)
        for i in range(2):
            z = sim.true_idio[:, i]
            rho = np.corrcoef(z[:-1], z[1:])[0, 1]
            assert abs(rho - psi) < 0.02

    def test_cross_sectional_independence(self, rng):
        params = random_params(rng, n=1, p=1, q=1, s=6)
        sim = simulate_dfm(params, t_obs=10**5, seed=2)
        corr = np.corrcoef(sim.true_idio, rowvar=False)
        off = np.abs(corr[~np.eye(6, dtype=bool)])
        assert off.mean() < 0.02
