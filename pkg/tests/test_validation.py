import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynfactor.exceptions import DataError
from dynfactor.panels import ReturnsPanel
from dynfactor.statespace import DFMSpec
from dynfactor.estimation import FitOptions, fit_mle
from dynfactor.simulate import simulate_dfm
from dynfactor.validation import capm_betas, correlation, regress

from oracles import random_params


def make_panel(values):
    values = np.asarray(values, dtype=float)
    dates = pd.bdate_range("2019-01-01", periods=values.shape[0])
    tickers = [f"T{i}" for i in range(values.shape[1])]
    return ReturnsPanel(dates=dates, tickers=tickers, returns=values,
                        means=np.zeros(values.shape[1]))


class TestCapm:
    def test_market_against_itself(self, rng):
        market = rng.normal(size=100)
        result = capm_betas(make_panel(market[:, None]), market)
        assert abs(result.betas[0] - 1.0) < 1e-12
        assert abs(result.r_squared[0] - 1.0) < 1e-12

    def test_scaled_market_plus_noise(self, rng):
        t_obs = 2000
        market = rng.normal(scale=1.0, size=t_obs)
        noise_sd = 0.2
        stock = 2.0 * market + rng.normal(scale=noise_sd, size=t_obs)
        result = capm_betas(make_panel(stock[:, None]), market)
        # 3-sigma OLS slope error band around the generating slope
        se = noise_sd / (market.std() * np.sqrt(t_obs))
        assert abs(result.betas[0] - 2.0) < 3 * se

    def test_date_aligned_market_series(self, rng):
        values = rng.normal(size=(50, 2))
        panel = make_panel(values)
        market = pd.Series(rng.normal(size=60),
                           index=pd.bdate_range("2019-01-01", periods=60))
        result = capm_betas(panel, market)
        assert result.betas.shape == (2,)

    def test_risk_free_shifts_intercept_not_slope(self, rng):
        market = rng.normal(size=300)
        stock = 1.5 * market + rng.normal(scale=0.1, size=300)
        panel = make_panel(stock[:, None])
        base = capm_betas(panel, market, risk_free=0.0)
        shifted = capm_betas(panel, market, risk_free=0.02)
        assert abs(base.betas[0] - shifted.betas[0]) < 1e-10

    def test_too_few_observations(self, rng):
        panel = make_panel(rng.normal(size=(10, 1)))
        market = np.full(10, np.nan)
        market[:2] = 0.5  # only two aligned pairs survive
        with pytest.raises(DataError):
            capm_betas(panel, market)


class TestCorrelation:
    def test_identical(self, rng):
        x = rng.normal(size=50)
        assert abs(correlation(x, x) - 1.0) < 1e-12

    def test_negated(self, rng):
        x = rng.normal(size=50)
        assert abs(correlation(x, -x) + 1.0) < 1e-12

    def test_matches_direct_formula(self, rng):
        a = rng.normal(size=100)
        b = 0.3 * a + rng.normal(size=100)
        got = correlation(a, b)
        ac = a - a.mean()
        bc = b - b.mean()
        want = (ac @ bc) / np.sqrt((ac @ ac) * (bc @ bc))
        assert abs(got - want) < 1e-12

    def test_missing_pairs_dropped(self, rng):
        a = rng.normal(size=30)
        b = a.copy()
        a[5] = np.nan
        b[9] = np.nan
        assert abs(correlation(a, b) - 1.0) < 1e-12

    def test_zero_variance_rejected(self):
        with pytest.raises(DataError):
            correlation(np.ones(10), np.arange(10.0))

    @given(st.floats(-10, 10), st.floats(-5, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_scale_shift_invariance(self, c1, c2, seed):
        if abs(c1) < 1e-3:
            return
        gen = np.random.default_rng(seed)
        a = gen.normal(size=40)
        b = gen.normal(size=40) + 0.5 * a
        base = correlation(a, b)
        transformed = correlation(a, c1 * b + c2)
        assert abs(transformed - np.sign(c1) * base) < 1e-12

    def test_symmetry(self, rng):
        a, b = rng.normal(size=(2, 60))
        assert abs(correlation(a, b) - correlation(b, a)) < 1e-15


class TestRegress:
    def test_exact_linear_fit(self, rng):
        x = rng.normal(size=(40, 2))
        y = 1.0 + x @ np.array([2.0, -0.5])
        coef, r2 = regress(y, x)
        assert np.allclose(coef, [1.0, 2.0, -0.5], atol=1e-10)
        assert abs(r2 - 1.0) < 1e-12

    def test_orthogonal_regressor_gets_zero_slope(self, rng):
        x = rng.normal(size=200)
        x -= x.mean()
        y = rng.normal(size=200)
        y -= y.mean()
        y -= (y @ x) / (x @ x) * x  # exact sample orthogonality
        coef, _ = regress(y, x)
        assert abs(coef[1]) < 1e-10

    def test_single_regressor_r2_is_squared_correlation(self, rng):
        x = rng.normal(size=80)
        y = 0.7 * x + rng.normal(size=80)
        _, r2 = regress(y, x)
        assert abs(r2 - correlation(y, x) ** 2) < 1e-10

    def test_rank_deficiency_rejected(self, rng):
        x = rng.normal(size=50)
        with pytest.raises(DataError):
            regress(rng.normal(size=50), np.column_stack([x, 2 * x]))

    def test_one_factor_path_explained_by_two_factor_paths(self, rng):
        # one- and two-factor fits of the same strongly-factored panel: the
        # richer model's smoothed paths span the simpler model's
        gen = np.random.default_rng(99)
        factor = gen.normal(scale=3.0, size=400)
        beta = gen.uniform(0.8, 1.2, 8)
        panel = make_panel(np.outer(factor, beta) + gen.normal(size=(400, 8)))
        opts = FitOptions(maxiter=60)
        one = fit_mle(panel, DFMSpec(n=1, p=1, q=0, s=8), opts)
        two = fit_mle(panel, DFMSpec(n=2, p=1, q=0, s=8), opts)
        _, r2 = regress(one.factors_smoothed[:, 0], two.factors_smoothed)
        assert r2 > 0.95
