import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from carcopula.marginals import (
    FitConvergenceError,
    GammaSvcParams,
    _gamma_negloglik_grad,
    fit_region_gamma,
    fit_region_lognormal,
    gamma_cdf,
    gamma_logpdf,
    gamma_quantile,
    marginal_components,
    pit_transform,
    rate_matrix,
    standardize_time,
)


class TestStandardizeTime:
    def test_t3_hand_values(self):
        ts = standardize_time(3)
        assert ts.m_t == 2.0
        assert ts.s_t == pytest.approx(math.sqrt(2.0 / 3.0))
        assert np.allclose(ts.t_star, np.array([-1.0, 0.0, 1.0]) / math.sqrt(2.0 / 3.0))

    def test_t64_invariants(self):
        ts = standardize_time(64)
        assert abs(ts.t_star.sum()) < 1e-12
        assert np.mean(ts.t_star**2) == pytest.approx(1.0, abs=1e-12)

    def test_t1_rejected(self):
        with pytest.raises(ValueError):
            standardize_time(1)


class TestGammaLogpdf:
    def test_exponential_case(self):
        assert gamma_logpdf(1.0, 1.0, 1.0) == pytest.approx(-1.0, abs=1e-14)

    def test_hand_value(self):
        # shape 2, rate 3, y 1: log(9 e^-3)
        assert gamma_logpdf(1.0, 2.0, 3.0) == pytest.approx(2 * math.log(3.0) - 3.0, abs=1e-13)

    def test_support_boundary(self):
        with pytest.raises(ValueError):
            gamma_logpdf(0.0, 2.0, 1.0)
        with pytest.raises(ValueError):
            gamma_logpdf(1.0, -2.0, 1.0)


class TestGammaCdfQuantile:
    def test_exponential_closed_forms(self):
        assert gamma_cdf(1.0, 1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert gamma_quantile(0.5, 1.0, 1.0) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_quantile_against_quadrature_bisection_oracle(self):
        shape, rate, u = 7.3, 0.02, 0.95

        def cdf_quad(y):
            val, _ = quad(
                lambda t: math.exp(
                    shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(t) - rate * t
                ),
                0.0,
                y,
                limit=200,
            )
            return val

        lo, hi = 1e-9, 5000.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if cdf_quad(mid) < u:
                lo = mid
            else:
                hi = mid
        oracle = 0.5 * (lo + hi)
        assert gamma_quantile(u, shape, rate) == pytest.approx(oracle, rel=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(
        u=st.floats(min_value=1e-6, max_value=1 - 1e-6),
        shape=st.floats(min_value=0.2, max_value=80.0),
        rate=st.floats(min_value=1e-4, max_value=50.0),
    )
    def test_round_trip(self, u, shape, rate):
        y = gamma_quantile(u, shape, rate)
        assert abs(gamma_cdf(y, shape, rate) - u) <= 1e-10

    def test_monotonicity(self):
        ys = np.linspace(0.05, 30.0, 300)
        cdf = gamma_cdf(ys, 3.1, 0.7)
        assert np.all(np.diff(cdf) > 0)
        us = np.linspace(0.001, 0.999, 300)
        q = gamma_quantile(us, 3.1, 0.7)
        assert np.all(np.diff(q) > 0)

    def test_boundary_u_rejected(self):
        with pytest.raises(ValueError):
            gamma_quantile(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            gamma_quantile(1.0, 1.0, 1.0)


class TestMarginalComponents:
    def test_no_trend_constant_rate(self):
        ts = standardize_time(8)
        params = GammaSvcParams(a=np.array([2.0]), b=np.array([0.5]), c=np.array([0.0]))
        lams = [marginal_components(params, ts, 0, t).lam for t in range(8)]
        assert np.allclose(lams, lams[0])

    def test_direct_arithmetic(self):
        ts = standardize_time(3)
        params = GammaSvcParams(a=np.array([2.0]), b=np.array([0.5]), c=np.array([0.1]))
        comp = marginal_components(params, ts, 0, 1)  # t* = 0 at the middle year
        assert comp.lam == pytest.approx(1.0, abs=1e-14)
        assert comp.mu == pytest.approx(2.0, abs=1e-14)

    def test_mean_rate_identity(self):
        ts = standardize_time(12)
        rng = np.random.default_rng(0)
        params = GammaSvcParams(
            a=rng.uniform(1, 30, 5), b=rng.uniform(1e-3, 2.0, 5), c=rng.uniform(-0.2, 0.2, 5)
        )
        lam = rate_matrix(params, ts)
        mu = params.a[:, None] / lam
        assert np.allclose(mu * lam, np.broadcast_to(params.a[:, None], lam.shape))


class TestGradient:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(8)
        ts = standardize_time(48)
        for _ in range(100):
            theta = np.array([
                rng.uniform(0.5, 3.5),
                rng.uniform(-8.0, 1.0),
                rng.uniform(-0.3, 0.3),
            ])
            y = rng.gamma(5.0, 200.0, size=48)
            _, grad = _gamma_negloglik_grad(theta, y, ts.t_star)
            fd = np.empty(3)
            for j in range(3):
                h = 1e-5
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                fp, _ = _gamma_negloglik_grad(tp, y, ts.t_star)
                fm, _ = _gamma_negloglik_grad(tm, y, ts.t_star)
                fd[j] = (fp - fm) / (2 * h)
            denom = np.maximum(np.abs(fd), 1.0)
            assert np.max(np.abs(grad - fd) / denom) < 1e-4


class TestFitRegionGamma:
    def test_long_series_recovery(self):
        ts = standardize_time(10_000)
        rng = np.random.default_rng(123)
        true = GammaSvcParams(a=np.array([5.0]), b=np.array([0.002]), c=np.array([0.1]))
        lam = rate_matrix(true, ts)[0]
        y = rng.gamma(5.0, 1.0 / lam)
        fit = fit_region_gamma(y, ts)
        assert abs(fit.a - 5.0) < 3 * fit.se_a
        assert abs(fit.b - 0.002) < 3 * fit.se_b
        assert abs(fit.c - 0.1) < 3 * fit.se_c
        assert fit.gradient_norm < 1e-8

    def test_no_trend_calibration(self):
        # c=0 data: |c_hat| < 3 se in at least 90 of 100 replicates
        ts = standardize_time(200)
        rng = np.random.default_rng(5)
        hits = 0
        for _ in range(100):
            y = rng.gamma(8.0, 1.0 / (8.0 * 0.01), size=200)
            fit = fit_region_gamma(y, ts)
            hits += abs(fit.c) < 3 * fit.se_c
        assert hits >= 90

    def test_zero_value_rejected(self, ts64):
        y = np.full(64, 5.0)
        y[10] = 0.0
        with pytest.raises(ValueError, match="non-positive"):
            fit_region_gamma(y, ts64)

    def test_too_few_observations(self, ts64):
        y = np.full(64, np.nan)
        y[:4] = 2.0
        with pytest.raises(ValueError, match="at least 5"):
            fit_region_gamma(y, ts64)

    def test_missing_entries_skipped(self, ts64):
        rng = np.random.default_rng(9)
        y = rng.gamma(10.0, 100.0, size=64)
        y_missing = y.copy()
        y_missing[[3, 17, 40]] = np.nan
        fit = fit_region_gamma(y_missing, ts64)
        assert fit.n_used == 61
        assert np.isfinite(fit.loglik)


class TestFitRegionLognormal:
    def test_noiseless_fit_flagged_degenerate(self, ts64):
        t = np.arange(1, 65)
        y = np.exp(1.0 + 0.0 * t)
        fit = fit_region_lognormal(y, ts64)
        assert fit.alpha_star == pytest.approx(1.0, abs=1e-10)
        assert fit.beta_star == pytest.approx(0.0, abs=1e-12)
        assert fit.degenerate

    def test_matches_normal_equations_oracle(self, ts64):
        rng = np.random.default_rng(2)
        t = np.arange(1, 65, dtype=float)
        y = np.exp(0.5 + 0.01 * t + 0.3 * rng.standard_normal(64))
        fit = fit_region_lognormal(y, ts64)
        X = np.column_stack([np.ones(64), t])
        coef = np.linalg.solve(X.T @ X, X.T @ np.log(y))
        assert fit.alpha_star == pytest.approx(coef[0], abs=1e-10)
        assert fit.beta_star == pytest.approx(coef[1], abs=1e-10)
        resid = np.log(y) - X @ coef
        assert fit.sigma2 == pytest.approx(float(resid @ resid) / 64, abs=1e-12)

    def test_missing_entries_excluded(self, ts64):
        rng = np.random.default_rng(3)
        y = np.exp(rng.standard_normal(64) + 3.0)
        y_m = y.copy()
        y_m[5:15] = np.nan
        fit = fit_region_lognormal(y_m, ts64)
        assert fit.n_used == 54


class TestPitTransform:
    def test_median_maps_to_half(self):
        ts = standardize_time(6)
        params = GammaSvcParams(a=np.array([4.0]), b=np.array([0.01]), c=np.array([0.05]))
        lam = rate_matrix(params, ts)
        medians = gamma_quantile(np.full_like(lam, 0.5), 4.0, lam)
        u, clamped = pit_transform(medians, params, ts)
        assert np.allclose(u, 0.5, atol=1e-10)
        assert clamped == 0

    def test_uniformity_on_model_draws(self):
        ts = standardize_time(400)
        rng = np.random.default_rng(10)
        params = GammaSvcParams(
            a=np.array([3.0, 12.0]), b=np.array([0.002, 0.03]), c=np.array([0.08, -0.04])
        )
        lam = rate_matrix(params, ts)
        y = rng.gamma(np.broadcast_to(params.a[:, None], lam.shape), 1.0 / lam)
        u, _ = pit_transform(y, params, ts)
        from scipy.stats import kstest

        stat, _ = kstest(u.ravel(), "uniform")
        assert stat < 1.36 / math.sqrt(u.size)

    def test_missing_preserved(self, ts64):
        params = GammaSvcParams(a=np.array([2.0]), b=np.array([0.01]), c=np.array([0.0]))
        y = np.full((1, 64), 80.0)
        y[0, 7] = np.nan
        u, _ = pit_transform(y, params, ts64)
        assert np.isnan(u[0, 7])
        assert np.isfinite(np.delete(u[0], 7)).all()


class TestMomentIdentities:
    def test_monte_carlo_mean_variance(self):
        # E(Y) = exp(-c t*)/b, Var(Y) = E(Y)^2 / a
        a, b, c, tstar = 6.0, 0.004, 0.12, 0.8
        lam = a * b * math.exp(c * tstar)
        rng = np.random.default_rng(77)
        draws = rng.gamma(a, 1.0 / lam, size=1_000_000)
        mean_expected = math.exp(-c * tstar) / b
        var_expected = mean_expected**2 / a
        se_mean = math.sqrt(var_expected / draws.size)
        assert abs(draws.mean() - mean_expected) < 4 * se_mean
        # variance of the sample variance for gamma: use kurtosis 3 + 6/a
        kurt = 3.0 + 6.0 / a
        se_var = var_expected * math.sqrt((kurt - 1.0) / draws.size)
        assert abs(draws.var(ddof=1) - var_expected) < 4 * se_var

    def test_cv_constant_over_time(self):
        ts = standardize_time(30)
        params = GammaSvcParams(a=np.array([9.0]), b=np.array([0.02]), c=np.array([0.3]))
        lam = rate_matrix(params, ts)
        mu = params.a[:, None] / lam
        sd = np.sqrt(params.a[:, None]) / lam
        assert np.allclose(sd / mu, 1.0 / 3.0)
