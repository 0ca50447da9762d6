import math

import numpy as np
import pytest
from scipy.stats import kstest

from carcopula.gmrf import (
    build_precision,
    conditional_from_precision,
    gmrf_logpdf,
    sample_gmrf,
    scaled_correlation,
)
from conftest import random_connected_graph

LOG_2PI = math.log(2 * math.pi)


class TestBuildPrecision:
    def test_two_node_formula(self, pair_graph):
        p = build_precision(pair_graph, rho=0.5, sigma2=1.0)
        assert np.allclose(p.Q, [[1.0, -0.5], [-0.5, 1.0]])
        assert p.is_proper

    def test_rho_zero_is_degree_diagonal(self, cycle4):
        p = build_precision(cycle4, rho=0.0, sigma2=1.0)
        assert np.allclose(p.Q, np.diag([2.0, 2.0, 2.0, 2.0]))

    def test_icar_annihilates_constants(self, india_graph):
        p = build_precision(india_graph, rho=1.0, sigma2=2.5)
        assert np.allclose(p.Q @ np.ones(india_graph.n), 0.0, atol=1e-15)
        assert not p.is_proper

    def test_validation(self, cycle4):
        with pytest.raises(ValueError):
            build_precision(cycle4, rho=1.2, sigma2=1.0)
        with pytest.raises(ValueError):
            build_precision(cycle4, rho=0.5, sigma2=0.0)


class TestScaledCorrelation:
    def test_two_node_analytic(self, pair_graph):
        sc = scaled_correlation(pair_graph, 0.5)
        assert np.allclose(sc.delta, [4.0 / 3.0, 4.0 / 3.0])
        assert sc.log_det == pytest.approx(math.log(0.75), abs=1e-14)

    def test_rho_zero_inverts_degrees(self, india_graph):
        sc = scaled_correlation(india_graph, 0.0)
        assert np.allclose(sc.delta, 1.0 / india_graph.degrees)

    def test_india_delta_matches_dense_inverse(self, india_graph):
        sc = scaled_correlation(india_graph, 0.9)
        dense = np.linalg.inv(india_graph.M - 0.9 * india_graph.W)
        assert np.max(np.abs(sc.delta - np.diag(dense))) < 1e-10

    def test_unit_diagonal_implied_correlation(self, india_graph):
        sc = scaled_correlation(india_graph, 0.95)
        dense = np.linalg.inv(india_graph.M - 0.95 * india_graph.W)
        R = dense / np.sqrt(np.outer(sc.delta, sc.delta))
        assert np.max(np.abs(np.diag(R) - 1.0)) < 1e-10

    def test_unit_diagonal_over_random_graphs(self):
        # 1000 random (graph, rho) pairs with n <= 34
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 35))
            g = random_connected_graph(rng, n)
            rho = float(rng.uniform(0.0, 0.999))
            sc = scaled_correlation(g, rho)
            dense = np.linalg.inv(g.M - rho * g.W)
            R = dense / np.sqrt(np.outer(sc.delta, sc.delta))
            assert np.max(np.abs(np.diag(R) - 1.0)) < 1e-10

    def test_log_det_matches_dense(self, india_graph):
        for rho in (0.0, 0.3, 0.9, 0.99):
            sc = scaled_correlation(india_graph, rho)
            sign, logdet = np.linalg.slogdet(india_graph.M - rho * india_graph.W)
            assert sign == 1.0
            assert sc.log_det == pytest.approx(logdet, abs=1e-9)

    def test_rejects_icar_boundary(self, cycle4):
        with pytest.raises(ValueError):
            scaled_correlation(cycle4, 1.0)


class TestGmrfLogpdf:
    def test_two_node_at_mean(self, pair_graph):
        res = gmrf_logpdf(np.zeros(2), np.zeros(2), build_precision(pair_graph, 0.0, 1.0))
        assert res.proper
        # Q = M = I for the single-edge pair, det = 1
        assert res.value == pytest.approx(-LOG_2PI, abs=1e-12)

    def test_two_node_hand_value(self, pair_graph):
        res = gmrf_logpdf(np.array([1.0, 0.0]), np.zeros(2), build_precision(pair_graph, 0.5, 1.0))
        expected = -LOG_2PI + 0.5 * math.log(0.75) - 0.5
        assert res.value == pytest.approx(expected, abs=1e-12)

    def test_icar_kernel_ignores_constant_shift(self, cycle4):
        p = build_precision(cycle4, 1.0, 1.0)
        for alpha in (-3.0, 0.0, 5.5):
            res = gmrf_logpdf(np.full(4, alpha), np.zeros(4), p)
            assert not res.proper
            assert res.value == pytest.approx(0.0, abs=1e-12)

    def test_integrates_to_one_n2(self, pair_graph):
        p = build_precision(pair_graph, 0.6, 1.3)
        grid = np.linspace(-9, 9, 801)
        h = grid[1] - grid[0]
        xx, yy = np.meshgrid(grid, grid)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        quad = p.Q[0, 0] * pts[:, 0] ** 2 + 2 * p.Q[0, 1] * pts[:, 0] * pts[:, 1] + p.Q[1, 1] * pts[:, 1] ** 2
        logdet = np.linalg.slogdet(p.Q)[1]
        dens = np.exp(0.5 * logdet - LOG_2PI - 0.5 * quad)
        mass = dens.sum() * h * h
        assert mass == pytest.approx(1.0, abs=1e-4)
        # and the implementation agrees with the explicit density formula
        x = np.array([0.4, -1.1])
        res = gmrf_logpdf(x, np.zeros(2), p)
        direct = 0.5 * logdet - LOG_2PI - 0.5 * float(x @ p.Q @ x)
        assert res.value == pytest.approx(direct, abs=1e-12)

    def test_dimension_mismatch(self, pair_graph):
        with pytest.raises(ValueError):
            gmrf_logpdf(np.zeros(3), np.zeros(3), build_precision(pair_graph, 0.5, 1.0))


class TestSampleGmrf:
    def test_monte_carlo_covariance(self, ring10):
        sc = scaled_correlation(ring10, 0.8)
        target = np.linalg.inv(ring10.M - 0.8 * ring10.W)
        rng = np.random.default_rng(11)
        draws = np.array([sample_gmrf(rng, np.zeros(10), sc.chol_L) for _ in range(100_000)])
        emp = np.cov(draws.T)
        # entrywise within 4 standard errors; cov entry se approx sqrt((v_ii v_jj + v_ij^2)/n)
        n = draws.shape[0]
        se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / n)
        assert np.all(np.abs(emp - target) < 4.5 * se)

    def test_rho_zero_unit_degrees_iid_standard_normal(self, pair_graph):
        # pair graph has unit degrees, rho=0 -> identity precision
        sc = scaled_correlation(pair_graph, 0.0)
        rng = np.random.default_rng(5)
        draws = np.array([sample_gmrf(rng, np.zeros(2), sc.chol_L) for _ in range(4000)])
        stat, _ = kstest(draws.ravel(), "norm")
        assert stat < 1.36 / math.sqrt(draws.size)

    def test_seed_determinism(self, ring10):
        sc = scaled_correlation(ring10, 0.5)
        d1 = sample_gmrf(np.random.default_rng(99), np.zeros(10), sc.chol_L)
        d2 = sample_gmrf(np.random.default_rng(99), np.zeros(10), sc.chol_L)
        assert np.array_equal(d1, d2)

    def test_mean_and_scale(self, pair_graph):
        sc = scaled_correlation(pair_graph, 0.0)
        rng = np.random.default_rng(2)
        mean = np.array([5.0, -2.0])
        draws = np.array([sample_gmrf(rng, mean, sc.chol_L, scale=0.01) for _ in range(500)])
        assert np.allclose(draws.mean(axis=0), mean, atol=0.01)


class TestConditionalFromPrecision:
    def test_bivariate_from_scaled_correlation(self, pair_graph):
        # correlation 0.5; observing z2=1 gives mean 0.5, variance 0.75
        sc = scaled_correlation(pair_graph, 0.5)
        mean, prec = conditional_from_precision(sc.precision, np.array([1]), np.array([1.0]))
        assert mean[0] == pytest.approx(0.5, abs=1e-12)
        assert 1.0 / prec[0, 0] == pytest.approx(0.75, abs=1e-12)

    def test_identity_independence(self):
        P = np.eye(5)
        mean, prec = conditional_from_precision(P, np.arange(1, 5), np.ones(4))
        assert mean[0] == pytest.approx(0.0)
        assert prec[0, 0] == pytest.approx(1.0)

    def test_matches_covariance_partition_oracle(self, india_graph):
        rng = np.random.default_rng(21)
        sc = scaled_correlation(india_graph, 0.9)
        P = sc.precision
        Sigma = np.linalg.inv(P)
        n = india_graph.n
        for _ in range(50):
            miss = np.sort(rng.choice(n, size=3, replace=False))
            obs = np.setdiff1d(np.arange(n), miss)
            x_obs = rng.standard_normal(obs.size)
            mean, prec = conditional_from_precision(P, obs, x_obs)
            S_mo = Sigma[np.ix_(miss, obs)]
            S_oo = Sigma[np.ix_(obs, obs)]
            S_mm = Sigma[np.ix_(miss, miss)]
            mean_oracle = S_mo @ np.linalg.solve(S_oo, x_obs)
            cov_oracle = S_mm - S_mo @ np.linalg.solve(S_oo, S_mo.T)
            assert np.max(np.abs(mean - mean_oracle)) < 1e-8
            assert np.max(np.abs(np.linalg.inv(prec) - cov_oracle)) < 1e-8

    def test_tower_property(self, india_graph):
        # conditioning on two disjoint blocks sequentially equals joint conditioning
        rng = np.random.default_rng(4)
        sc = scaled_correlation(india_graph, 0.7)
        P = sc.precision
        n = india_graph.n
        miss = np.sort(rng.choice(n, size=6, replace=False))
        blk1, blk2 = miss[:3], miss[3:]
        obs = np.setdiff1d(np.arange(n), miss)
        x_obs = rng.standard_normal(obs.size)

        joint_mean, _ = conditional_from_precision(P, obs, x_obs)

        # first integrate out blk1: marginal precision of (blk2, obs) is the
        # Schur complement; then condition blk2 on obs
        keep = np.concatenate([blk2, obs])
        P_kk = P[np.ix_(keep, keep)]
        P_k1 = P[np.ix_(keep, blk1)]
        P_11 = P[np.ix_(blk1, blk1)]
        P_marg = P_kk - P_k1 @ np.linalg.solve(P_11, P_k1.T)
        obs_pos = np.arange(blk2.size, keep.size)
        mean2, _ = conditional_from_precision(P_marg, obs_pos, x_obs)
        # joint_mean is ordered by ascending missing index: map blk2 entries
        order = np.argsort(miss)
        joint_by_index = dict(zip(miss[order], joint_mean))
        for k, idx in enumerate(blk2):
            assert mean2[k] == pytest.approx(joint_by_index[idx], abs=1e-8)

    def test_rejects_empty_or_full_observation(self):
        P = np.eye(3)
        with pytest.raises(ValueError):
            conditional_from_precision(P, np.array([], dtype=int), np.array([]))
        with pytest.raises(ValueError):
            conditional_from_precision(P, np.arange(3), np.ones(3))
