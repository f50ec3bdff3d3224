"""RLS recursion against hand-evaluated steps and batch least squares."""

import math

import numpy as np
import pytest

from midair.rls import (COV_LIMIT, RlsState, SharedRlsState, forgetting_factor,
                        rls_init, rls_update, shared_rls_update)


class TestInit:
    def test_default_covariance_is_100_identity(self):
        s = rls_init(4)
        np.testing.assert_array_equal(s.cov, 100.0 * np.eye(4))
        np.testing.assert_array_equal(s.theta, np.zeros(4))

    def test_scalar_case(self):
        s = rls_init(1, p0=1.0)
        np.testing.assert_array_equal(s.cov, [[1.0]])

    def test_larger_dimension(self):
        s = rls_init(8)
        np.testing.assert_array_equal(s.cov, 100.0 * np.eye(8))

    def test_rejects_empty_problem(self):
        with pytest.raises(ValueError):
            rls_init(0)


class TestForgettingFactor:
    def test_2khz_value(self):
        # exp(-0.0005 / 0.2)
        assert forgetting_factor(0.0005) == pytest.approx(0.9975031, abs=1e-7)

    def test_one_memory_time_per_step(self):
        """Sampling at the memory time means 63% decay in a single step."""
        assert forgetting_factor(0.2) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_fast_sampling_limit(self):
        assert forgetting_factor(1e-9) == pytest.approx(1.0, abs=1e-6)


class TestUpdate:
    def test_hand_evaluated_first_step(self):
        """n=1, P=100, lambda=1, x=1, y=1: K = 100/101, theta = P = 0.990099."""
        s = rls_init(1)
        e = rls_update(s, [1.0], 1.0)
        assert e == pytest.approx(1.0)
        assert s.theta[0] == pytest.approx(100.0 / 101.0, abs=1e-9)
        assert s.cov[0, 0] == pytest.approx(100.0 / 101.0, abs=1e-9)

    def test_zero_regressor_is_a_gainless_step(self):
        s = rls_init(3, lam=0.99)
        rls_update(s, np.ones(3), 1.0)
        theta_before = s.theta.copy()
        cov_before = s.cov.copy()
        rls_update(s, np.zeros(3), 5.0)
        np.testing.assert_array_equal(s.theta, theta_before)
        np.testing.assert_allclose(s.cov, cov_before / 0.99, rtol=1e-12)

    def test_noiseless_regression_matches_batch_solution(self):
        rng = np.random.default_rng(0)
        s = rls_init(2)
        xs = rng.normal(size=(50, 2))
        for x in xs:
            rls_update(s, x, 3.0 * x[0] - 2.0 * x[1])
        np.testing.assert_allclose(s.params, [3.0, -2.0], atol=1e-6)

    def test_nonfinite_input_rejected_without_state_change(self):
        s = rls_init(2)
        rls_update(s, [1.0, 2.0], 1.0)
        theta, cov = s.theta.copy(), s.cov.copy()
        assert math.isnan(rls_update(s, [np.nan, 0.0], 1.0))
        assert math.isnan(rls_update(s, [1.0, 0.0], np.inf))
        np.testing.assert_array_equal(s.theta, theta)
        np.testing.assert_array_equal(s.cov, cov)

    def test_batch_oracle_over_random_problems(self):
        """lambda=1 RLS equals closed-form least squares, 100 random cases."""
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            m = 200
            x = rng.normal(size=(m, n)) * rng.uniform(0.5, 2.0, size=n)
            theta_true = rng.normal(size=n)
            y = x @ theta_true + 0.01 * rng.normal(size=m)
            s = rls_init(n)
            for xi, yi in zip(x, y):
                rls_update(s, xi, yi)
            # include the prior P0 = 100 I in the batch reference
            reg = np.eye(n) / 100.0
            ref = np.linalg.solve(x.T @ x + reg, x.T @ y)
            np.testing.assert_allclose(s.params, ref, rtol=1e-6, atol=1e-9)

    def test_innovation_decay_matches_forgetting_memory(self):
        """Feed y=c1 then switch to c2: innovations decay to 37% of the
        post-switch value after one memory time (0.2 s of samples)."""
        lam = forgetting_factor(0.0005)
        s = rls_init(1, lam=lam)
        for _ in range(4000):
            rls_update(s, [1.0], 1.0)
        es = []
        for _ in range(400):  # 0.2 s at 2 kHz
            es.append(rls_update(s, [1.0], 2.0))
        assert es[-1] / es[0] == pytest.approx(math.exp(-1.0), rel=0.05)

    def test_covariance_diagonal_bounded_under_fuzz(self):
        """P stays positive on the diagonal and below the 1e10 limit for
        adversarial input streams."""
        rng = np.random.default_rng(99)
        s = rls_init(4, lam=0.95)
        for k in range(3000):
            scale = 10.0 ** rng.integers(-6, 7)
            x = rng.normal(size=4) * scale
            if k % 17 == 0:
                x[:] = 0.0
            y = rng.normal() * scale
            rls_update(s, x, y)
            d = np.diagonal(s.cov)
            assert np.all(d > 0.0)
            assert np.all(d <= COV_LIMIT)
            assert np.all(np.abs(s.cov) <= COV_LIMIT)

    def test_covariance_stays_symmetric(self):
        rng = np.random.default_rng(5)
        s = rls_init(5, lam=0.99)
        for _ in range(500):
            rls_update(s, rng.normal(size=5), rng.normal())
        np.testing.assert_allclose(s.cov, s.cov.T, rtol=1e-6)


class TestPreScaling:
    def test_scaled_fit_equals_raw_fit_in_double_precision(self):
        rng = np.random.default_rng(3)
        scale = np.array([1.0, 1e3, 1e4])
        raw = rls_init(3)
        scaled = rls_init(3, scale=scale, y_scale=10.0)
        theta_true = np.array([2.0, 3e-3, -5e-4])
        for _ in range(300):
            x = rng.normal(size=3) * scale
            y = x @ theta_true
            rls_update(raw, x, y)
            rls_update(scaled, x, y)
        np.testing.assert_allclose(scaled.params, raw.params, rtol=1e-6)
        np.testing.assert_allclose(scaled.params, theta_true, rtol=1e-6)

    def test_single_precision_prefers_the_scaled_path(self):
        """At float32, the pre-scaled recursion tracks the float64 reference
        at least as well as the raw-unit recursion does."""
        rng = np.random.default_rng(11)
        scale = np.array([1.0, 1e4])
        theta_true = np.array([1.5, 2.5e-4])
        data = [(rng.normal(size=2) * scale, 0.0) for _ in range(400)]
        data = [(x, x @ theta_true + 0.01 * rng.normal()) for x, _ in data]

        oracle = rls_init(2, dtype=np.float64)
        raw32 = rls_init(2, dtype=np.float32)
        scaled32 = rls_init(2, scale=scale, dtype=np.float32)
        for x, y in data:
            rls_update(oracle, x, y)
            rls_update(raw32, x, y)
            rls_update(scaled32, x, y)
        ref = oracle.params
        err_raw = np.max(np.abs((raw32.params - ref) / ref))
        err_scaled = np.max(np.abs((scaled32.params - ref) / ref))
        assert err_scaled <= err_raw + 1e-7


class TestSharedRegressor:
    def test_single_output_matches_plain_update(self):
        rng = np.random.default_rng(21)
        shared = SharedRlsState(3, 1, lam=0.999)
        plain = rls_init(3, lam=0.999)
        for _ in range(200):
            x = rng.normal(size=3)
            y = rng.normal()
            es = shared_rls_update(shared, x, [y])
            e = rls_update(plain, x, y)
            assert es[0] == e
        np.testing.assert_array_equal(shared.thetas[0], plain.theta)
        np.testing.assert_array_equal(shared.cov, plain.cov)

    def test_identical_targets_give_identical_estimates(self):
        rng = np.random.default_rng(22)
        shared = SharedRlsState(4, 3)
        for _ in range(100):
            y = rng.normal()
            shared_rls_update(shared, rng.normal(size=4), [y, y, y])
        np.testing.assert_array_equal(shared.thetas[0], shared.thetas[1])
        np.testing.assert_array_equal(shared.thetas[0], shared.thetas[2])

    def test_bit_identical_to_independent_filters(self):
        """The shared-covariance optimization must not change a single bit
        relative to three independent filters fed the same regressors."""
        rng = np.random.default_rng(23)
        lam = forgetting_factor(0.0005)
        scale = np.array([1.0, 2.0, 0.5, 10.0])
        shared = SharedRlsState(4, 3, lam=lam, scale=scale, y_scale=2.0)
        singles = [rls_init(4, lam=lam, scale=scale, y_scale=2.0) for _ in range(3)]
        for _ in range(500):
            x = rng.normal(size=4)
            ys = rng.normal(size=3)
            shared_rls_update(shared, x, ys)
            for flt, y in zip(singles, ys):
                rls_update(flt, x, y)
        for j in range(3):
            assert np.max(np.abs(shared.thetas[j] - singles[j].theta)) == 0.0
        np.testing.assert_array_equal(shared.cov, singles[0].cov)

    def test_nonfinite_rejected(self):
        shared = SharedRlsState(2, 2)
        shared_rls_update(shared, [1.0, 1.0], [1.0, 2.0])
        thetas = shared.thetas.copy()
        es = shared_rls_update(shared, [np.inf, 0.0], [1.0, 2.0])
        assert np.all(np.isnan(es))
        np.testing.assert_array_equal(shared.thetas, thetas)
