import math

import numpy as np
import pytest
import scipy.special as sp

from onlinehmm import (
    DegenerateSystemError,
    digamma,
    inverse_digamma,
    log_moment,
    monomial_moment,
    solve_digamma_system,
    trigamma,
)
from onlinehmm.dirichlet import (
    _digamma_vec,
    _inverse_digamma_vec,
    _psi_pair,
    _trigamma_vec,
    log_weight,
)

from oracles import dirichlet_mc_log_moment


class TestScalarPsi:
    def test_digamma_known_values(self):
        assert digamma(1.0) == pytest.approx(-np.euler_gamma, abs=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - np.euler_gamma, abs=1e-12)
        assert digamma(0.5) == pytest.approx(-np.euler_gamma - 2.0 * np.log(2.0), abs=1e-12)

    def test_trigamma_known_values(self):
        assert trigamma(1.0) == pytest.approx(np.pi**2 / 6.0, rel=1e-12)
        assert trigamma(0.5) == pytest.approx(np.pi**2 / 2.0, rel=1e-12)

    def test_matches_scipy_over_wide_range(self):
        xs = np.logspace(-8, 8, 400)
        for x in xs:
            assert digamma(float(x)) == pytest.approx(
                float(sp.digamma(x)), rel=1e-12, abs=1e-12
            )
            assert trigamma(float(x)) == pytest.approx(
                float(sp.polygamma(1, x)), rel=1e-12
            )

    def test_recurrences(self, rng):
        for _ in range(100):
            x = float(rng.uniform(0.05, 40.0))
            assert digamma(x + 1.0) == pytest.approx(digamma(x) + 1.0 / x, rel=1e-12)
            assert trigamma(x + 1.0) == pytest.approx(
                trigamma(x) - 1.0 / x**2, rel=1e-11, abs=1e-13
            )

    def test_rejects_non_positive(self):
        for bad in (0.0, -1.0, -1e-9):
            with pytest.raises(ValueError):
                digamma(bad)
            with pytest.raises(ValueError):
                trigamma(bad)


class TestVectorPsi:
    def test_vector_matches_scalar(self, rng):
        x = np.concatenate([rng.uniform(1e-6, 60.0, size=200), [1e-8, 1e8]])
        dv = _digamma_vec(x)
        tv = _trigamma_vec(x)
        for k, xk in enumerate(x):
            assert dv[k] == pytest.approx(digamma(float(xk)), rel=1e-12, abs=1e-12)
            assert tv[k] == pytest.approx(trigamma(float(xk)), rel=1e-12)

    def test_psi_pair_consistent(self, rng):
        x = rng.uniform(0.01, 30.0, size=64)
        d, t = _psi_pair(x)
        np.testing.assert_allclose(d, _digamma_vec(x), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(t, _trigamma_vec(x), rtol=1e-12)


class TestInverseDigamma:
    def test_round_trip(self):
        for x in np.logspace(-6, 6, 120):
            y = digamma(float(x))
            back = inverse_digamma(y)
            assert back == pytest.approx(float(x), rel=1e-9)

    def test_forward_residual(self, rng):
        for _ in range(200):
            y = float(rng.uniform(-30.0, 10.0))
            u = inverse_digamma(y)
            assert digamma(u) == pytest.approx(y, abs=1e-10 * max(1.0, abs(y)))

    def test_vector_matches_scalar(self, rng):
        y = rng.uniform(-20.0, 8.0, size=100)
        uv = _inverse_digamma_vec(y)
        for k, yk in enumerate(y):
            assert uv[k] == pytest.approx(inverse_digamma(float(yk)), rel=1e-11)


class TestMoments:
    def test_weight_is_one_at_zero_exponents(self):
        u = np.array([0.7, 2.3, 11.0])
        assert monomial_moment(u, np.zeros(3), np.zeros(3)) == 1.0

    def test_first_moment_of_symmetric_pair(self):
        # mean of one coordinate under a flat two-component prior
        value = monomial_moment(np.ones(2), np.zeros(2), np.array([1.0, 0.0]))
        assert value == pytest.approx(0.5, rel=1e-14)

    def test_moment_factorizes_over_increments(self, rng):
        for _ in range(30):
            n = int(rng.integers(2, 5))
            u = rng.uniform(0.2, 8.0, size=n)
            r = rng.integers(0, 4, size=n).astype(float)
            e = rng.integers(0, 4, size=n).astype(float)
            lhs = log_weight(u, r + e)
            rhs = log_weight(u, r) + log_weight(u + r, e)
            assert lhs == pytest.approx(rhs, abs=1e-11)

    def test_log_moment_flat_prior(self):
        weight, value = log_moment(np.ones(2), np.zeros(2), 0)
        assert weight == 1.0
        assert value == pytest.approx(-1.0, abs=1e-13)

    def test_log_moment_matches_monte_carlo(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 5))
            u = rng.uniform(0.3, 6.0, size=n)
            r = rng.integers(0, 3, size=n).astype(float)
            i = int(rng.integers(0, n))
            weight, value = log_moment(u, r, i)
            mean, se = dirichlet_mc_log_moment(u, r, i, 200_000, rng)
            assert abs(weight * value - mean) < 4.0 * se

    def test_validation(self):
        with pytest.raises(ValueError):
            log_moment(np.array([1.0, -1.0]), np.zeros(2), 0)
        with pytest.raises(ValueError):
            log_moment(np.ones(2), np.array([1.0, -1.0]), 0)
        with pytest.raises(ValueError):
            log_moment(np.ones(2), np.zeros(3), 0)
        with pytest.raises(ValueError):
            log_moment(np.ones(2), np.zeros(2), 2)
        with pytest.raises(ValueError):
            monomial_moment(np.ones(2), np.zeros(2), np.array([-0.5, 0.0]))


class TestDigammaSystem:
    @staticmethod
    def targets(u):
        u = np.asarray(u, dtype=np.float64)
        return sp.digamma(u) - sp.digamma(u.sum())

    def test_known_flat_solution(self):
        u = solve_digamma_system(np.full(3, -1.5))
        np.testing.assert_allclose(u, 1.0, rtol=1e-9)

    def test_round_trip_sweep(self, rng):
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 7))
            u = rng.uniform(0.1, 50.0, size=n)
            got = solve_digamma_system(self.targets(u))
            worst = max(worst, float(np.max(np.abs(got - u) / u)))
        assert worst < 1e-8

    def test_concentrated_rows(self):
        for u in ([5000.0, 3000.0, 2000.0], [900.0, 0.5], [0.05, 0.2, 40.0]):
            got = solve_digamma_system(self.targets(u))
            np.testing.assert_allclose(got, u, rtol=1e-6)

    def test_forward_residual_is_tiny(self, rng):
        u = rng.uniform(0.2, 20.0, size=4)
        got = solve_digamma_system(self.targets(u))
        back = sp.digamma(got) - sp.digamma(got.sum())
        np.testing.assert_allclose(back, self.targets(u), atol=1e-10)

    def test_rejects_degenerate_targets(self):
        with pytest.raises(DegenerateSystemError):
            solve_digamma_system(np.array([-0.5, 0.0]))
        with pytest.raises(DegenerateSystemError):
            solve_digamma_system(np.array([-1e-9, -2.0]))

    def test_rejects_short_input(self):
        with pytest.raises(ValueError):
            solve_digamma_system(np.array([-1.5]))
