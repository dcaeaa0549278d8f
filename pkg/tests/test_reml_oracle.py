import numpy as np
import pytest

from app.exceptions import ConfigurationError, DomainError
from app.models import FitConfig
from app.services.reml_oracle import (
    MAX_PARAMETERS,
    marginal_covariance,
    optimize_reml,
    projection,
    reml_value,
    search_bounds,
)
from app.services.sop_solver import fit_gaussian
from tests.helpers import dense_reml_lambda, make_1d


class TestRemlValue:
    def test_projection_annihilates_fixed_effects(self, instance_1d):
        _, _, _, _, _, _, parts = instance_1d
        V = marginal_covariance([0.5], 0.1, parts)
        P = projection(V, parts.X)
        np.testing.assert_allclose(P @ parts.X, 0.0, atol=1e-9)
        np.testing.assert_allclose(P, P.T, atol=1e-10)

    def test_differences_match_classical_formulation(self, instance_1d):
        _, y, _, B, D, _, parts = instance_1d
        # same sigma2 / tau2 ratio, profiled sigma2: the two criteria differ by a constant
        values, classical = [], []
        for lam in (0.1, 1.0, 10.0):
            c_value, sigma2 = dense_reml_lambda(B.values, D.values, y, 2, lam)
            classical.append(c_value)
            values.append(reml_value([sigma2 / lam], sigma2, y, parts))
        np.testing.assert_allclose(np.diff(values), np.diff(classical), rtol=1e-8, atol=1e-8)

    def test_nonpositive_parameters(self, instance_1d):
        _, y, *_, parts = instance_1d
        with pytest.raises(DomainError):
            reml_value([0.0], 1.0, y, parts)
        with pytest.raises(DomainError):
            reml_value([1.0], -1.0, y, parts)

    def test_size_cap(self, instance_1d):
        _, y, *_, parts = instance_1d
        with pytest.raises(ConfigurationError, match="n <= 50"):
            reml_value([1.0], 1.0, y, parts, max_n=50)

    def test_size_cap_from_settings(self, instance_1d, monkeypatch):
        monkeypatch.setenv("SOPSPLINE_ORACLE_MAX_N", "20")
        _, y, *_, parts = instance_1d
        with pytest.raises(ConfigurationError):
            reml_value([1.0], 1.0, y, parts)


class TestOptimize:
    def test_bounds(self):
        y = np.array([0.0, 2.0, 4.0])
        b = search_bounds(y, 2)
        assert b.shape == (3, 2)
        np.testing.assert_allclose(np.exp(b[0]), [4e-10, 4e6])
        np.testing.assert_allclose(np.exp(b[-1]), [4e-10, 40.0])

    def test_too_many_parameters(self):
        *_, parts = make_1d(seed=1, p=MAX_PARAMETERS)
        with pytest.raises(ConfigurationError, match="at most"):
            optimize_reml(np.zeros(parts.n_obs) + np.arange(parts.n_obs), parts)

    def test_agrees_with_sop_fixed_point(self):
        _, y, *_, parts = make_1d(seed=21, p=2)
        res = fit_gaussian(y, parts, FitConfig(tol=1e-10, max_iter=5000))
        oracle = optimize_reml(y, parts, threads=2)
        sop_value = reml_value(res.tau2, res.sigma2, y, parts)
        assert sop_value <= oracle.minus2_reml + 1e-4
        assert oracle.minus2_reml <= sop_value + 1e-4
        assert oracle.schedule[0].stage.startswith("grid")
        assert oracle.evaluations == sum(s.evaluations for s in oracle.schedule)

    def test_no_signal_puts_variance_components_at_lower_edge(self):
        x, _, _, _, _, _, parts = make_1d(seed=22, p=2)
        y = 0.3 - 1.2 * x
        oracle = optimize_reml(y, parts)
        lower = np.exp(search_bounds(y, parts.n_components)[0, 0])
        assert np.all(oracle.tau2 <= 1e3 * lower)

    def test_starts_are_used(self, instance_1d):
        _, y, *_, parts = instance_1d
        oracle = optimize_reml(y, parts, starts=[([0.5], 0.05)])
        assert sum(s.stage.startswith("coordinate") for s in oracle.schedule) == 2

    def test_log_tau2_agrees_when_interior(self):
        for seed in range(3):
            _, y, *_, parts = make_1d(seed=30 + seed, p=2)
            res = fit_gaussian(y, parts, FitConfig(tol=1e-10, max_iter=5000))
            oracle = optimize_reml(y, parts)
            bounds = search_bounds(y, parts.n_components)
            log_tau2 = np.log(oracle.tau2)
            interior = (log_tau2 > bounds[:-1, 0] + 1.0) & (log_tau2 < bounds[:-1, 1] - 1.0)
            np.testing.assert_allclose(np.log(res.tau2)[interior], log_tau2[interior], rtol=0, atol=1e-3)
            assert np.log(res.sigma2) == pytest.approx(np.log(oracle.sigma2), abs=1e-3)

    def test_recovers_minimum_of_quadratic_criterion(self, mocker):
        _, y, *_, parts = make_1d(seed=1, p=2)
        v = np.var(y, ddof=1)
        target = np.log(np.array([0.3, 2.0, 0.05]) * v)
        curvature = np.array([1.0, 4.0, 0.5])

        def quadratic(tau2, sigma2, *args):
            point = np.log(np.append(tau2, sigma2))
            return 7.0 + float(np.sum(curvature * (point - target) ** 2))

        mocker.patch("app.services.reml_oracle.reml_value", side_effect=quadratic)
        oracle = optimize_reml(y, parts, threads=4)
        assert oracle.minus2_reml == pytest.approx(7.0, abs=1e-10)
        np.testing.assert_allclose(np.log(oracle.tau2), target[:-1], atol=1e-5)
        assert np.log(oracle.sigma2) == pytest.approx(target[-1], abs=1e-5)
        assert oracle.evaluations == sum(s.evaluations for s in oracle.schedule)

    def test_blas_threads_capped(self, instance_1d, mocker):
        limits = mocker.patch("app.services.reml_oracle.threadpool_limits")
        _, y, *_, parts = instance_1d
        optimize_reml(y, parts, threads=2)
        limits.assert_called_once_with(limits=2)
