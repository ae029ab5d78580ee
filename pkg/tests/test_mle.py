import math

import numpy as np
import pytest
from scipy.stats import binom, norm

from sparsemeta.data import MetaDataset, Study, StudyArm, crins_death, crins_ptld
from sparsemeta.mle import FAILURE_REASONS, MleResult, fit_mle, gh_nodes, marginal_log_likelihood
from sparsemeta.model import ParameterVector, log_likelihood


def single_study(r0, n0, r1, n1):
    return MetaDataset((Study("s", StudyArm(r0, n0), StudyArm(r1, n1)),))


def random_instance(rng, tau_max=0.5):
    k = int(rng.integers(1, 5))
    studies = []
    for i in range(k):
        n0 = int(rng.integers(10, 200))
        n1 = int(rng.integers(10, 200))
        p0 = rng.uniform(0.01, 0.3)
        p1 = rng.uniform(0.01, 0.3)
        studies.append(
            Study(
                f"s{i}",
                StudyArm(int(rng.binomial(n0, p0)), n0),
                StudyArm(int(rng.binomial(n1, p1)), n1),
            )
        )
    data = MetaDataset(tuple(studies))
    return data, rng.normal(-2.0, 1.0, k), float(rng.normal(0.0, 1.0)), float(
        rng.uniform(0.0, tau_max)
    )


def dense_oracle(data, mu, theta, tau):
    """Trapezoid integration of the treatment-arm integrand on z in [-12, 12]."""
    r0, n0, r1, n1 = data.counts()
    z = np.linspace(-12.0, 12.0, 100_001)
    phi = norm.pdf(z)
    total = 0.0
    for i in range(data.k):
        total += binom.logpmf(r0[i], n0[i], 1.0 / (1.0 + np.exp(-(mu[i] - theta / 2))))
        if tau == 0.0:
            total += binom.logpmf(r1[i], n1[i], 1.0 / (1.0 + np.exp(-(mu[i] + theta / 2))))
        else:
            vals = binom.pmf(r1[i], n1[i], 1.0 / (1.0 + np.exp(-(mu[i] + theta / 2 + tau * z))))
            total += math.log(np.trapezoid(vals * phi, z))
    return float(total)


class TestGhNodes:
    def test_polynomial_exactness(self):
        x, w = gh_nodes(7)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(w * x**2) == pytest.approx(1.0, abs=1e-12)
        assert np.sum(w * x**4) == pytest.approx(3.0, abs=1e-12)
        x2, w2 = gh_nodes(2)
        assert np.sum(w2 * x2**2) == pytest.approx(1.0, abs=1e-12)

    def test_order_one_is_plug_in(self):
        x, w = gh_nodes(1)
        assert x.shape == (1,) and x[0] == 0.0
        assert w[0] == pytest.approx(1.0, abs=1e-15)

    def test_rejects_zero_order(self):
        with pytest.raises(ValueError):
            gh_nodes(0)


class TestMarginalLogLikelihood:
    def test_tau_zero_collapses_exactly(self):
        data = crins_death()
        mu = np.array([-1.7, -3.5, -2.3, -2.6])
        theta = -0.5
        exact = log_likelihood(data, ParameterVector(mu, theta, np.zeros(4), 0.0))
        assert marginal_log_likelihood(data, mu, theta, 0.0) == exact

    def test_order_7_vs_41(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            data, mu, theta, tau = random_instance(rng)
            l7 = marginal_log_likelihood(data, mu, theta, tau, 7)
            l41 = marginal_log_likelihood(data, mu, theta, tau, 41)
            assert abs(l7 - l41) / abs(l41) < 1e-6

    def test_order_7_vs_dense_trapezoid(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            data, mu, theta, tau = random_instance(rng)
            l7 = marginal_log_likelihood(data, mu, theta, tau, 7)
            oracle = dense_oracle(data, mu, theta, tau)
            assert abs(l7 - oracle) / abs(oracle) < 1e-6

    def test_heavy_heterogeneity_stays_close(self):
        # intrinsic order-7 truncation grows with tau; the bound is looser there
        rng = np.random.default_rng(5)
        for _ in range(15):
            data, mu, theta, _ = random_instance(rng)
            tau = float(rng.uniform(0.5, 1.0))
            l7 = marginal_log_likelihood(data, mu, theta, tau, 7)
            l41 = marginal_log_likelihood(data, mu, theta, tau, 41)
            assert abs(l7 - l41) / abs(l41) < 1e-4

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            marginal_log_likelihood(crins_death(), np.zeros(3), 0.0, 0.1)

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError, match="tau"):
            marginal_log_likelihood(crins_death(), np.zeros(4), 0.0, -0.1)


class TestFitMle:
    def test_perfectly_balanced_study(self):
        fit = fit_mle(single_study(50, 100, 50, 100))
        assert abs(fit.theta_hat) < 1e-4
        assert fit.tau_hat == pytest.approx(0.0, abs=1e-6)
        assert fit.converged

    def test_crins_death(self):
        fit = fit_mle(crins_death())
        assert fit.converged
        assert fit.tau_hat == pytest.approx(0.0, abs=0.01)
        assert fit.ci_95 is not None
        assert fit.warnings == ()

    def test_crins_ptld_flagged_unreliable(self):
        fit = fit_mle(crins_ptld())
        assert fit.converged
        assert fit.tau_hat == pytest.approx(0.0, abs=0.01)
        assert fit.ci_95 is not None
        assert len(fit.warnings) == 1  # near-singular information analog

    def test_crins_theta_matches_high_order_refit(self):
        # numeric regression anchored to the order-41 oracle refit
        for data in (crins_death(), crins_ptld()):
            base = fit_mle(data, order=7)
            oracle = fit_mle(data, order=41)
            assert base.theta_hat == pytest.approx(oracle.theta_hat, abs=1e-4)

    def test_local_optimality_audit(self):
        data = crins_death()
        fit = fit_mle(data)
        x = np.concatenate([fit.mu_hat, [fit.theta_hat], [fit.tau_hat]])
        best = marginal_log_likelihood(data, x[:-2], x[-2], x[-1])
        k = data.k
        for j in range(x.size):
            for sign in (-1.0, 1.0):
                y = x.copy()
                y[j] += sign * 1e-3
                if j == k + 1 and y[j] < 0.0:
                    continue  # tau boundary
                value = marginal_log_likelihood(data, y[:k], y[k], y[k + 1])
                assert value <= best + 1e-6

    def test_double_zero_never_raises(self):
        data = MetaDataset(
            (
                Study("z1", StudyArm(0, 10), StudyArm(0, 12)),
                Study("z2", StudyArm(0, 8), StudyArm(0, 9)),
            )
        )
        fit = fit_mle(data)
        assert isinstance(fit, MleResult)
        assert fit.failure_reason in FAILURE_REASONS
        if fit.converged:
            assert fit.se_theta is not None and math.isfinite(fit.se_theta)

    def test_ci_iff_converged_with_finite_se(self):
        with pytest.raises(ValueError, match="iff"):
            MleResult(
                theta_hat=0.0,
                tau_hat=0.0,
                mu_hat=np.zeros(1),
                se_theta=None,
                ci_95=(-1.0, 1.0),
                converged=False,
                failure_reason="non-finite-se",
            )

    def test_wald_interval_shape(self):
        fit = fit_mle(crins_death())
        low, high = fit.ci_95
        assert low == pytest.approx(fit.theta_hat - 1.96 * fit.se_theta, rel=1e-12)
        assert high == pytest.approx(fit.theta_hat + 1.96 * fit.se_theta, rel=1e-12)
