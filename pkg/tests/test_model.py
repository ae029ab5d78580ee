import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import halfcauchy, halfnorm, norm

from sparsemeta.data import MetaDataset, Study, StudyArm, crins_death
from sparsemeta.model import (
    ParameterVector,
    arm_probabilities,
    gradient,
    log_likelihood,
    log_posterior,
    log_prior,
)
from sparsemeta.priors import PriorConfig, default_priors


def pv(mu, theta, zeta, log_tau):
    return ParameterVector(np.atleast_1d(mu), theta, np.atleast_1d(zeta), log_tau)


def single_study(r0, n0, r1, n1):
    return MetaDataset((Study("s", StudyArm(r0, n0), StudyArm(r1, n1)),))


def random_dataset(rng, k):
    studies = []
    for i in range(k):
        n0 = int(rng.integers(5, 120))
        n1 = int(rng.integers(5, 120))
        studies.append(
            Study(
                f"s{i}",
                StudyArm(int(rng.integers(0, n0 + 1)), n0),
                StudyArm(int(rng.integers(0, n1 + 1)), n1),
            )
        )
    return MetaDataset(tuple(studies))


class TestArmProbabilities:
    def test_identity_case(self):
        assert arm_probabilities(pv(0.0, 0.0, 0.0, 0.0), 0) == (0.5, 0.5)

    def test_analytic_logistic_values(self):
        p_ctrl, p_trt = arm_probabilities(pv(0.0, 2.0, 0.0, 1.3), 0)
        assert p_ctrl == pytest.approx(0.26894, abs=1e-5)
        assert p_trt == pytest.approx(0.73106, abs=1e-5)

    def test_direct_formula_evaluation(self):
        p_ctrl, p_trt = arm_probabilities(pv(1.0, 0.0, 1.0, math.log(0.5)), 0)
        assert p_ctrl == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), rel=1e-12)
        assert p_trt == pytest.approx(1.0 / (1.0 + math.exp(-1.5)), rel=1e-12)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            arm_probabilities(pv(0.0, 0.0, 0.0, 0.0), 1)

    def test_strictly_inside_unit_interval(self):
        # largest magnitudes where float64 can still represent 1 - p
        p_ctrl, p_trt = arm_probabilities(pv(15.0, 5.0, 2.0, 1.0), 0)
        assert 0.0 < p_ctrl < 1.0 and 0.0 < p_trt < 1.0
        p_ctrl, p_trt = arm_probabilities(pv(-15.0, -5.0, -2.0, 1.0), 0)
        assert 0.0 < p_ctrl < 1.0 and 0.0 < p_trt < 1.0


class TestLogLikelihood:
    def test_half_probability_closed_form(self):
        data = single_study(0, 10, 0, 10)
        assert log_likelihood(data, pv(0.0, 0.0, 0.0, 0.0)) == pytest.approx(
            20.0 * math.log(0.5), rel=1e-14
        )

    def test_saturation_approaches_zero(self):
        data = single_study(10, 10, 10, 10)
        value = log_likelihood(data, pv(30.0, 0.0, 0.0, 0.0))
        assert -1e-10 < value < 0.0

    def test_against_extended_precision_pmf(self):
        # oracle: per-cell binomial pmf summed at 50 digits
        data = crins_death()
        mu = np.array([-1.7, -3.5, -2.3, -2.6])
        theta = -0.5
        value = log_likelihood(data, pv(mu, theta, np.zeros(4), 0.0))
        mpmath.mp.dps = 50
        total = mpmath.mpf(0)
        for i, s in enumerate(data.studies):
            for arm, eta in (
                (s.control, mpmath.mpf(mu[i]) - mpmath.mpf(theta) / 2),
                (s.experimental, mpmath.mpf(mu[i]) + mpmath.mpf(theta) / 2),
            ):
                p = 1 / (1 + mpmath.exp(-eta))
                total += (
                    mpmath.log(mpmath.binomial(arm.total, arm.events))
                    + arm.events * mpmath.log(p)
                    + (arm.total - arm.events) * mpmath.log(1 - p)
                )
        assert value == pytest.approx(float(total), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            log_likelihood(crins_death(), pv(0.0, 0.0, 0.0, 0.0))


class TestLogPrior:
    def test_all_zero_closed_form(self):
        value = log_prior(pv(0.0, 0.0, 0.0, 0.0), default_priors())
        oracle = (
            norm.logpdf(0.0, 0.0, 10.0)
            + norm.logpdf(0.0, 0.0, 2.82)
            + norm.logpdf(0.0, 0.0, 1.0)
            + halfnorm.logpdf(1.0, scale=0.5)  # tau = exp(0) = 1
            + 0.0  # log-Jacobian log_tau
        )
        assert value == pytest.approx(float(oracle), rel=1e-12)

    def test_half_cauchy_closed_form(self):
        cfg = PriorConfig(tau_prior_dist="half-cauchy", tau_prior_scale=0.3)
        log_tau = 0.4
        value = log_prior(pv(0.2, -0.3, 0.7, log_tau), cfg)
        oracle = (
            norm.logpdf(0.2, 0.0, 10.0)
            + norm.logpdf(-0.3, 0.0, 2.82)
            + norm.logpdf(0.7, 0.0, 1.0)
            + halfcauchy.logpdf(math.exp(log_tau), scale=0.3)
            + log_tau
        )
        assert value == pytest.approx(float(oracle), rel=1e-12)

    def test_uniform_outside_support(self):
        cfg = PriorConfig(tau_prior_dist="uniform", tau_prior_scale=0.5)
        assert log_prior(pv(0.0, 0.0, 0.0, math.log(0.7)), cfg) == -math.inf
        assert math.isfinite(log_prior(pv(0.0, 0.0, 0.0, math.log(0.3)), cfg))

    def test_standard_normal_mode_term(self):
        # isolate the zeta term by differencing zeta=0 against a huge-sd config
        cfg = default_priors()
        base = log_prior(pv(0.0, 0.0, 0.0, 0.0), cfg)
        shifted = log_prior(pv(0.0, 0.0, 1.0, 0.0), cfg)
        assert base - shifted == pytest.approx(0.5, rel=1e-12)  # -z^2/2 difference
        assert -0.5 * math.log(2 * math.pi) == pytest.approx(-0.91894, abs=1e-5)

    def test_default_prior_finite_everywhere(self):
        rng = np.random.default_rng(0)
        cfg = default_priors()
        for _ in range(200):
            x = rng.normal(0.0, 20.0, size=6)
            value = log_prior(ParameterVector.from_array(x, 2), cfg)
            assert math.isfinite(value)


class TestLogPosterior:
    def test_equals_sum_of_parts(self):
        rng = np.random.default_rng(1)
        data = random_dataset(rng, 3)
        cfg = default_priors()
        for _ in range(100):
            p = ParameterVector.from_array(rng.normal(0.0, 1.5, 8), 3)
            assert log_posterior(data, p, cfg) == pytest.approx(
                log_likelihood(data, p) + log_prior(p, cfg), rel=1e-14
            )

    def test_monotone_toward_empirical_rates(self):
        # one large balanced study; moving mu toward the empirical logit helps
        data = single_study(300, 1000, 300, 1000)
        cfg = default_priors()
        empirical = math.log(0.3 / 0.7)
        far = pv(empirical + 2.0, 0.0, 0.0, math.log(0.2))
        near = pv(empirical, 0.0, 0.0, math.log(0.2))
        assert log_posterior(data, near, cfg) > log_posterior(data, far, cfg)

    def test_zero_study_dataset_rejected(self):
        from sparsemeta.data import DataError

        with pytest.raises(DataError, match="at least 1 study"):
            MetaDataset(())


class TestGradient:
    def test_symmetric_study_theta_component_zero(self):
        data = single_study(5, 20, 5, 20)
        empirical = math.log(0.25 / 0.75)
        g = gradient(data, pv(empirical, 0.0, 0.0, math.log(0.3)), default_priors())
        assert g[1] == pytest.approx(0.0, abs=1e-12)

    def test_zeta_gradient_at_tau_zero_is_prior_only(self):
        data = single_study(3, 30, 7, 40)
        zeta = 1.37
        g = gradient(data, pv(-1.0, 0.5, zeta, -745.0), default_priors())
        # tau = exp(-745) underflows to 0: likelihood decouples from zeta
        assert g[2] == pytest.approx(-zeta, rel=1e-12)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(2024)
        configs = [
            default_priors(),
            PriorConfig(tau_prior_dist="half-cauchy", tau_prior_scale=0.8),
            PriorConfig(theta_prior=(0.5, 1.5), mu_prior=(-1.0, 4.0)),
        ]
        worst = 0.0
        for _ in range(5):
            data = random_dataset(rng, int(rng.integers(1, 5)))
            cfg = configs[int(rng.integers(0, len(configs)))]
            for _ in range(10):
                x = rng.normal(0.0, 1.0, 2 * data.k + 2)
                x[-1] = rng.normal(-1.0, 0.7)
                g = gradient(data, ParameterVector.from_array(x, data.k), cfg)
                h = 1e-5
                for j in range(x.size):
                    xp, xm = x.copy(), x.copy()
                    xp[j] += h
                    xm[j] -= h
                    fd = (
                        log_posterior(data, ParameterVector.from_array(xp, data.k), cfg)
                        - log_posterior(data, ParameterVector.from_array(xm, data.k), cfg)
                    ) / (2 * h)
                    worst = max(worst, abs(g[j] - fd) / max(1.0, abs(g[j])))
        assert worst < 1e-5


class TestArmSwapInvariance:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_swap_maps_preserve_likelihood(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 5))
        data = random_dataset(rng, k)
        mu = rng.normal(0.0, 1.5, k)
        theta = float(rng.normal(0.0, 1.0))
        zeta = rng.normal(0.0, 1.0, k)
        log_tau = float(rng.normal(-1.0, 0.7))
        tau = math.exp(log_tau)

        swapped = MetaDataset(
            tuple(Study(s.label, s.experimental, s.control) for s in data.studies)
        )
        original = log_likelihood(data, ParameterVector(mu, theta, zeta, log_tau))
        mapped = log_likelihood(
            swapped, ParameterVector(mu + zeta * tau, -theta, -zeta, log_tau)
        )
        assert mapped == pytest.approx(original, abs=1e-12, rel=1e-12)


class TestParameterVector:
    def test_pack_unpack_round_trip(self):
        x = np.array([0.1, -0.2, 0.3, 1.5, -0.7, 0.9])
        p = ParameterVector.from_array(x, 2)
        assert np.array_equal(p.to_array(), x)

    def test_constrain_unconstrain_exact_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            p = ParameterVector.from_array(rng.normal(0.0, 2.0, 6), 2)
            q = ParameterVector.unconstrain(p.constrain())
            assert q.log_tau == p.log_tau
            assert np.array_equal(q.mu, p.mu)
            assert q.theta == p.theta
            assert np.array_equal(q.zeta, p.zeta)

    def test_unconstrain_from_tau_alone(self):
        q = ParameterVector.unconstrain(
            {"mu": [0.0], "theta": 0.5, "zeta": [0.1], "tau": 0.25}
        )
        assert q.tau == pytest.approx(0.25, rel=1e-15)
        with pytest.raises(ValueError, match="tau"):
            ParameterVector.unconstrain(
                {"mu": [0.0], "theta": 0.5, "zeta": [0.1], "tau": 0.0}
            )

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            pv(math.nan, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError, match="finite"):
            pv(0.0, math.inf, 0.0, 0.0)

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError, match="lengths"):
            ParameterVector(np.zeros(2), 0.0, np.zeros(3), 0.0)
