"""Prior configuration and weakly informative prior construction for the log odds ratio.

The treatment-effect prior is built from an odds-ratio range bound ``delta``:
a normal prior whose 95% central mass keeps the odds ratio inside
``(1/delta, delta)``.  Its width can be read as a prior effective sample
size through the standard error of a log odds ratio in a balanced 2x2 table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import ndtri

__all__ = [
    "TAU_PRIOR_DISTRIBUTIONS",
    "PriorConfig",
    "WipDerivation",
    "wip_sigma",
    "unit_information_ess",
    "derive_wip",
    "default_priors",
    "vague_priors",
    "half_normal_quantile",
]

TAU_PRIOR_DISTRIBUTIONS = ("half-normal", "uniform", "half-cauchy")


@dataclass(frozen=True)
class PriorConfig:
    """Priors for the model: normal on each baseline log-odds, normal on the
    mean log odds ratio, and a scale prior on the heterogeneity sd."""

    mu_prior: tuple[float, float] = (0.0, 10.0)
    theta_prior: tuple[float, float] = (0.0, 2.82)
    tau_prior_dist: str = "half-normal"
    tau_prior_scale: float = 0.5

    def __post_init__(self) -> None:
        if self.mu_prior[1] <= 0.0:
            raise ValueError(f"mu prior sd must be > 0, got {self.mu_prior[1]}")
        if self.theta_prior[1] <= 0.0:
            raise ValueError(f"theta prior sd must be > 0, got {self.theta_prior[1]}")
        if self.tau_prior_dist not in TAU_PRIOR_DISTRIBUTIONS:
            raise ValueError(
                f"tau_prior_dist must be one of {TAU_PRIOR_DISTRIBUTIONS}, "
                f"got {self.tau_prior_dist!r}"
            )
        if self.tau_prior_scale <= 0.0:
            raise ValueError(f"tau prior scale must be > 0, got {self.tau_prior_scale}")


@dataclass(frozen=True)
class WipDerivation:
    """Record of a prior derivation from an odds-ratio bound."""

    delta: float
    sigma_prior: float
    effective_sample_size: float

    def __post_init__(self) -> None:
        if abs(self.sigma_prior - math.log(self.delta) / 1.96) > 1e-12:
            raise ValueError("sigma_prior must equal log(delta)/1.96")
        if abs(self.effective_sample_size - 16.0 / self.sigma_prior**2) > 1e-9:
            raise ValueError("effective_sample_size must equal 16/sigma_prior^2")


def wip_sigma(delta: float) -> float:
    """Prior standard deviation for the log odds ratio from bound ``delta``.

    Chosen so that the odds ratio lies in (1/delta, delta) with 95% prior
    probability: sigma = log(delta) / 1.96.
    """
    if not delta > 1.0:
        raise ValueError(f"delta must exceed 1 (no effect range otherwise), got {delta}")
    return math.log(delta) / 1.96


def unit_information_ess(sigma: float) -> float:
    """Prior effective sample size implied by a log-odds-ratio prior sd.

    A balanced 2x2 table with N/4 patients per cell gives the log odds ratio
    a squared standard error of 16/N, so sigma^2 = 16/N inverts to N = 16/sigma^2.
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return 16.0 / sigma**2


def derive_wip(delta: float) -> WipDerivation:
    sigma = wip_sigma(delta)
    return WipDerivation(delta, sigma, unit_information_ess(sigma))


def default_priors() -> PriorConfig:
    """Default weakly informative configuration.

    Baseline log-odds N(0, 10), log odds ratio N(0, 2.82) (the delta=250
    bound, reported to two decimals), heterogeneity half-normal with scale
    0.5 (median 0.337, upper 95% quantile 0.98).
    """
    return PriorConfig()


def vague_priors() -> PriorConfig:
    """Same as the defaults but with an effectively flat N(0, 100) effect prior."""
    return PriorConfig(theta_prior=(0.0, 100.0))


def half_normal_quantile(p: float, scale: float) -> float:
    """Quantile function of the half-normal distribution with the given scale."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must be in [0, 1), got {p}")
    if scale <= 0.0:
        raise ValueError(f"scale must be > 0, got {scale}")
    return scale * ndtri(0.5 * (1.0 + p))
