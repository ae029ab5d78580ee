"""Joint log density of the binomial hierarchical model in non-centred form.

Per study i the two arms are binomial with
    logit p_ctrl = mu_i - theta/2
    logit p_trt  = mu_i + theta/2 + zeta_i * tau
so the study-level log odds ratio is theta + zeta_i * tau ~ N(theta, tau^2).
The unconstrained state carries log(tau); the prior density includes the
corresponding Jacobian term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

from . import _kernels
from .data import MetaDataset
from .priors import PriorConfig

__all__ = [
    "ParameterVector",
    "arm_probabilities",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "gradient",
    "pack_counts",
]


@dataclass(frozen=True)
class ParameterVector:
    """Unconstrained model state: baseline log-odds, mean effect, standardized
    study deviates, and the log heterogeneity sd."""

    mu: np.ndarray
    theta: float
    zeta: np.ndarray
    log_tau: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=np.float64))
        if self.mu.ndim != 1 or self.zeta.ndim != 1:
            raise ValueError("mu and zeta must be 1-D")
        if self.mu.shape != self.zeta.shape:
            raise ValueError(
                f"mu and zeta lengths differ: {self.mu.shape[0]} vs {self.zeta.shape[0]}"
            )
        values = np.concatenate((self.mu, [self.theta], self.zeta, [self.log_tau]))
        if not np.all(np.isfinite(values)):
            raise ValueError("all parameter entries must be finite")

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))

    def to_array(self) -> np.ndarray:
        """Pack as [mu_1..k, theta, zeta_1..k, log_tau]."""
        return np.concatenate((self.mu, [self.theta], self.zeta, [self.log_tau]))

    @classmethod
    def from_array(cls, values: np.ndarray, k: int) -> "ParameterVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (2 * k + 2,):
            raise ValueError(f"expected length {2 * k + 2}, got {values.shape}")
        return cls(
            mu=values[:k].copy(),
            theta=float(values[k]),
            zeta=values[k + 1 : 2 * k + 1].copy(),
            log_tau=float(values[2 * k + 1]),
        )

    def constrain(self) -> dict:
        """Constrained view: tau = exp(log_tau) alongside the raw scale."""
        return {
            "mu": self.mu.copy(),
            "theta": self.theta,
            "zeta": self.zeta.copy(),
            "tau": self.tau,
            "log_tau": self.log_tau,
        }

    @classmethod
    def unconstrain(cls, constrained: dict) -> "ParameterVector":
        """Inverse of :meth:`constrain`; uses log_tau when present so the
        round trip is exact, otherwise takes log(tau)."""
        if "log_tau" in constrained:
            log_tau = float(constrained["log_tau"])
        else:
            tau = float(constrained["tau"])
            if not tau > 0.0:
                raise ValueError(f"tau must be > 0, got {tau}")
            log_tau = float(np.log(tau))
        return cls(
            mu=np.asarray(constrained["mu"], dtype=np.float64),
            theta=float(constrained["theta"]),
            zeta=np.asarray(constrained["zeta"], dtype=np.float64),
            log_tau=log_tau,
        )


def pack_counts(data: MetaDataset):
    """Count arrays plus the summed log binomial coefficients (constant in the
    parameters, kept so likelihood values match textbook pmf evaluations)."""
    r0, n0, r1, n1 = data.counts()
    lchoose = gammaln(n0 + 1) - gammaln(r0 + 1) - gammaln(n0 - r0 + 1)
    lchoose += gammaln(n1 + 1) - gammaln(r1 + 1) - gammaln(n1 - r1 + 1)
    return r0, n0, r1, n1, float(np.sum(lchoose))


def _check_dims(data: MetaDataset, p: ParameterVector) -> None:
    if p.k != data.k:
        raise ValueError(f"parameter dimension {p.k} does not match study count {data.k}")


def arm_probabilities(p: ParameterVector, study_index: int) -> tuple[float, float]:
    """Event probabilities (control, experimental) for one study."""
    if not 0 <= study_index < p.k:
        raise IndexError(f"study_index {study_index} out of range for k={p.k}")
    mu_i = p.mu[study_index]
    p_ctrl = float(expit(mu_i - 0.5 * p.theta))
    p_trt = float(expit(mu_i + 0.5 * p.theta + p.zeta[study_index] * p.tau))
    return p_ctrl, p_trt


def _prior_args(cfg: PriorConfig):
    return (
        cfg.mu_prior[0],
        cfg.mu_prior[1],
        cfg.theta_prior[0],
        cfg.theta_prior[1],
        _kernels.TAU_DIST_CODES[cfg.tau_prior_dist],
        cfg.tau_prior_scale,
    )


def log_likelihood(data: MetaDataset, p: ParameterVector) -> float:
    """Sum of binomial log-pmfs over all studies and arms."""
    _check_dims(data, p)
    r0, n0, r1, n1, lch = pack_counts(data)
    return float(_kernels.active().log_likelihood(p.to_array(), r0, n0, r1, n1, lch))


def log_prior(p: ParameterVector, cfg: PriorConfig) -> float:
    """Log prior density on the unconstrained scale (tau Jacobian included).

    -inf when tau falls outside the support of a uniform scale prior.
    """
    return float(_kernels.active().log_prior(p.to_array(), p.k, *_prior_args(cfg)))


def log_posterior(data: MetaDataset, p: ParameterVector, cfg: PriorConfig) -> float:
    _check_dims(data, p)
    return log_likelihood(data, p) + log_prior(p, cfg)


def gradient(data: MetaDataset, p: ParameterVector, cfg: PriorConfig) -> np.ndarray:
    """Analytic gradient of the log posterior w.r.t. (mu, theta, zeta, log_tau)."""
    _check_dims(data, p)
    r0, n0, r1, n1, lch = pack_counts(data)
    _, grad = _kernels.active().logpost_and_grad(
        p.to_array(), r0, n0, r1, n1, lch, *_prior_args(cfg)
    )
    return grad
