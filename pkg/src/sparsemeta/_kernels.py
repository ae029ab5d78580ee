"""Hot numeric kernels: joint log density, analytic gradient, leapfrog trajectories.

The same numpy source is built twice: once plain and once compiled with
numba ``@njit``.  The active backend is chosen at import time - numba when
available, pure numpy when numba is missing or the ``SPARSEMETA_NO_NUMBA``
environment variable is set to a non-empty value.  Both backends implement
identical floating-point operations; agreement is at rounding level, and
seeded runs are bit-reproducible within a backend.

Parameter layout (unconstrained, length 2k+2):
    [mu_1..mu_k, theta, zeta_1..zeta_k, log_tau]

tau prior codes follow the order half-normal=1, uniform=2, half-cauchy=3.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "TAU_HALF_NORMAL",
    "TAU_UNIFORM",
    "TAU_HALF_CAUCHY",
    "TAU_DIST_CODES",
    "active",
    "numpy_backend",
    "numba_backend",
]

TAU_HALF_NORMAL = 1
TAU_UNIFORM = 2
TAU_HALF_CAUCHY = 3
TAU_DIST_CODES = {
    "half-normal": TAU_HALF_NORMAL,
    "uniform": TAU_UNIFORM,
    "half-cauchy": TAU_HALF_CAUCHY,
}

_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))
_LOG_PI = float(np.log(np.pi))


class Backend:
    """Bundle of kernel callables for one execution backend."""

    def __init__(self, name, log_likelihood, log_prior, logpost_and_grad, trajectory):
        self.name = name
        self.log_likelihood = log_likelihood
        self.log_prior = log_prior
        self.logpost_and_grad = logpost_and_grad
        self.trajectory = trajectory


def _build(jit) -> Backend:
    @jit
    def _softplus(x):
        # log(1 + exp(x)), stable for large |x|
        return np.log1p(np.exp(-np.abs(x))) + np.where(x > 0.0, x, 0.0)

    @jit
    def log_likelihood(pos, r0, n0, r1, n1, lchoose_sum):
        k = r0.shape[0]
        mu = pos[:k]
        theta = pos[k]
        zeta = pos[k + 1 : 2 * k + 1]
        tau = np.exp(pos[2 * k + 1])
        eta0 = mu - 0.5 * theta
        eta1 = mu + 0.5 * theta + zeta * tau
        # r*log(p) + (n-r)*log(1-p) with p = logistic(eta)
        ll0 = -np.sum(r0 * _softplus(-eta0) + (n0 - r0) * _softplus(eta0))
        ll1 = -np.sum(r1 * _softplus(-eta1) + (n1 - r1) * _softplus(eta1))
        return lchoose_sum + ll0 + ll1

    @jit
    def log_prior(pos, k, mu_mean, mu_sd, th_mean, th_sd, tau_code, tau_scale):
        mu = pos[:k]
        theta = pos[k]
        zeta = pos[k + 1 : 2 * k + 1]
        log_tau = pos[2 * k + 1]
        tau = np.exp(log_tau)

        lp = -0.5 * np.sum(((mu - mu_mean) / mu_sd) ** 2) - k * (
            np.log(mu_sd) + 0.5 * _LOG_2PI
        )
        lp += -0.5 * ((theta - th_mean) / th_sd) ** 2 - np.log(th_sd) - 0.5 * _LOG_2PI
        lp += -0.5 * np.sum(zeta**2) - k * 0.5 * _LOG_2PI

        # tau prior evaluated at tau = exp(log_tau), plus the log-Jacobian log_tau
        if tau_code == TAU_HALF_NORMAL:
            lp += (
                _LOG_2
                - 0.5 * _LOG_2PI
                - np.log(tau_scale)
                - 0.5 * (tau / tau_scale) ** 2
                + log_tau
            )
        elif tau_code == TAU_UNIFORM:
            if tau < tau_scale:
                lp += -np.log(tau_scale) + log_tau
            else:
                lp = -np.inf
        else:  # half-Cauchy
            lp += (
                _LOG_2
                - _LOG_PI
                - np.log(tau_scale)
                - np.log1p((tau / tau_scale) ** 2)
                + log_tau
            )
        return lp

    @jit
    def logpost_and_grad(
        pos, r0, n0, r1, n1, lchoose_sum, mu_mean, mu_sd, th_mean, th_sd, tau_code, tau_scale
    ):
        k = r0.shape[0]
        mu = pos[:k]
        theta = pos[k]
        zeta = pos[k + 1 : 2 * k + 1]
        log_tau = pos[2 * k + 1]
        tau = np.exp(log_tau)

        eta0 = mu - 0.5 * theta
        eta1 = mu + 0.5 * theta + zeta * tau
        sp_m0 = _softplus(-eta0)
        sp_p0 = _softplus(eta0)
        sp_m1 = _softplus(-eta1)
        sp_p1 = _softplus(eta1)
        logp = lchoose_sum - np.sum(r0 * sp_m0 + (n0 - r0) * sp_p0) - np.sum(
            r1 * sp_m1 + (n1 - r1) * sp_p1
        )
        # d/d eta of the binomial term is r - n*p, with p = exp(-softplus(-eta))
        res0 = r0 - n0 * np.exp(-sp_m0)
        res1 = r1 - n1 * np.exp(-sp_m1)

        logp += -0.5 * np.sum(((mu - mu_mean) / mu_sd) ** 2) - k * (
            np.log(mu_sd) + 0.5 * _LOG_2PI
        )
        logp += -0.5 * ((theta - th_mean) / th_sd) ** 2 - np.log(th_sd) - 0.5 * _LOG_2PI
        logp += -0.5 * np.sum(zeta**2) - k * 0.5 * _LOG_2PI

        grad = np.empty(2 * k + 2)
        grad[:k] = res0 + res1 - (mu - mu_mean) / mu_sd**2
        grad[k] = 0.5 * (np.sum(res1) - np.sum(res0)) - (theta - th_mean) / th_sd**2
        grad[k + 1 : 2 * k + 1] = tau * res1 - zeta
        d_lt = np.sum(zeta * tau * res1)

        if tau_code == TAU_HALF_NORMAL:
            logp += (
                _LOG_2
                - 0.5 * _LOG_2PI
                - np.log(tau_scale)
                - 0.5 * (tau / tau_scale) ** 2
                + log_tau
            )
            d_lt += 1.0 - (tau / tau_scale) ** 2
        elif tau_code == TAU_UNIFORM:
            if tau < tau_scale:
                logp += -np.log(tau_scale) + log_tau
                d_lt += 1.0
            else:
                logp = -np.inf
                d_lt = 0.0
        else:  # half-Cauchy
            t2 = (tau / tau_scale) ** 2
            logp += _LOG_2 - _LOG_PI - np.log(tau_scale) - np.log1p(t2) + log_tau
            d_lt += 1.0 - 2.0 * t2 / (1.0 + t2)
        grad[2 * k + 1] = d_lt
        return logp, grad

    @jit
    def trajectory(
        q0,
        p0,
        inv_mass,
        step_size,
        n_steps,
        h0,
        divergence_threshold,
        r0,
        n0,
        r1,
        n1,
        lchoose_sum,
        mu_mean,
        mu_sd,
        th_mean,
        th_sd,
        tau_code,
        tau_scale,
    ):
        """Leapfrog for n_steps; returns (q, p, logp, divergent).

        Divergent when the Hamiltonian drifts from h0 by more than the
        threshold or any quantity turns non-finite; integration stops there.
        """
        q = q0.copy()
        p = p0.copy()
        logp, grad = logpost_and_grad(
            q, r0, n0, r1, n1, lchoose_sum, mu_mean, mu_sd, th_mean, th_sd, tau_code, tau_scale
        )
        divergent = False
        for _ in range(n_steps):
            p = p + 0.5 * step_size * grad
            q = q + step_size * (inv_mass * p)
            logp, grad = logpost_and_grad(
                q, r0, n0, r1, n1, lchoose_sum, mu_mean, mu_sd, th_mean, th_sd, tau_code, tau_scale
            )
            p = p + 0.5 * step_size * grad
            h = -logp + 0.5 * np.sum(p * p * inv_mass)
            if not np.isfinite(h) or np.abs(h - h0) > divergence_threshold:
                divergent = True
                break
        return q, p, logp, divergent

    name = "numpy" if jit is _identity else "numba"
    return Backend(name, log_likelihood, log_prior, logpost_and_grad, trajectory)


def _identity(fn):
    return fn


numpy_backend = _build(_identity)

numba_backend: Backend | None = None
if not os.environ.get("SPARSEMETA_NO_NUMBA"):
    try:
        import numba

        numba_backend = _build(numba.njit)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_backend = None


def active() -> Backend:
    """The backend selected for this process."""
    return numba_backend if numba_backend is not None else numpy_backend


BACKEND = active().name
