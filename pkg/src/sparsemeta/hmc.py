"""Hamiltonian Monte Carlo with dual-averaging warmup and diagonal mass adaptation.

Transitions use jittered trajectory lengths (uniform over [1, max_leapfrog]
leapfrog steps).  Each chain owns an RNG stream keyed by (seed, chain_id),
so chains are reproducible independently of execution order.  Post-warmup
draws are reported on the constrained scale (tau = exp(log_tau)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import MetaDataset
from .model import _prior_args, pack_counts
from .priors import PriorConfig

__all__ = [
    "SamplerConfig",
    "SamplerError",
    "ChainResult",
    "PosteriorDraws",
    "ModelTarget",
    "FunctionTarget",
    "prior_only_target",
    "leapfrog",
    "sample_chain",
    "run_chain",
    "run_chains",
    "rhat",
    "ess",
]

# dual-averaging constants, the usual choices
_DA_GAMMA = 0.05
_DA_T0 = 10.0
_DA_KAPPA = 0.75

_STEP_MIN = 1e-10
_STEP_MAX = 1e3
_LOG_STEP_MIN = math.log(_STEP_MIN)
_LOG_STEP_MAX = math.log(_STEP_MAX)


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    seed: int = 0
    target_acceptance: float = 0.8
    max_leapfrog: int = 64
    divergence_threshold: float = 1000.0
    init_jitter_sd: float = 0.1

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError(f"chains must be >= 1, got {self.chains}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.warmup < self.iterations:
            raise ValueError(
                f"warmup must satisfy 0 <= warmup < iterations, got "
                f"warmup={self.warmup}, iterations={self.iterations}"
            )
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError(
                f"target_acceptance must be in (0,1), got {self.target_acceptance}"
            )
        if self.max_leapfrog < 1:
            raise ValueError(f"max_leapfrog must be >= 1, got {self.max_leapfrog}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


class SamplerError(RuntimeError):
    """Chain failed to produce usable draws; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ModelTarget:
    """Joint posterior of the hierarchical binomial model as an HMC target."""

    def __init__(self, r0, n0, r1, n1, lchoose_sum, prior_args):
        self._r0, self._n0, self._r1, self._n1 = r0, n0, r1, n1
        self._lchoose = lchoose_sum
        self._prior = prior_args
        self.k = r0.shape[0]
        self.dim = 2 * self.k + 2
        self._backend = _kernels.active()

    @classmethod
    def from_dataset(cls, data: MetaDataset, cfg: PriorConfig) -> "ModelTarget":
        r0, n0, r1, n1, lch = pack_counts(data)
        return cls(r0, n0, r1, n1, lch, _prior_args(cfg))

    @classmethod
    def prior_only(cls, cfg: PriorConfig, k: int) -> "ModelTarget":
        """Dropping the likelihood (all counts zero) leaves the prior as target."""
        z = np.zeros(k)
        return cls(z, z.copy(), z.copy(), z.copy(), 0.0, _prior_args(cfg))

    def initial_position(self) -> np.ndarray:
        """Baselines at continuity-corrected pooled logits, theta=0, zeta=0, tau=0.1."""
        q = np.zeros(self.dim)
        rate = (self._r0 + self._r1 + 0.5) / (self._n0 + self._n1 + 1.0)
        q[: self.k] = np.log(rate) - np.log1p(-rate)
        q[self.dim - 1] = math.log(0.1)
        return q

    def logp_and_grad(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        return self._backend.logpost_and_grad(
            q, self._r0, self._n0, self._r1, self._n1, self._lchoose, *self._prior
        )

    def trajectory(self, q, p, inv_mass, step_size, n_steps, h0, threshold):
        return self._backend.trajectory(
            q, p, inv_mass, step_size, n_steps, h0, threshold,
            self._r0, self._n0, self._r1, self._n1, self._lchoose, *self._prior,
        )


class FunctionTarget:
    """HMC target defined by a plain (logp, grad) callable; used for generic
    densities and in tests."""

    def __init__(self, logp_and_grad_fn, dim: int, init: np.ndarray | None = None):
        self._fn = logp_and_grad_fn
        self.dim = dim
        self._init = np.zeros(dim) if init is None else np.asarray(init, dtype=np.float64)

    def initial_position(self) -> np.ndarray:
        return self._init.copy()

    def logp_and_grad(self, q):
        return self._fn(q)

    def trajectory(self, q, p, inv_mass, step_size, n_steps, h0, threshold):
        q = q.copy()
        p = p.copy()
        logp, grad = self._fn(q)
        divergent = False
        for _ in range(n_steps):
            p = p + 0.5 * step_size * grad
            q = q + step_size * (inv_mass * p)
            logp, grad = self._fn(q)
            p = p + 0.5 * step_size * grad
            h = -logp + 0.5 * np.sum(p * p * inv_mass)
            if not np.isfinite(h) or abs(h - h0) > threshold:
                divergent = True
                break
        return q, p, logp, divergent


def prior_only_target(cfg: PriorConfig, k: int) -> ModelTarget:
    """Test hook: the joint prior (likelihood removed) as a sampling target."""
    return ModelTarget.prior_only(cfg, k)


def leapfrog(state, momentum, step_size, gradient_fn):
    """One reversible leapfrog step with unit mass.

    Applying the step to (state', -momentum') returns (state, -momentum) up to
    rounding.  Non-finite output signals a divergent transition to the caller.
    """
    q = np.asarray(state, dtype=np.float64).copy()
    p = np.asarray(momentum, dtype=np.float64).copy()
    p = p + 0.5 * step_size * np.asarray(gradient_fn(q), dtype=np.float64)
    q = q + step_size * p
    p = p + 0.5 * step_size * np.asarray(gradient_fn(q), dtype=np.float64)
    return q, p


def _find_step_size(target, q, inv_mass, rng, target_accept, threshold):
    """Double/halve a trial step until one leapfrog step crosses the 0.5
    acceptance boundary."""
    lp0, _ = target.logp_and_grad(q)
    p = rng.standard_normal(target.dim) / np.sqrt(inv_mass)
    h0 = -lp0 + 0.5 * np.sum(p * p * inv_mass)
    eps = 1.0

    def accept_prob(eps):
        qn, pn, lpn, div = target.trajectory(q, p, inv_mass, eps, 1, h0, threshold)
        if div or not np.isfinite(lpn):
            return 0.0
        dh = (-lpn + 0.5 * np.sum(pn * pn * inv_mass)) - h0
        return math.exp(-dh) if dh > 0 else 1.0

    a = accept_prob(eps)
    direction = 1.0 if a > 0.5 else -1.0
    for _ in range(60):
        if direction > 0 and a <= 0.5:
            break
        if direction < 0 and a >= 0.5:
            break
        eps *= 2.0**direction
        if not _STEP_MIN < eps < _STEP_MAX:
            break
        a = accept_prob(eps)
    return min(max(eps, _STEP_MIN), _STEP_MAX)


def _mass_windows(warmup: int) -> list[tuple[int, int]]:
    """(start, end) iteration spans over which the diagonal metric is estimated.

    Stan-style schedule: a fast initial buffer, doubling covariance windows,
    and a fast terminal buffer.  Short warmups get scaled-down buffers; very
    short warmups adapt the step size only.
    """
    init_buf, term_buf, base = 75, 50, 25
    if warmup < init_buf + term_buf + base:
        init_buf = int(0.15 * warmup)
        term_buf = int(0.10 * warmup)
        base = warmup - init_buf - term_buf
        if base < 10:
            return []
    windows = []
    start = init_buf
    size = base
    while start + size <= warmup - term_buf:
        end = start + size
        # absorb a final stub that could not fit another doubling
        if end + 2 * size > warmup - term_buf:
            end = warmup - term_buf
        windows.append((start, end))
        start = end
        size *= 2
    return windows


@dataclass(frozen=True)
class ChainResult:
    """Post-warmup draws (constrained scale) and diagnostics for one chain."""

    chain_id: int
    mu: np.ndarray  # (n_keep, k)
    theta: np.ndarray  # (n_keep,)
    zeta: np.ndarray  # (n_keep, k)
    tau: np.ndarray  # (n_keep,)
    divergences: int
    warmup_divergences: int
    accept_rate: float
    step_size: float
    inv_mass: np.ndarray
    energy_error: np.ndarray  # per-transition |H drift|, inf when divergent
    accepted: np.ndarray  # per-transition accept flag


def sample_chain(target, scfg: SamplerConfig, chain_id: int) -> ChainResult:
    """Run one chain on an arbitrary target. Deterministic given (seed, chain_id)."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=scfg.seed, spawn_key=(chain_id,))
    )
    dim = target.dim
    k = (dim - 2) // 2
    threshold = scfg.divergence_threshold

    q = target.initial_position() + scfg.init_jitter_sd * rng.standard_normal(dim)
    inv_mass = np.ones(dim)
    eps = _find_step_size(target, q, inv_mass, rng, scfg.target_acceptance, threshold)

    # dual-averaging state
    da_mu = math.log(10.0 * eps)
    da_log_eps = math.log(eps)
    da_log_eps_bar = 0.0
    da_h_bar = 0.0
    da_count = 0

    windows = _mass_windows(scfg.warmup)
    window_idx = 0
    win_samples: list[np.ndarray] = []

    lp_cur, _ = target.logp_and_grad(q)
    if not np.isfinite(lp_cur):
        lp_cur = -np.inf

    n_keep = scfg.iterations - scfg.warmup
    kept = np.empty((n_keep, dim))
    energy_error = np.empty(n_keep)
    accepted = np.zeros(n_keep, dtype=bool)
    divergences = 0
    warmup_divergences = 0
    accept_sum = 0.0

    for it in range(scfg.iterations):
        in_warmup = it < scfg.warmup
        p = rng.standard_normal(dim) / np.sqrt(inv_mass)
        n_steps = int(rng.integers(1, scfg.max_leapfrog + 1))
        u = rng.uniform()

        kin0 = 0.5 * np.sum(p * p * inv_mass)
        h0 = (-lp_cur if np.isfinite(lp_cur) else np.inf) + kin0
        qn, pn, lpn, div = target.trajectory(q, p, inv_mass, eps, n_steps, h0, threshold)
        dh = math.inf
        if div or not np.isfinite(lpn):
            div = True
            alpha = 0.0
        else:
            dh = (-lpn + 0.5 * np.sum(pn * pn * inv_mass)) - h0
            if not np.isfinite(dh):
                div = True
                dh = math.inf
                alpha = 0.0
            else:
                alpha = math.exp(-dh) if dh > 0 else 1.0
        took = alpha > 0.0 and u < alpha
        if took:
            q = qn
            lp_cur = lpn

        if in_warmup:
            warmup_divergences += div
            # dual averaging toward the target acceptance statistic
            da_count += 1
            frac = 1.0 / (da_count + _DA_T0)
            da_h_bar = (1.0 - frac) * da_h_bar + frac * (scfg.target_acceptance - alpha)
            da_log_eps = da_mu - math.sqrt(da_count) / _DA_GAMMA * da_h_bar
            w = da_count**-_DA_KAPPA
            da_log_eps_bar = w * da_log_eps + (1.0 - w) * da_log_eps_bar
            eps = math.exp(min(max(da_log_eps, _LOG_STEP_MIN), _LOG_STEP_MAX))

            if window_idx < len(windows):
                win_start, win_end = windows[window_idx]
                if it >= win_start:
                    win_samples.append(q.copy())
                if it + 1 == win_end:
                    sample = np.asarray(win_samples)
                    n_s = sample.shape[0]
                    var = sample.var(axis=0, ddof=1) if n_s > 1 else np.ones(dim)
                    inv_mass = (n_s / (n_s + 5.0)) * var + 1e-3 * (5.0 / (n_s + 5.0))
                    win_samples = []
                    window_idx += 1
                    # restart step-size adaptation under the new metric
                    eps = _find_step_size(
                        target, q, inv_mass, rng, scfg.target_acceptance, threshold
                    )
                    da_mu = math.log(10.0 * eps)
                    da_log_eps = math.log(eps)
                    da_log_eps_bar = 0.0
                    da_h_bar = 0.0
                    da_count = 0
            if it + 1 == scfg.warmup:
                if warmup_divergences == scfg.warmup:
                    raise SamplerError(
                        f"chain {chain_id}: every warmup transition diverged",
                        diagnostics={
                            "chain_id": chain_id,
                            "warmup_divergences": warmup_divergences,
                            "step_size": eps,
                            "last_logp": lp_cur,
                        },
                    )
                if da_count > 0:
                    eps = math.exp(min(max(da_log_eps_bar, _LOG_STEP_MIN), _LOG_STEP_MAX))
        else:
            kept[it - scfg.warmup] = q
            energy_error[it - scfg.warmup] = abs(dh)
            accepted[it - scfg.warmup] = took
            divergences += div
            accept_sum += alpha

    return ChainResult(
        chain_id=chain_id,
        mu=kept[:, :k].copy(),
        theta=kept[:, k].copy(),
        zeta=kept[:, k + 1 : 2 * k + 1].copy(),
        tau=np.exp(kept[:, dim - 1]),
        divergences=divergences,
        warmup_divergences=warmup_divergences,
        accept_rate=accept_sum / n_keep,
        step_size=eps,
        inv_mass=inv_mass,
        energy_error=energy_error,
        accepted=accepted,
    )


def run_chain(
    data: MetaDataset, cfg: PriorConfig, scfg: SamplerConfig, chain_id: int
) -> ChainResult:
    """One chain of the model posterior for the given dataset and priors."""
    return sample_chain(ModelTarget.from_dataset(data, cfg), scfg, chain_id)


@dataclass(frozen=True)
class PosteriorDraws:
    """Merged post-warmup draws from all chains, with per-chain provenance."""

    k: int
    mu: np.ndarray  # (chains, n_keep, k)
    theta: np.ndarray  # (chains, n_keep)
    zeta: np.ndarray  # (chains, n_keep, k)
    tau: np.ndarray  # (chains, n_keep)
    divergences: tuple[int, ...]
    warmup_divergences: tuple[int, ...]
    accept_rate: tuple[float, ...]
    step_size: tuple[float, ...]
    rhat_theta: float
    rhat_tau: float
    seed: int
    config: SamplerConfig

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    @property
    def n_draws(self) -> int:
        """Merged draw count across chains."""
        return self.theta.size

    @property
    def total_divergences(self) -> int:
        return int(sum(self.divergences))

    def theta_merged(self) -> np.ndarray:
        return self.theta.reshape(-1)

    def tau_merged(self) -> np.ndarray:
        return self.tau.reshape(-1)


def run_chains(data: MetaDataset, cfg: PriorConfig, scfg: SamplerConfig) -> PosteriorDraws:
    """Run all configured chains and aggregate diagnostics."""
    target = ModelTarget.from_dataset(data, cfg)
    results = [sample_chain(target, scfg, cid) for cid in range(scfg.chains)]
    theta = np.stack([r.theta for r in results])
    tau = np.stack([r.tau for r in results])
    return PosteriorDraws(
        k=target.k,
        mu=np.stack([r.mu for r in results]),
        theta=theta,
        zeta=np.stack([r.zeta for r in results]),
        tau=tau,
        divergences=tuple(r.divergences for r in results),
        warmup_divergences=tuple(r.warmup_divergences for r in results),
        accept_rate=tuple(r.accept_rate for r in results),
        step_size=tuple(r.step_size for r in results),
        rhat_theta=rhat(theta) if scfg.chains >= 2 else float("nan"),
        rhat_tau=rhat(tau) if scfg.chains >= 2 else float("nan"),
        seed=scfg.seed,
        config=scfg,
    )


def rhat(chains_draws: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    Each chain is split in half; with W the mean within-sequence variance and
    B the between-sequence variance of n-length halves,
    R-hat = sqrt(((n-1)/n * W + B/n) / W).
    """
    x = np.asarray(chains_draws, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("need >= 2 chains with >= 4 draws each")
    half = x.shape[1] // 2
    seqs = np.concatenate([x[:, :half], x[:, half : 2 * half]], axis=0)
    n = half
    w = float(np.mean(np.var(seqs, axis=1, ddof=1)))
    b = n * float(np.var(np.mean(seqs, axis=1), ddof=1))
    if w == 0.0:
        return 1.0 if b == 0.0 else float("inf")
    return math.sqrt(((n - 1) / n * w + b / n) / w)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    xc = x - x.mean()
    size = 1
    while size < 2 * n:
        size *= 2
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def ess(chains_draws: np.ndarray) -> float:
    """Effective sample size from paired autocorrelation sums (initial
    monotone positive sequence), pooled across chains."""
    x = np.asarray(chains_draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        raise ValueError("need >= 4 draws")
    acov = np.stack([_autocov(x[i]) for i in range(m)])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = float(np.mean(chain_var))
    mean_acov = acov.mean(axis=0)
    if m > 1:
        var_plus = w * (n - 1.0) / n + float(np.var(x.mean(axis=1), ddof=1))
    else:
        var_plus = w * (n - 1.0) / n
    if var_plus == 0.0:
        return float(m * n)
    rho = 1.0 - (w - mean_acov) / var_plus
    # Geyer pairing: accumulate while pair sums stay positive, enforce monotonicity
    tau_sum = -1.0
    prev_pair = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev_pair)
        tau_sum += 2.0 * pair
        prev_pair = pair
        t += 2
    tau_int = max(tau_sum, 1.0 / (m * n))
    return float(m * n / tau_int)
