"""Seeded Monte-Carlo harness: dataset generation under the hierarchical
binomial model, estimator comparison, and per-scenario metrics.

Stream splitting: replicate r of a scenario draws its data from
``SeedSequence(spec.seed, spawn_key=(r,))`` and seeds its sampler from
``SeedSequence(spec.seed, spawn_key=(r, 1))``; scenario s of a grid built
with base seed B uses ``SeedSequence(B, spawn_key=(s,))``.  Replicates are
independent work items; aggregation is a reduction over replicate index, so
results do not depend on execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import MetaDataset, Study, StudyArm
from .hmc import SamplerConfig, run_chains
from .mle import fit_mle
from .priors import default_priors, vague_priors
from .summaries import hdi

__all__ = [
    "THETA_GRID",
    "K_GRID",
    "ScenarioSpec",
    "DatasetTruth",
    "MethodMetrics",
    "ScenarioReport",
    "desk_sampler_config",
    "paper_sampler_config",
    "generate_dataset",
    "zero_fractions",
    "run_scenario",
    "scenario_grid",
]

THETA_GRID = (-5.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0)
K_GRID = (2, 3, 5)

RARE_BASELINE = (0.005, 0.05)
HIGH_BASELINE = (0.05, 0.2)

ALL_METHODS = ("wip", "vague", "mle")


@dataclass(frozen=True)
class ScenarioSpec:
    k: int
    theta_true: float
    tau_true: float = 0.28
    baseline_risk_range: tuple[float, float] = RARE_BASELINE
    sample_size_lognormal: tuple[float, float] = (5.0, 1.0)
    replications: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        low, high = self.baseline_risk_range
        if not 0.0 < low < high < 1.0:
            raise ValueError(f"baseline risks must satisfy 0 < low < high < 1, got {self.baseline_risk_range}")
        if self.tau_true < 0.0:
            raise ValueError(f"tau_true must be >= 0, got {self.tau_true}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


@dataclass(frozen=True)
class DatasetTruth:
    """Generating parameters behind one simulated dataset."""

    theta_true: float
    tau_true: float
    study_theta: np.ndarray  # per-study log odds ratio theta_i
    baseline_risk: np.ndarray  # control-arm event probability p_i
    mu: np.ndarray  # predictor-scale baseline: logit(p_i) + theta_true/2


def desk_sampler_config() -> SamplerConfig:
    """Per-replicate sampler budget for interactive-scale simulation runs."""
    return SamplerConfig(chains=2, iterations=1500, warmup=500)


def paper_sampler_config() -> SamplerConfig:
    """The full study budget: 3 parallel chains, 2000 iterations, 1000 burn-in."""
    return SamplerConfig(chains=3, iterations=2000, warmup=1000)


def generate_dataset(spec: ScenarioSpec, replicate_index: int) -> tuple[MetaDataset, DatasetTruth]:
    """One simulated dataset; deterministic given (spec.seed, replicate_index).

    Per study: total size ~ LogNormal(meanlog, sdlog) rounded to the nearest
    integer and floored at 2; arm allocation Binomial(N, 1/2) redrawn until
    both arms have at least one patient; control risk ~ Uniform(low, high);
    study effect theta_i ~ N(theta_true, tau_true^2); binomial event counts
    in each arm.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(replicate_index,))
    )
    low, high = spec.baseline_risk_range
    meanlog, sdlog = spec.sample_size_lognormal
    studies = []
    study_theta = np.empty(spec.k)
    baseline = np.empty(spec.k)
    mu = np.empty(spec.k)
    for i in range(spec.k):
        total = max(2, int(np.rint(rng.lognormal(meanlog, sdlog))))
        n_trt = int(rng.binomial(total, 0.5))
        while n_trt == 0 or n_trt == total:
            n_trt = int(rng.binomial(total, 0.5))
        n_ctrl = total - n_trt
        p_ctrl = float(rng.uniform(low, high))
        theta_i = spec.theta_true + spec.tau_true * float(rng.standard_normal())
        logit_p = math.log(p_ctrl) - math.log1p(-p_ctrl)
        eta_trt = logit_p + theta_i
        p_trt = 1.0 / (1.0 + math.exp(-eta_trt)) if eta_trt > -700.0 else 0.0
        r_ctrl = int(rng.binomial(n_ctrl, p_ctrl))
        r_trt = int(rng.binomial(n_trt, p_trt))
        studies.append(
            Study(f"study-{i + 1}", StudyArm(r_ctrl, n_ctrl), StudyArm(r_trt, n_trt))
        )
        study_theta[i] = theta_i
        baseline[i] = p_ctrl
        mu[i] = logit_p + 0.5 * spec.theta_true
    truth = DatasetTruth(spec.theta_true, spec.tau_true, study_theta, baseline, mu)
    return MetaDataset(tuple(studies)), truth


def zero_fractions(data: MetaDataset) -> tuple[float, float]:
    """(fraction of single-zero studies, fraction of double-zero studies)."""
    single = 0
    double = 0
    for s in data.studies:
        zeros = (s.control.events == 0) + (s.experimental.events == 0)
        if zeros == 1:
            single += 1
        elif zeros == 2:
            double += 1
    return single / data.k, double / data.k


@dataclass(frozen=True)
class MethodMetrics:
    method: str
    bias_theta: float
    coverage: float
    mean_interval_length: float
    bias_tau: float
    replications_used: int
    failure_fraction: float


@dataclass(frozen=True)
class ScenarioReport:
    k: int
    theta_true: float
    tau_true: float
    baseline_risk_range: tuple[float, float]
    replications: int
    seed: int
    fraction_single_zero: float
    fraction_double_zero: float
    mle_failure_fraction: float
    metrics: dict[str, MethodMetrics]


def _replicate_seed(spec: ScenarioSpec, replicate_index: int) -> int:
    return int(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(replicate_index, 1))
        .generate_state(1, dtype=np.uint64)[0]
    )


def _run_replicate(args) -> dict:
    """One replicate: generate, fit every requested method, record estimates."""
    spec, r, methods, sampler, mle_order = args
    data, truth = generate_dataset(spec, r)
    single, double = zero_fractions(data)
    record: dict = {"replicate": r, "single": single, "double": double}
    scfg = replace(sampler, seed=_replicate_seed(spec, r))
    for method in methods:
        if method == "mle":
            fit = fit_mle(data, order=mle_order)
            if fit.converged and fit.ci_95 is not None:
                record["mle"] = (fit.theta_hat, fit.ci_95[0], fit.ci_95[1], fit.tau_hat)
            else:
                record["mle"] = None
        else:
            cfg = default_priors() if method == "wip" else vague_priors()
            draws = run_chains(data, cfg, scfg)
            theta = draws.theta_merged()
            low, high = hdi(theta, 0.95)
            record[method] = (
                float(np.median(theta)),
                low,
                high,
                float(np.median(draws.tau_merged())),
            )
    return record


def _aggregate(spec: ScenarioSpec, methods, records) -> ScenarioReport:
    records = sorted(records, key=lambda rec: rec["replicate"])
    n = len(records)
    metrics = {}
    mle_failures = 0
    for method in methods:
        rows = [rec[method] for rec in records if rec[method] is not None]
        if method == "mle":
            mle_failures = n - len(rows)
        if rows:
            points = np.array([t[0] for t in rows])
            lows = np.array([t[1] for t in rows])
            highs = np.array([t[2] for t in rows])
            taus = np.array([t[3] for t in rows])
            metrics[method] = MethodMetrics(
                method=method,
                bias_theta=float(np.mean(points - spec.theta_true)),
                coverage=float(np.mean((lows <= spec.theta_true) & (spec.theta_true <= highs))),
                mean_interval_length=float(np.mean(highs - lows)),
                bias_tau=float(np.mean(taus - spec.tau_true)),
                replications_used=len(rows),
                failure_fraction=(n - len(rows)) / n,
            )
        else:
            metrics[method] = MethodMetrics(method, math.nan, math.nan, math.nan, math.nan, 0, 1.0)
    return ScenarioReport(
        k=spec.k,
        theta_true=spec.theta_true,
        tau_true=spec.tau_true,
        baseline_risk_range=spec.baseline_risk_range,
        replications=n,
        seed=spec.seed,
        fraction_single_zero=float(np.mean([rec["single"] for rec in records])),
        fraction_double_zero=float(np.mean([rec["double"] for rec in records])),
        mle_failure_fraction=mle_failures / n if "mle" in methods else 0.0,
        metrics=metrics,
    )


def run_scenario(
    spec: ScenarioSpec,
    methods=ALL_METHODS,
    *,
    sampler: SamplerConfig | None = None,
    mle_order: int = 7,
    n_jobs: int = 1,
) -> ScenarioReport:
    """Run every replicate of one scenario and aggregate the metrics.

    Estimator failures are recorded, never raised; failed maximum-likelihood
    replicates are excluded from that method's aggregates only.  Bayesian
    fits always produce an estimate and count as zero failures.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in ALL_METHODS:
            raise ValueError(f"unknown method {m!r}, expected subset of {ALL_METHODS}")
    sampler = desk_sampler_config() if sampler is None else sampler
    tasks = [(spec, r, methods, sampler, mle_order) for r in range(spec.replications)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_replicate, tasks, chunksize=8))
    else:
        records = [_run_replicate(t) for t in tasks]
    return _aggregate(spec, methods, records)


def scenario_grid(kind: str, replications: int = 500, base_seed: int = 20240501) -> list[ScenarioSpec]:
    """The full k x theta grid (39 scenarios) for one baseline-risk regime.

    ``rare`` draws control risks from (0.005, 0.05); ``high-baseline`` from
    (0.05, 0.2).  Each scenario gets its own derived seed.
    """
    if kind == "rare":
        baseline = RARE_BASELINE
    elif kind == "high-baseline":
        baseline = HIGH_BASELINE
    else:
        raise ValueError(f"kind must be 'rare' or 'high-baseline', got {kind!r}")
    specs = []
    index = 0
    for k in K_GRID:
        for theta in THETA_GRID:
            seed = int(
                np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
                .generate_state(1, dtype=np.uint64)[0]
            )
            specs.append(
                ScenarioSpec(
                    k=k,
                    theta_true=theta,
                    baseline_risk_range=baseline,
                    replications=replications,
                    seed=seed,
                )
            )
            index += 1
    return specs
