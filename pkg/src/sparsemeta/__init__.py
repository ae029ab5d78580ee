"""Bayesian random-effects meta-analysis of rare binary events.

A binomial hierarchical model with weakly informative priors, fitted by
Hamiltonian Monte Carlo, alongside a marginal maximum-likelihood comparator
and a seeded Monte-Carlo simulation harness.
"""

__version__ = "0.1.0"

from .data import DataError, MetaDataset, Study, StudyArm, crins_death, crins_ptld, load_dataset
from .hmc import (
    ChainResult,
    PosteriorDraws,
    SamplerConfig,
    SamplerError,
    ess,
    leapfrog,
    prior_only_target,
    rhat,
    run_chain,
    run_chains,
)
from .mle import MleResult, fit_mle, gh_nodes, marginal_log_likelihood
from .model import (
    ParameterVector,
    arm_probabilities,
    gradient,
    log_likelihood,
    log_posterior,
    log_prior,
)
from .priors import (
    PriorConfig,
    WipDerivation,
    default_priors,
    derive_wip,
    half_normal_quantile,
    unit_information_ess,
    vague_priors,
    wip_sigma,
)
from .simulation import (
    DatasetTruth,
    MethodMetrics,
    ScenarioReport,
    ScenarioSpec,
    generate_dataset,
    run_scenario,
    scenario_grid,
    zero_fractions,
)
from .summaries import EffectSummary, ForestRow, forest_table, hdi, observed_log_or, summarize_fit

__all__ = [
    "__version__",
    "DataError",
    "MetaDataset",
    "Study",
    "StudyArm",
    "crins_death",
    "crins_ptld",
    "load_dataset",
    "ChainResult",
    "PosteriorDraws",
    "SamplerConfig",
    "SamplerError",
    "ess",
    "leapfrog",
    "prior_only_target",
    "rhat",
    "run_chain",
    "run_chains",
    "MleResult",
    "fit_mle",
    "gh_nodes",
    "marginal_log_likelihood",
    "ParameterVector",
    "arm_probabilities",
    "gradient",
    "log_likelihood",
    "log_posterior",
    "log_prior",
    "PriorConfig",
    "WipDerivation",
    "default_priors",
    "derive_wip",
    "half_normal_quantile",
    "unit_information_ess",
    "vague_priors",
    "wip_sigma",
    "DatasetTruth",
    "MethodMetrics",
    "ScenarioReport",
    "ScenarioSpec",
    "generate_dataset",
    "run_scenario",
    "scenario_grid",
    "zero_fractions",
    "EffectSummary",
    "ForestRow",
    "forest_table",
    "hdi",
    "observed_log_or",
    "summarize_fit",
]
