"""Effect summaries: highest-density intervals, observed log odds ratios with
continuity correction, and forest-table assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import MetaDataset, StudyArm
from .hmc import PosteriorDraws
from .mle import MleResult

__all__ = [
    "EffectSummary",
    "ForestRow",
    "ObservedLogOr",
    "hdi",
    "observed_log_or",
    "forest_table",
    "summarize_fit",
]

METHODS = ("wip", "vague", "mle")


@dataclass(frozen=True)
class EffectSummary:
    """Point and interval estimates of the treatment effect on both scales."""

    method: str
    point_log_or: float
    interval_log_or: tuple[float, float]
    point_or: float
    interval_or: tuple[float, float]
    tau_hat: float

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")


@dataclass(frozen=True)
class ForestRow:
    study: str
    log_or: float
    ci_low: float
    ci_high: float
    correction_applied: bool


class ObservedLogOr(NamedTuple):
    log_or: float
    ci_low: float
    ci_high: float
    correction_applied: bool


def hdi(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval containing ceil(mass * n) sorted samples.

    Ties between equal-width windows break toward the lowest start index.
    """
    if not 0.0 < mass < 1.0:
        raise ValueError(f"mass must be in (0,1), got {mass}")
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    min_n = math.ceil(1.0 / (1.0 - mass) - 1e-9)  # guard float slop at the boundary
    if n < min_n:
        raise ValueError(f"need at least {min_n} samples for mass={mass}, got {n}")
    m = math.ceil(mass * n)
    widths = x[m - 1 :] - x[: n - m + 1]
    i = int(np.argmin(widths))  # argmin returns the first minimum
    return float(x[i]), float(x[i + m - 1])


def observed_log_or(control: StudyArm, experimental: StudyArm) -> ObservedLogOr:
    """Empirical log odds ratio with 0.5 added to every cell when any cell is zero.

    The 95% CI uses the standard 2x2 variance 1/a + 1/b + 1/c + 1/d on the
    (possibly corrected) table.
    """
    a = float(experimental.events)
    b = float(experimental.total - experimental.events)
    c = float(control.events)
    d = float(control.total - control.events)
    corrected = min(a, b, c, d) == 0.0
    if corrected:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    log_or = math.log(a * d / (b * c))
    half_width = 1.96 * math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return ObservedLogOr(log_or, log_or - half_width, log_or + half_width, corrected)


def forest_table(data: MetaDataset) -> list[ForestRow]:
    """Per-study observed log odds ratios, double-zero studies included."""
    rows = []
    for s in data.studies:
        est = observed_log_or(s.control, s.experimental)
        rows.append(
            ForestRow(s.label, est.log_or, est.ci_low, est.ci_high, est.correction_applied)
        )
    return rows


def summarize_fit(fit: PosteriorDraws | MleResult, method: str) -> EffectSummary:
    """Posterior median + 95% HDI for draws, point + Wald CI for an MLE fit."""
    if isinstance(fit, MleResult):
        if not fit.converged or fit.ci_95 is None:
            raise ValueError(
                f"cannot summarize a non-converged MLE fit ({fit.failure_reason})"
            )
        point = fit.theta_hat
        low, high = fit.ci_95
        tau_hat = fit.tau_hat
    else:
        theta = fit.theta_merged()
        if theta.size == 0:
            raise ValueError("no draws to summarize")
        point = float(np.median(theta))
        low, high = hdi(theta, 0.95)
        tau_hat = float(np.median(fit.tau_merged()))
    return EffectSummary(
        method=method,
        point_log_or=point,
        interval_log_or=(low, high),
        point_or=math.exp(point),
        interval_or=(math.exp(low), math.exp(high)),
        tau_hat=tau_hat,
    )
