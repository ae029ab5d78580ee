"""Command-line interface: fit, simulate, forest, and wip-sigma commands.

JSON is the canonical output format; forest and simulate also emit CSV.
Floating-point values are written with 17 significant digits so output
round-trips exactly and repeated runs with the same seed are byte-identical.
The default seed can be overridden with the SPARSEMETA_SEED environment
variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace

from . import __version__
from .data import DataError, load_dataset
from .hmc import SamplerConfig, SamplerError, run_chains
from .mle import fit_mle
from .priors import PriorConfig, derive_wip, default_priors, wip_sigma
from .simulation import (
    ALL_METHODS,
    desk_sampler_config,
    paper_sampler_config,
    run_scenario,
    scenario_grid,
)
from .summaries import forest_table, summarize_fit

DEFAULT_SEED = 20240501


class CliError(Exception):
    """Configuration or input error; message names the violated rule."""


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    return format(x, ".17g")


def _to_json(obj, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits (exact float64 round trip)."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{inner}{json.dumps(str(key))}: {_to_json(val, indent + 1)}' for key, val in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{inner}{_to_json(val, indent + 1)}" for val in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(output, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [_format_float(v) if isinstance(v, float) else v for v in row]
        )
    return buf.getvalue()


def _parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"{flag} expects 'mean,sd', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise CliError(f"{flag} expects numeric 'mean,sd', got {text!r}") from None


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return {str(key).replace("-", "_"): val for key, val in cfg.items()}


def _merge_config(args: argparse.Namespace, keys: list[str]) -> None:
    """Fill argparse defaults from --config; explicit flags win."""
    if not getattr(args, "config", None):
        return
    cfg = _load_config_file(args.config)
    unknown = set(cfg) - set(keys)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    for key, val in cfg.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)


def _seed_default() -> int:
    env = os.environ.get("SPARSEMETA_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise CliError(f"SPARSEMETA_SEED must be an integer, got {env!r}") from None


def _bayes_prior(args) -> tuple[PriorConfig, float | None]:
    if args.delta is not None and args.theta_prior is not None:
        raise CliError("supply exactly one of --delta or --theta-prior, not both")
    if args.method == "vague" and (args.delta is not None or args.theta_prior is not None):
        raise CliError("--method vague fixes the effect prior at N(0, 100); "
                       "drop --delta/--theta-prior or use --method wip")
    if args.delta is not None:
        if args.delta <= 1.0:
            raise CliError(f"--delta must exceed 1, got {args.delta}")
        theta_prior = (0.0, wip_sigma(args.delta))
        delta = args.delta
    elif args.theta_prior is not None:
        theta_prior = _parse_pair(args.theta_prior, "--theta-prior")
        delta = None
    elif args.method == "vague":
        theta_prior = (0.0, 100.0)
        delta = None
    else:
        theta_prior = default_priors().theta_prior
        delta = None
    mu_prior = _parse_pair(args.mu_prior, "--mu-prior") if args.mu_prior else (0.0, 10.0)
    try:
        cfg = PriorConfig(
            mu_prior=mu_prior,
            theta_prior=theta_prior,
            tau_prior_dist=args.tau_prior_dist or "half-normal",
            tau_prior_scale=args.tau_prior if args.tau_prior is not None else 0.5,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return cfg, delta


def cmd_fit(args) -> int:
    data = load_dataset(args.dataset)
    seed = args.seed if args.seed is not None else _seed_default()
    method = args.method
    out: dict = {
        "command": "fit",
        "version": __version__,
        "dataset": args.dataset,
        "method": method,
        "seed": seed,
        "studies": data.k,
    }
    if method == "mle":
        order = args.gh_order if args.gh_order is not None else 7
        fit = fit_mle(data, order=order)
        out["gh_order"] = order
        out["converged"] = fit.converged
        out["failure_reason"] = fit.failure_reason
        out["warnings"] = list(fit.warnings)
        out["tau"] = fit.tau_hat
        out["mu"] = [float(v) for v in fit.mu_hat]
        if fit.converged:
            summary = summarize_fit(fit, "mle")
            out["estimate"] = _summary_dict(summary)
            out["se_theta"] = fit.se_theta
        _emit(_to_json(out), args.output)
        return 0

    cfg, delta = _bayes_prior(args)
    scfg = SamplerConfig(
        chains=args.chains if args.chains is not None else 4,
        iterations=args.iter if args.iter is not None else 2000,
        warmup=args.warmup if args.warmup is not None else 1000,
        seed=seed,
        target_acceptance=args.target_accept if args.target_accept is not None else 0.8,
        max_leapfrog=args.max_leapfrog if args.max_leapfrog is not None else 64,
    )
    draws = run_chains(data, cfg, scfg)
    summary = summarize_fit(draws, method)
    out["prior"] = {
        "mu": list(cfg.mu_prior),
        "theta": list(cfg.theta_prior),
        "tau_dist": cfg.tau_prior_dist,
        "tau_scale": cfg.tau_prior_scale,
        "delta": delta,
    }
    out["sampler"] = {
        "chains": scfg.chains,
        "iterations": scfg.iterations,
        "warmup": scfg.warmup,
        "target_acceptance": scfg.target_acceptance,
        "max_leapfrog": scfg.max_leapfrog,
    }
    out["estimate"] = _summary_dict(summary)
    out["diagnostics"] = {
        "rhat_theta": draws.rhat_theta,
        "rhat_tau": draws.rhat_tau,
        "divergences": draws.total_divergences,
        "divergences_per_chain": list(draws.divergences),
        "accept_rate": list(draws.accept_rate),
        "step_size": list(draws.step_size),
        "draws": draws.n_draws,
    }
    _emit(_to_json(out), args.output)
    return 0


def _summary_dict(summary) -> dict:
    return {
        "log_or": summary.point_log_or,
        "log_or_interval": list(summary.interval_log_or),
        "or": summary.point_or,
        "or_interval": list(summary.interval_or),
        "tau": summary.tau_hat,
    }


_SIM_COLUMNS = [
    "k",
    "theta_true",
    "tau_true",
    "baseline_low",
    "baseline_high",
    "replications",
    "seed",
    "method",
    "bias_theta",
    "coverage",
    "mean_interval_length",
    "bias_tau",
    "replications_used",
    "failure_fraction",
    "fraction_single_zero",
    "fraction_double_zero",
]


def _report_rows(report) -> list[list]:
    rows = []
    for method, met in report.metrics.items():
        rows.append(
            [
                report.k,
                report.theta_true,
                report.tau_true,
                report.baseline_risk_range[0],
                report.baseline_risk_range[1],
                report.replications,
                report.seed,
                method,
                met.bias_theta,
                met.coverage,
                met.mean_interval_length,
                met.bias_tau,
                met.replications_used,
                met.failure_fraction,
                report.fraction_single_zero,
                report.fraction_double_zero,
            ]
        )
    return rows


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _seed_default()
    methods = tuple(args.methods.split(",")) if args.methods else ALL_METHODS
    for m in methods:
        if m not in ALL_METHODS:
            raise CliError(f"unknown method {m!r} in --methods")
    replications = args.replications if args.replications is not None else 500
    specs = scenario_grid(args.kind, replications=replications, base_seed=seed)
    if args.k is not None:
        if args.k not in (2, 3, 5):
            raise CliError(f"--k must be one of 2, 3, 5, got {args.k}")
        specs = [s for s in specs if s.k == args.k]
    if args.theta is not None:
        specs = [s for s in specs if s.theta_true == args.theta]
        if not specs:
            raise CliError(f"--theta {args.theta} is not on the scenario grid")
    sampler = desk_sampler_config()
    if args.paper_budget:
        sampler = paper_sampler_config()
    if args.chains is not None or args.iter is not None or args.warmup is not None:
        sampler = replace(
            sampler,
            chains=args.chains if args.chains is not None else sampler.chains,
            iterations=args.iter if args.iter is not None else sampler.iterations,
            warmup=args.warmup if args.warmup is not None else sampler.warmup,
        )
    rows = []
    for spec in specs:
        report = run_scenario(spec, methods, sampler=sampler, n_jobs=args.jobs)
        rows.extend(_report_rows(report))
    if args.format == "csv":
        _emit(_csv_text(_SIM_COLUMNS, rows), args.output)
    else:
        payload = {
            "command": "simulate",
            "version": __version__,
            "kind": args.kind,
            "seed": seed,
            "methods": list(methods),
            "rows": [dict(zip(_SIM_COLUMNS, row)) for row in rows],
        }
        _emit(_to_json(payload), args.output)
    return 0


def cmd_forest(args) -> int:
    data = load_dataset(args.dataset)
    rows = [
        [row.study, row.log_or, row.ci_low, row.ci_high, row.correction_applied]
        for row in forest_table(data)
    ]
    header = ["study", "log_or", "ci_low", "ci_high", "correction_applied"]
    if args.format == "csv":
        _emit(_csv_text(header, rows), args.output)
    else:
        payload = {
            "command": "forest",
            "version": __version__,
            "dataset": args.dataset,
            "rows": [dict(zip(header, row)) for row in rows],
        }
        _emit(_to_json(payload), args.output)
    return 0


def cmd_wip_sigma(args) -> int:
    if args.delta <= 1.0:
        raise CliError(f"delta must exceed 1 (no effect range otherwise), got {args.delta}")
    derivation = derive_wip(args.delta)
    payload = {
        "command": "wip-sigma",
        "delta": derivation.delta,
        "sigma": derivation.sigma_prior,
        "effective_sample_size": derivation.effective_sample_size,
    }
    _emit(_to_json(payload), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemeta",
        description="Bayesian random-effects meta-analysis of rare binary events",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    fit = sub.add_parser("fit", help="fit one dataset with wip, vague, or mle")
    fit.add_argument("dataset", help="CSV with header study,r_ctrl,n_ctrl,r_trt,n_trt")
    fit.add_argument("--method", choices=("wip", "vague", "mle"), default="wip")
    fit.add_argument("--delta", type=float, default=None,
                     help="odds-ratio bound defining the effect prior sd")
    fit.add_argument("--theta-prior", default=None, metavar="MEAN,SD",
                     help="explicit effect prior (exclusive with --delta)")
    fit.add_argument("--mu-prior", default=None, metavar="MEAN,SD")
    fit.add_argument("--tau-prior-dist", choices=("half-normal", "uniform", "half-cauchy"),
                     default=None)
    fit.add_argument("--tau-prior", type=float, default=None, metavar="SCALE")
    fit.add_argument("--chains", type=int, default=None)
    fit.add_argument("--iter", type=int, default=None)
    fit.add_argument("--warmup", type=int, default=None)
    fit.add_argument("--seed", type=int, default=None)
    fit.add_argument("--target-accept", type=float, default=None)
    fit.add_argument("--max-leapfrog", type=int, default=None)
    fit.add_argument("--gh-order", type=int, default=None, help="quadrature order for mle")
    fit.add_argument("--config", default=None, help="JSON file with flag defaults")
    fit.add_argument("--output", default=None)
    fit.set_defaults(func=cmd_fit, config_keys=[
        "method", "delta", "theta_prior", "mu_prior", "tau_prior_dist", "tau_prior",
        "chains", "iter", "warmup", "seed", "target_accept", "max_leapfrog",
        "gh_order", "output",
    ])

    sim = sub.add_parser("simulate", help="run simulation scenarios")
    sim.add_argument("--kind", choices=("rare", "high-baseline"), default="rare")
    sim.add_argument("--k", type=int, default=None, help="restrict to one study count")
    sim.add_argument("--theta", type=float, default=None, help="restrict to one true effect")
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--methods", default=None, help="comma-separated subset of wip,vague,mle")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--chains", type=int, default=None)
    sim.add_argument("--iter", type=int, default=None)
    sim.add_argument("--warmup", type=int, default=None)
    sim.add_argument("--paper-budget", action="store_true",
                     help="use the full-study sampler budget (3x2000, warmup 1000)")
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--format", choices=("json", "csv"), default="json")
    sim.add_argument("--config", default=None)
    sim.add_argument("--output", default=None)
    sim.set_defaults(func=cmd_simulate, config_keys=[
        "kind", "k", "theta", "replications", "methods", "seed", "chains", "iter",
        "warmup", "jobs", "format", "output",
    ])

    forest = sub.add_parser("forest", help="observed per-study log odds ratios")
    forest.add_argument("dataset")
    forest.add_argument("--format", choices=("json", "csv"), default="json")
    forest.add_argument("--output", default=None)
    forest.set_defaults(func=cmd_forest, config_keys=[])

    wip = sub.add_parser("wip-sigma", help="prior sd and effective sample size from delta")
    wip.add_argument("delta", type=float)
    wip.add_argument("--output", default=None)
    wip.set_defaults(func=cmd_wip_sigma, config_keys=[])

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "config", None):
            _merge_config(args, args.config_keys)
        return args.func(args)
    except (CliError, DataError, ValueError, SamplerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
