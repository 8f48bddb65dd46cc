"""Command-line interface for the mortality-table synthesis toolchain.

Subcommands cover the individual stages (``ipf``, ``split``, ``simulate``,
``fit``), the full country runs (``scenario {1|2|3}``), and input
validation (``validate``).  Every subcommand takes ``--config`` plus
targeted overrides.  Exit codes: 0 success, 1 validation failure, 2 input
error (including unknown flags or subcommands).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import MortsynthError
from .pipelines import (
    ScenarioInputs,
    ScenarioSpec,
    _fit_joint,
    _read_marginal_inputs,
    _split_stage,
    fit_transfer_model,
    load_scenario_spec,
    run_scenario,
    validate,
    write_outputs,
)

_EXIT_OK = 0
_EXIT_VALIDATION = 1
_EXIT_INPUT = 2


def _conditional_key(spec: ScenarioSpec) -> str:
    return "smoker_gender" if spec.scenario_id == 1 else "prevalence"


def _load_spec(args: argparse.Namespace) -> ScenarioSpec:
    return load_scenario_spec(
        args.config,
        seed=getattr(args, "seed", None),
        replicates=getattr(args, "replicates", None),
        tolerance=getattr(args, "tol", None),
        max_iterations=getattr(args, "max_iter", None),
    )


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_scenario(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    if spec.scenario_id != args.number:
        print(
            f"error: config {args.config} declares scenario "
            f"{spec.scenario_id}, not {args.number}",
            file=sys.stderr,
        )
        return _EXIT_INPUT
    result = run_scenario(spec)
    out = _out_dir(args, f"runs/{spec.country}")
    files = write_outputs(result, out)
    print(
        f"scenario {spec.scenario_id} ({spec.country}): "
        f"{result.joint.n_cells} cells, "
        f"{result.expected.total():.1f} expected deaths, "
        f"{len(files)} files -> {out}"
    )
    print(result.report.format_text(), end="")
    return _EXIT_OK if result.report.passed else _EXIT_VALIDATION


def cmd_ipf(args: argparse.Namespace) -> int:
    from .dataio import write_json, write_table

    spec = _load_spec(args)
    age_gender, _raw, conditional_joint, state = _read_marginal_inputs(
        spec, _conditional_key(spec)
    )
    ipf_result, distribution, joint, _constraints = _fit_joint(
        spec, age_gender, conditional_joint, state
    )
    out = _out_dir(args, "runs/ipf")
    out.mkdir(parents=True, exist_ok=True)
    write_table(
        distribution, out / "joint_distribution.csv",
        "Joint distribution fitted to the input marginals.",
    )
    write_table(
        joint, out / "joint.csv",
        "Joint population counts fitted to the input marginals.",
    )
    write_json(
        {
            "converged": ipf_result.converged,
            "iterations": ipf_result.iterations_used,
            "max_marginal_deviation": ipf_result.max_deviation,
            "tolerance": spec.ipf_config.tolerance,
            "cells": distribution.n_cells,
        },
        out / "ipf.json",
    )
    print(
        f"ipf: {distribution.n_cells} cells, "
        f"{ipf_result.iterations_used} iteration(s), "
        f"max deviation {ipf_result.max_deviation:.3g} -> {out}"
    )
    return _EXIT_OK if ipf_result.converged else _EXIT_VALIDATION


def cmd_split(args: argparse.Namespace) -> int:
    from .dataio import read_table, write_json, write_table

    spec = _load_spec(args)
    if spec.hazard is None:
        print(
            "error: split requires a config with a [hazard] section",
            file=sys.stderr,
        )
        return _EXIT_INPUT
    base_key = "base_rates" if "base_rates" in spec.inputs else "population_rates"
    age_gender, prevalence_raw, prevalence_joint, state = _read_marginal_inputs(
        spec, _conditional_key(spec)
    )
    base_rates = read_table(spec.inputs[base_key])
    _ipf_result, _distribution, joint, _constraints = _fit_joint(
        spec, age_gender, prevalence_joint, state
    )
    base, split, _prevalence = _split_stage(
        spec, base_rates, joint, prevalence_raw
    )
    out = _out_dir(args, "runs/split")
    out.mkdir(parents=True, exist_ok=True)
    write_table(
        split.rates, out / "split_rates.csv",
        "Rates disaggregated into risk subgroups by fixed hazard ratios.",
    )
    write_table(
        split.exposure, out / "split_exposure.csv",
        "Exposure allocated to each risk subgroup by prevalence share.",
    )
    write_json(
        {
            "group": spec.hazard.group_dimension,
            "reference": spec.hazard.reference_level,
            "total_deaths_before": base.expected_deaths().total(),
            "total_deaths_after": split.expected_deaths().total(),
        },
        out / "split.json",
    )
    print(
        f"split: {split.rates.n_cells} cells over "
        f"{split.rates.dim_names} -> {out}"
    )
    return _EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from .dataio import build_manifest, write_ci_rows, write_json
    from .pipelines import _summary_columns

    spec = _load_spec(args)
    result = run_scenario(spec)
    out = _out_dir(args, "runs/simulate")
    out.mkdir(parents=True, exist_ok=True)
    write_ci_rows(result.summary.dims, _summary_columns(result.summary), out / "ci.csv")
    if result.curve_summary is not result.summary:
        write_ci_rows(
            result.curve_summary.dims,
            _summary_columns(result.curve_summary),
            out / "ci_age_gender_smoker.csv",
        )
    if result.state_summary is not None:
        write_ci_rows(
            result.state_summary.dims,
            _summary_columns(result.state_summary),
            out / "ci_state.csv",
        )
    write_json(
        build_manifest(
            config_echo=dict(spec.config_echo),
            input_paths=spec.all_input_paths(),
            seed=spec.sim_config.seed,
            extra={"scenario": spec.scenario_id, "country": spec.country},
        ),
        out / "manifest.json",
    )
    print(
        f"simulate: {result.summary.n_replicates} replicates over "
        f"{len(result.summary.mean)} cells, seed {spec.sim_config.seed} -> {out}"
    )
    return _EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    from .dataio import write_json, write_model

    spec = _load_spec(args)
    design, selection, records = fit_transfer_model(spec)
    model = selection.model
    out = _out_dir(args, "runs/fit")
    out.mkdir(parents=True, exist_ok=True)
    write_model(model, out / "model.json")
    write_json(
        {
            "lambda_age": selection.lambda_age,
            "lambda_pop": selection.lambda_pop,
            "edf": model.edf,
            "deviance": model.deviance,
            "converged": model.converged,
            "n_training_rows": len(records),
            "gcv_trace": [list(t) for t in selection.scores],
        },
        out / "fit.json",
    )
    print(
        f"fit: {len(records)} rows, lambda_age={selection.lambda_age:g}, "
        f"lambda_pop={selection.lambda_pop:g}, edf={model.edf:.2f} -> {out}"
    )
    return _EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from .dataio import read_table, write_json

    spec = _load_spec(args)
    conditional_key = _conditional_key(spec)
    conditionals = [
        (conditional_key, "gender", read_table(spec.inputs[conditional_key], raw=True))
    ]
    rate_keys = [
        k for k in ("insured_rates", "base_rates", "population_rates")
        if k in spec.inputs
    ]
    rate_tables = [(k, read_table(spec.inputs[k])) for k in rate_keys]
    if spec.scenario_id == 3:
        conditionals.append(
            (
                "source_smoker_gender",
                "gender",
                read_table(spec.transfer["source_smoker_gender"], raw=True),
            )
        )
        for key in ("source_insured_rates", "source_population_rates"):
            rate_tables.append((key, read_table(spec.transfer[key])))
    inputs = ScenarioInputs(
        conditional_shares=tuple(conditionals),
        rate_tables=tuple(rate_tables),
        hazard=spec.hazard,
    )
    report = validate(inputs)
    print(report.format_text(), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(report.to_dict(), out / "report.json")
        (out / "report.txt").write_text(report.format_text(), encoding="utf-8")
    return _EXIT_OK if report.passed else _EXIT_VALIDATION


def _add_common(parser: argparse.ArgumentParser, *, tol=False, sim=False) -> None:
    parser.add_argument(
        "--config", required=True, help="path to the run configuration (TOML)"
    )
    parser.add_argument("--out", help="output directory")
    if tol:
        parser.add_argument(
            "--tol", type=float, help="override the fitting tolerance"
        )
        parser.add_argument(
            "--max-iter", type=int, help="override the fitting iteration budget"
        )
    if sim:
        parser.add_argument(
            "--replicates", type=int, help="override the simulation replicate count"
        )
        parser.add_argument(
            "--seed", type=int,
            help="override the RNG seed (falls back to MORTSYNTH_SEED, then 0)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mortsynth",
        description=(
            "Synthesize granular mortality tables: population fitting, "
            "rate splitting, Monte Carlo uncertainty, and cross-country "
            "insured-rate transfer."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "ipf", help="fit the joint population table to the input marginals"
    )
    _add_common(p, tol=True)
    p.set_defaults(func=cmd_ipf)

    p = sub.add_parser(
        "split", help="disaggregate base rates into risk subgroups"
    )
    _add_common(p, tol=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "simulate", help="Monte Carlo simulation of death counts"
    )
    _add_common(p, tol=True, sim=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "fit", help="train the insured-rate transfer model on source data"
    )
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scenario", help="run a full country scenario")
    p.add_argument(
        "number", type=int, choices=(1, 2, 3), help="scenario to run"
    )
    _add_common(p, tol=True, sim=True)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("validate", help="run the validation checks on inputs")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors.
        return int(exc.code or 0)
    try:
        return args.func(args)
    except MortsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
