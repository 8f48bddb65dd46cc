"""End-to-end scenario runs: population synthesis, rate refinement, checks.

Three standard runs share one result shape:

1. Broadcast: fit a joint population over age, gender, smoker, and state
   to the input marginals, then apply an age-gender-smoker rate surface
   uniformly across states and simulate death counts.
2. Split: additionally disaggregate an age-gender rate table into smoker
   subgroups with fixed hazard ratios before broadcasting.
3. Transfer: run the split pipeline on general-population rates, then
   train a smooth Poisson regression on a source country's paired
   insured/population data and predict insured rates for the target.

Every run ends with a deterministic validation report; check failures are
report entries, never exceptions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidSpecError
from .gam import (
    Design,
    GamModel,
    InsuredPrediction,
    SmoothSpec,
    TargetRecord,
    TrainingRecord,
    build_design,
    lambda_grid,
    predict_insured_rates,
    select_smoothing,
)
from .hazard import HazardRatioSpec, RateTable, split_rates
from .ipf import IpfConfig, IpfResult, ipf_fit, max_marginal_deviation
from .montecarlo import (
    SimulationConfig,
    SimulationSummary,
    aggregate_replicates,
    simulate,
    summarize,
)
from .tables import (
    ContingencyTable,
    MarginalConstraint,
    uniform_table,
)

DEFAULT_POPULATION_TOTAL = 1_000_000.0
# Tolerances for the named validation checks.
_PREVALENCE_TOL = 1e-6
_HAZARD_TOL = 1e-9
_CONSERVATION_TOL = 1e-10
_MAX_LISTED_CELLS = 20

_REQUIRED_INPUTS = {
    1: ("age_gender", "smoker_gender", "state", "insured_rates"),
    2: ("age_gender", "prevalence", "state", "base_rates"),
    3: ("age_gender", "prevalence", "state", "population_rates"),
}
_REQUIRED_TRANSFER = (
    "source_age_gender",
    "source_smoker_gender",
    "source_insured_rates",
    "source_population_rates",
)


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything one scenario run needs: bindings, knobs, and seeds."""

    scenario_id: int
    country: str
    population_total: float
    inputs: Mapping[str, Path]
    ipf_config: IpfConfig
    sim_config: SimulationConfig
    hazard: HazardRatioSpec | None = None
    transfer: Mapping[str, Path] = field(default_factory=dict)
    source_population_total: float | None = None
    gam_settings: Mapping[str, object] | None = None
    report_settings: Mapping[str, object] = field(default_factory=dict)
    config_echo: Mapping[str, object] = field(default_factory=dict)
    config_path: Path | None = None

    def __post_init__(self) -> None:
        if self.scenario_id not in (1, 2, 3):
            raise InvalidSpecError(
                f"scenario id must be 1, 2, or 3, got {self.scenario_id!r}"
            )
        if not self.population_total > 0:
            raise InvalidSpecError("population_total must be positive")
        missing = [
            k for k in _REQUIRED_INPUTS[self.scenario_id] if k not in self.inputs
        ]
        if missing:
            raise InvalidSpecError(
                f"scenario {self.scenario_id} config lacks input bindings: "
                f"{missing}"
            )
        if self.scenario_id in (2, 3) and self.hazard is None:
            raise InvalidSpecError(
                f"scenario {self.scenario_id} needs a hazard section "
                "(group, reference, ratios)"
            )
        if self.scenario_id == 3:
            lacking = [k for k in _REQUIRED_TRANSFER if k not in self.transfer]
            if lacking:
                raise InvalidSpecError(
                    f"scenario 3 config lacks transfer bindings: {lacking}"
                )
            if self.gam_settings is None:
                raise InvalidSpecError("scenario 3 config lacks a [gam] section")

    @property
    def seed(self) -> int:
        return self.sim_config.seed

    def all_input_paths(self) -> tuple[Path, ...]:
        paths = [Path(p) for p in self.inputs.values()]
        paths.extend(Path(p) for p in self.transfer.values())
        return tuple(sorted(set(paths)))


def _hazard_from_config(section: Mapping) -> HazardRatioSpec:
    try:
        group = section["group"]
        reference = section["reference"]
        ratios = dict(section.get("ratios", {}))
    except (KeyError, TypeError) as exc:
        raise InvalidSpecError(f"incomplete hazard section: {exc}") from exc
    ratios.setdefault(reference, 1.0)
    return HazardRatioSpec(group, reference, {k: float(v) for k, v in ratios.items()})


def _ci_levels(raw: object) -> tuple[tuple[float, float], ...]:
    if raw is None:
        return ((2.5, 97.5),)
    seq = list(raw)  # type: ignore[arg-type]
    if seq and isinstance(seq[0], (int, float)):
        seq = [seq]
    levels = []
    for pair in seq:
        lo, hi = pair
        levels.append((float(lo), float(hi)))
    return tuple(levels)


def load_scenario_spec(
    config_path: str | Path,
    *,
    seed: int | None = None,
    replicates: int | None = None,
    tolerance: float | None = None,
    max_iterations: int | None = None,
) -> ScenarioSpec:
    """Build a ScenarioSpec from a TOML config file.

    File bindings inside the config resolve relative to the config file's
    directory.  Keyword overrides win over config values; the environment
    variable ``MORTSYNTH_SEED`` is the fallback when neither the config
    nor the caller provides a seed.
    """
    from .dataio import load_config

    path = Path(config_path)
    raw = load_config(path)
    base = path.resolve().parent

    scenario = raw.get("scenario", {})
    try:
        scenario_id = int(scenario["id"])
    except (KeyError, TypeError, ValueError):
        raise InvalidSpecError(
            f"{path}: [scenario] must declare an integer id"
        ) from None
    country = str(scenario.get("country", f"scenario-{scenario_id}"))
    population_total = float(
        scenario.get("population_total", DEFAULT_POPULATION_TOTAL)
    )

    def resolve(section: Mapping[str, object]) -> dict[str, Path]:
        return {k: (base / str(v)).resolve() for k, v in section.items()}

    inputs = resolve(raw.get("inputs", {}))
    transfer = resolve(raw.get("transfer", {})) if "transfer" in raw else {}
    transfer_section = raw.get("transfer", {})
    source_total = (
        float(transfer_section["source_population_total"])
        if "source_population_total" in transfer_section
        else None
    )
    transfer.pop("source_population_total", None)

    ipf_section = dict(raw.get("ipf", {}))
    if tolerance is not None:
        ipf_section["tolerance"] = tolerance
    if max_iterations is not None:
        ipf_section["max_iterations"] = max_iterations
    ipf_config = IpfConfig(
        tolerance=float(ipf_section.get("tolerance", 1e-10)),
        max_iterations=int(ipf_section.get("max_iterations", 1000)),
        zero_policy=str(ipf_section.get("zero_policy", "keep_zero")),
        epsilon=float(ipf_section.get("epsilon", 1e-12)),
    )

    sim_section = dict(raw.get("simulation", {}))
    if seed is None:
        if "seed" in sim_section:
            seed = int(sim_section["seed"])
        else:
            env = os.environ.get("MORTSYNTH_SEED")
            seed = int(env) if env else 0
    if replicates is None:
        replicates = int(sim_section.get("replicates", 10_000))
    sim_config = SimulationConfig(
        replicates=replicates,
        seed=seed,
        ci_levels=_ci_levels(sim_section.get("ci")),
    )

    hazard = _hazard_from_config(raw["hazard"]) if "hazard" in raw else None
    gam_settings = dict(raw["gam"]) if "gam" in raw else None
    report_settings = dict(raw.get("report", {}))

    return ScenarioSpec(
        scenario_id=scenario_id,
        country=country,
        population_total=population_total,
        inputs=inputs,
        ipf_config=ipf_config,
        sim_config=sim_config,
        hazard=hazard,
        transfer=transfer,
        source_population_total=source_total,
        gam_settings=gam_settings,
        report_settings=report_settings,
        config_echo=raw,
        config_path=path,
    )


# ---------------------------------------------------------------------------
# Validation report


@dataclass(frozen=True)
class ReportCheck:
    """One named check: measured deviation against a fixed tolerance."""

    name: str
    passed: bool
    deviation: float
    tolerance: float
    cells: tuple[str, ...] = ()
    note: str = ""

    def __post_init__(self) -> None:
        if not self.passed and not self.cells:
            raise InvalidSpecError(
                f"failed check {self.name!r} must list the offending cells"
            )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of every applicable check plus informational metrics."""

    checks: tuple[ReportCheck, ...]
    metrics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.checks:
            raise InvalidSpecError("a validation report cannot be empty")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ReportCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format_text(self) -> str:
        lines = [
            f"validation report: {len(self.checks)} check(s), "
            + ("all passed" if self.passed else "FAILURES present")
        ]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"  {status} {c.name:<24s} deviation={c.deviation:.6g} "
                f"tolerance={c.tolerance:.6g}"
                + (f"  ({c.note})" if c.note else "")
            )
            for cell in c.cells:
                lines.append(f"         {cell}")
        if self.metrics:
            lines.append("metrics:")
            for key in sorted(self.metrics):
                lines.append(f"  {key} = {self.metrics[key]}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "deviation": c.deviation,
                    "tolerance": c.tolerance,
                    "cells": list(c.cells),
                    "note": c.note,
                }
                for c in self.checks
            ],
            "metrics": dict(self.metrics),
        }


@dataclass(frozen=True)
class ScenarioInputs:
    """What a run read, in the form the checks need."""

    constraints: tuple[MarginalConstraint, ...] = ()
    conditional_shares: tuple[tuple[str, str, ContingencyTable], ...] = ()
    rate_tables: tuple[tuple[str, ContingencyTable], ...] = ()
    hazard: HazardRatioSpec | None = None


@dataclass(frozen=True)
class ScenarioOutputs:
    """What a run produced, in the form the checks need."""

    distribution: ContingencyTable | None = None
    ipf_result: IpfResult | None = None
    ipf_tolerance: float = 1e-10
    rate_tables: tuple[tuple[str, ContingencyTable], ...] = ()
    split: RateTable | None = None
    death_totals: tuple[float, float] | None = None
    rate_identity: tuple[ContingencyTable, ContingencyTable, ContingencyTable] | None = None
    summaries: tuple[SimulationSummary, ...] = ()


def _cap_cells(cells: list[str]) -> tuple[str, ...]:
    if len(cells) > _MAX_LISTED_CELLS:
        extra = len(cells) - _MAX_LISTED_CELLS
        cells = cells[:_MAX_LISTED_CELLS] + [f"... and {extra} more"]
    return tuple(cells)


def _coord_string(dims, multi_index) -> str:
    return ", ".join(
        f"{d.name}={d.levels[i]}" for d, i in zip(dims, multi_index)
    )


def _check_marginal_consistency(
    outputs: ScenarioOutputs, inputs: ScenarioInputs
) -> ReportCheck | None:
    if outputs.distribution is None or not inputs.constraints:
        return None
    deviation = max_marginal_deviation(
        outputs.distribution, list(inputs.constraints)
    )
    tol = outputs.ipf_tolerance
    cells: list[str] = []
    if deviation > tol:
        for c in inputs.constraints:
            marg = c.current_marginal(outputs.distribution)
            gap = np.abs(marg.values - c.target.values)
            for idx in np.argwhere(gap > tol):
                cells.append(
                    _coord_string(marg.dims, tuple(idx))
                    + f" (gap {gap[tuple(idx)]:.3g})"
                )
    return ReportCheck(
        name="marginal-consistency",
        passed=deviation <= tol,
        deviation=float(deviation),
        tolerance=float(tol),
        cells=_cap_cells(cells),
        note="fitted joint vs marginal targets",
    )


def _check_prevalence_sum(inputs: ScenarioInputs) -> ReportCheck | None:
    if not inputs.conditional_shares:
        return None
    worst = 0.0
    cells: list[str] = []
    for name, axis_name, table in inputs.conditional_shares:
        axis = table.dim_names.index(axis_name)
        sums = table.values.sum(
            axis=tuple(i for i in range(table.values.ndim) if i != axis)
        )
        gaps = np.abs(sums - 1.0)
        worst = max(worst, float(gaps.max()))
        adim = table.dims[axis]
        for i in np.flatnonzero(gaps > _PREVALENCE_TOL):
            cells.append(
                f"{name}: {axis_name}={adim.levels[i]} shares sum to "
                f"{sums[i]:.8g}"
            )
            for other in np.ndindex(
                *[s for j, s in enumerate(table.shape) if j != axis]
            ):
                full = list(other)
                full.insert(axis, int(i))
                cells.append(
                    "  " + _coord_string(table.dims, tuple(full))
                )
    return ReportCheck(
        name="prevalence-sum",
        passed=worst <= _PREVALENCE_TOL,
        deviation=worst,
        tolerance=_PREVALENCE_TOL,
        cells=_cap_cells(cells),
        note="subgroup shares must sum to 1 within each slice",
    )


def _check_hazard_fidelity(
    inputs: ScenarioInputs, outputs: ScenarioOutputs
) -> ReportCheck | None:
    if inputs.hazard is None or outputs.split is None:
        return None
    spec = inputs.hazard
    rates = outputs.split.rates
    names = rates.dim_names
    axis = names.index(spec.group_dimension)
    gdim = rates.dims[axis]
    ref_idx = gdim.index(spec.reference_level)
    ref = np.take(rates.values, ref_idx, axis=axis)
    worst = 0.0
    cells: list[str] = []
    sub_dims = tuple(d for i, d in enumerate(rates.dims) if i != axis)
    for level in gdim.levels:
        if level == spec.reference_level:
            continue
        declared = spec.ratio_array(level, tuple(d.name for d in sub_dims))
        got = np.take(rates.values, gdim.index(level), axis=axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(got / (ref * declared) - 1.0)
        rel = np.where(ref > 0, rel, 0.0)
        worst = max(worst, float(rel.max()))
        for idx in np.argwhere(rel > _HAZARD_TOL):
            cells.append(
                f"{spec.group_dimension}={level}, "
                + _coord_string(sub_dims, tuple(idx))
                + f" (rel {rel[tuple(idx)]:.3g})"
            )
    return ReportCheck(
        name="hazard-ratio-fidelity",
        passed=worst <= _HAZARD_TOL,
        deviation=worst,
        tolerance=_HAZARD_TOL,
        cells=_cap_cells(cells),
        note="split rate ratios vs declared hazard ratios",
    )


def _check_death_conservation(outputs: ScenarioOutputs) -> ReportCheck | None:
    if outputs.death_totals is not None:
        after, before = outputs.death_totals
        scale = max(abs(before), 1e-300)
        deviation = abs(after - before) / scale
        return ReportCheck(
            name="death-conservation",
            passed=deviation <= _CONSERVATION_TOL,
            deviation=float(deviation),
            tolerance=_CONSERVATION_TOL,
            cells=() if deviation <= _CONSERVATION_TOL else (
                f"total deaths {after!r} after vs {before!r} before",
            ),
            note="total expected deaths before vs after the rate split",
        )
    if outputs.rate_identity is not None:
        deaths, exposure, base = outputs.rate_identity
        with np.errstate(divide="ignore", invalid="ignore"):
            implied = deaths.values / exposure.values
            rel = np.abs(implied / base.values - 1.0)
        mask = (exposure.values > 0) & (base.values > 0)
        rel = np.where(mask, rel, 0.0)
        deviation = float(rel.max())
        cells = [
            _coord_string(base.dims, tuple(idx)) + f" (rel {rel[tuple(idx)]:.3g})"
            for idx in np.argwhere(rel > _CONSERVATION_TOL)
        ]
        return ReportCheck(
            name="death-conservation",
            passed=deviation <= _CONSERVATION_TOL,
            deviation=deviation,
            tolerance=_CONSERVATION_TOL,
            cells=_cap_cells(cells),
            note="state-aggregated deaths / exposure vs base rates",
        )
    return None


def _check_rate_bounds(
    inputs: ScenarioInputs, outputs: ScenarioOutputs
) -> ReportCheck | None:
    named: list[tuple[str, ContingencyTable]] = list(inputs.rate_tables)
    named.extend(outputs.rate_tables)
    if outputs.split is not None:
        named.append(("split", outputs.split.rates))
    if not named:
        return None
    worst = 0.0
    cells: list[str] = []
    for name, table in named:
        # Construction forbids negatives, so only the upper bound can fail.
        excess = table.values - 1.0
        table_worst = float(max(0.0, excess.max()))
        worst = max(worst, table_worst)
        for idx in np.argwhere(excess > 0):
            cells.append(
                f"{name}: " + _coord_string(table.dims, tuple(idx))
                + f" (rate {table.values[tuple(idx)]:.6g})"
            )
    return ReportCheck(
        name="rate-bound-sanity",
        passed=worst <= 0.0,
        deviation=worst,
        tolerance=0.0,
        cells=_cap_cells(cells),
        note="every rate must lie in [0, 1]",
    )


def _check_ci_ordering(outputs: ScenarioOutputs) -> ReportCheck | None:
    if not outputs.summaries:
        return None
    worst = 0.0
    cells: list[str] = []
    for s_i, summary in enumerate(outputs.summaries):
        for level, (lo, hi) in summary.count_intervals.items():
            gap = lo - hi
            worst = max(worst, float(max(0.0, gap.max())))
            for flat in np.flatnonzero(gap > 0):
                multi = np.unravel_index(
                    flat, tuple(len(d) for d in summary.dims)
                )
                cells.append(
                    f"summary {s_i} level {level}: "
                    + _coord_string(summary.dims, multi)
                )
    return ReportCheck(
        name="ci-ordering",
        passed=worst <= 0.0,
        deviation=worst,
        tolerance=0.0,
        cells=_cap_cells(cells),
        note="every interval must satisfy lower <= upper",
    )


def validate(
    inputs: ScenarioInputs,
    outputs: ScenarioOutputs | None = None,
    metrics: Mapping[str, object] | None = None,
) -> ValidationReport:
    """Run every applicable named check over a run's inputs and outputs.

    Deterministic; check failures become report entries with the
    offending cells listed, never exceptions.
    """
    if outputs is None:
        outputs = ScenarioOutputs()
    checks = [
        _check_marginal_consistency(outputs, inputs),
        _check_prevalence_sum(inputs),
        _check_hazard_fidelity(inputs, outputs),
        _check_death_conservation(outputs),
        _check_rate_bounds(inputs, outputs),
        _check_ci_ordering(outputs),
    ]
    present = tuple(c for c in checks if c is not None)
    return ValidationReport(checks=present, metrics=dict(metrics or {}))


# ---------------------------------------------------------------------------
# Scenario runners


@dataclass(frozen=True)
class ScenarioResult:
    """Uniform result shape across the three scenario runs.

    ``joint`` is the synthesized population (counts); ``rates`` the rate
    surface the simulation used, over the same dimensions as
    ``expected``; ``summary`` the Monte Carlo summary over those
    dimensions.  Split/transfer artifacts are ``None`` where a scenario
    does not produce them.
    """

    spec: ScenarioSpec
    joint: ContingencyTable
    distribution: ContingencyTable
    rates: ContingencyTable
    expected: ContingencyTable
    summary: SimulationSummary
    summary_exposure: ContingencyTable
    curve_summary: SimulationSummary
    curve_exposure: ContingencyTable
    ipf_result: IpfResult
    report: ValidationReport
    inputs: ScenarioInputs
    state_summary: SimulationSummary | None = None
    state_exposure: ContingencyTable | None = None
    split: RateTable | None = None
    model: GamModel | None = None
    design: Design | None = None
    insured: InsuredPrediction | None = None


def _read_marginal_inputs(
    spec: ScenarioSpec, conditional_key: str
) -> tuple[ContingencyTable, ContingencyTable, ContingencyTable, ContingencyTable]:
    """Shared first step: age-gender joint, conditional shares, state."""
    from .dataio import read_table

    age_gender = read_table(spec.inputs["age_gender"])
    gender_marginal = age_gender.marginalize(["gender"])
    conditional_raw = read_table(spec.inputs[conditional_key], raw=True)
    conditional_joint = read_table(
        spec.inputs[conditional_key], conditioning_marginal=gender_marginal
    )
    state = read_table(spec.inputs["state"])
    return age_gender, conditional_raw, conditional_joint, state


def _fit_joint(
    spec: ScenarioSpec,
    age_gender: ContingencyTable,
    conditional_joint: ContingencyTable,
    state: ContingencyTable,
) -> tuple[IpfResult, ContingencyTable, ContingencyTable, list[MarginalConstraint]]:
    """Fit the four-dimensional joint to the three normalized marginals."""
    constraints = [
        MarginalConstraint(("age", "gender"), age_gender.normalized()),
        MarginalConstraint(("gender", "smoker"), conditional_joint.normalized()),
        MarginalConstraint(("state",), state.normalized()),
    ]
    dims = (
        age_gender.dim("age"),
        age_gender.dim("gender"),
        conditional_joint.dim("smoker"),
        state.dim("state"),
    )
    seed = uniform_table(dims, 1.0, kind="probability")
    result = ipf_fit(seed, constraints, spec.ipf_config)
    distribution = result.fitted
    joint = distribution.rescale(spec.population_total)
    return result, distribution, joint, constraints


def _simulate_joint(
    spec: ScenarioSpec,
    joint: ContingencyTable,
    cell_rates: ContingencyTable,
):
    """Poisson-simulate deaths for every joint cell; summarize three ways."""
    expected = joint.with_values(joint.values * cell_rates.values, kind="count")
    matrix = simulate(expected, spec.sim_config)
    ci = spec.sim_config.ci_levels
    summary = summarize(matrix, exposure=joint, ci_levels=ci)
    curve_keep = ["age", "gender", "smoker"]
    curve_exposure = joint.marginalize(curve_keep)
    curve_summary = summarize(
        aggregate_replicates(matrix, curve_keep),
        exposure=curve_exposure,
        ci_levels=ci,
    )
    state_exposure = joint.marginalize(["state"])
    state_summary = summarize(
        aggregate_replicates(matrix, ["state"]),
        exposure=state_exposure,
        ci_levels=ci,
    )
    return expected, summary, curve_summary, curve_exposure, state_summary, state_exposure


def run_scenario_1(spec: ScenarioSpec) -> ScenarioResult:
    """Broadcast an age-gender-smoker rate surface across states.

    Fits the joint population to the marginals, applies the insured rate
    table uniformly over states, simulates per-cell death counts, and
    validates the results.
    """
    from .dataio import read_table

    if spec.scenario_id != 1:
        raise InvalidSpecError(
            f"config declares scenario {spec.scenario_id}, not 1"
        )
    age_gender, smoker_raw, smoker_joint, state = _read_marginal_inputs(
        spec, "smoker_gender"
    )
    insured = read_table(spec.inputs["insured_rates"])

    ipf_result, distribution, joint, constraints = _fit_joint(
        spec, age_gender, smoker_joint, state
    )
    rates_full = insured.broadcast_to(joint.dims)
    (
        expected,
        summary,
        curve_summary,
        curve_exposure,
        state_summary,
        state_exposure,
    ) = _simulate_joint(spec, joint, rates_full)

    # State-aggregation identity: deaths summed over states, divided by
    # population summed over states, must reproduce the input rates.
    keep = ["age", "gender", "smoker"]
    deaths3 = expected.marginalize(keep)

    inputs = ScenarioInputs(
        constraints=tuple(constraints),
        conditional_shares=(("smoker_gender", "gender", smoker_raw),),
        rate_tables=(("insured_rates", insured),),
    )
    metrics: dict[str, object] = {
        "ipf_iterations": ipf_result.iterations_used,
        "ipf_max_deviation": ipf_result.max_deviation,
        "total_expected_deaths": expected.total(),
    }
    reference = spec.report_settings.get("reference_cell")
    if reference:
        measured = distribution.value_at(
            {k: str(v) for k, v in dict(reference).items()}
        )
        metrics["reference_cell_percent"] = measured * 100.0
        declared = spec.report_settings.get("reference_value_percent")
        if declared is not None:
            metrics["reference_value_percent"] = float(declared)
            metrics["reference_cell_ratio"] = measured * 100.0 / float(declared)
    outputs = ScenarioOutputs(
        distribution=distribution,
        ipf_result=ipf_result,
        ipf_tolerance=spec.ipf_config.tolerance,
        rate_tables=(("rates", rates_full),),
        rate_identity=(deaths3, curve_exposure, insured),
        summaries=(summary, curve_summary, state_summary),
    )
    report = validate(inputs, outputs, metrics)
    return ScenarioResult(
        spec=spec,
        joint=joint,
        distribution=distribution,
        rates=rates_full,
        expected=expected,
        summary=summary,
        summary_exposure=joint,
        curve_summary=curve_summary,
        curve_exposure=curve_exposure,
        ipf_result=ipf_result,
        report=report,
        inputs=inputs,
        state_summary=state_summary,
        state_exposure=state_exposure,
    )


def _split_stage(
    spec: ScenarioSpec,
    base_rates: ContingencyTable,
    joint: ContingencyTable,
    prevalence_raw: ContingencyTable,
) -> tuple[RateTable, RateTable, MarginalConstraint]:
    """Split the age-gender base rates into smoker subgroups."""
    group = spec.hazard.group_dimension
    base_exposure = joint.marginalize(["age", "gender"])
    base = RateTable(rates=base_rates, exposure=base_exposure)
    prevalence = MarginalConstraint(
        tuple(prevalence_raw.dim_names), prevalence_raw
    )
    split = split_rates(base, prevalence, spec.hazard)
    if group not in split.rates.dim_names:
        raise InvalidSpecError(f"split did not produce dimension {group!r}")
    return base, split, prevalence


def run_scenario_2(spec: ScenarioSpec) -> ScenarioResult:
    """Split age-gender rates into smoker subgroups, then broadcast.

    The smoker prevalence and a fixed hazard ratio disaggregate the base
    rates; the split surface then drives the same population synthesis
    and simulation as the broadcast scenario.
    """
    if spec.scenario_id != 2:
        raise InvalidSpecError(
            f"config declares scenario {spec.scenario_id}, not 2"
        )
    from .dataio import read_table

    age_gender, prevalence_raw, prevalence_joint, state = _read_marginal_inputs(
        spec, "prevalence"
    )
    base_rates = read_table(spec.inputs["base_rates"])

    ipf_result, distribution, joint, constraints = _fit_joint(
        spec, age_gender, prevalence_joint, state
    )
    base, split, prevalence = _split_stage(spec, base_rates, joint, prevalence_raw)
    rates_full = split.rates.broadcast_to(joint.dims)
    (
        expected,
        summary,
        curve_summary,
        curve_exposure,
        state_summary,
        state_exposure,
    ) = _simulate_joint(spec, joint, rates_full)

    inputs = ScenarioInputs(
        constraints=tuple(constraints),
        conditional_shares=(("prevalence", "gender", prevalence_raw),),
        rate_tables=(("base_rates", base_rates),),
        hazard=spec.hazard,
    )
    outputs = ScenarioOutputs(
        distribution=distribution,
        ipf_result=ipf_result,
        ipf_tolerance=spec.ipf_config.tolerance,
        rate_tables=(("rates", rates_full),),
        split=split,
        death_totals=(
            split.expected_deaths().total(),
            base.expected_deaths().total(),
        ),
        summaries=(summary, curve_summary, state_summary),
    )
    metrics = {
        "ipf_iterations": ipf_result.iterations_used,
        "ipf_max_deviation": ipf_result.max_deviation,
        "total_expected_deaths": expected.total(),
    }
    report = validate(inputs, outputs, metrics)
    return ScenarioResult(
        spec=spec,
        joint=joint,
        distribution=distribution,
        rates=rates_full,
        expected=expected,
        summary=summary,
        summary_exposure=joint,
        curve_summary=curve_summary,
        curve_exposure=curve_exposure,
        ipf_result=ipf_result,
        report=report,
        inputs=inputs,
        state_summary=state_summary,
        state_exposure=state_exposure,
        split=split,
    )


def build_source_training_records(
    age_gender: ContingencyTable,
    smoker_conditional: ContingencyTable,
    insured_rates: ContingencyTable,
    population_rates: ContingencyTable,
    population_total: float,
) -> list[TrainingRecord]:
    """Paired insured/population training rows for the transfer model.

    Each age-gender-smoker subgroup gets exposure from the joint shares,
    insured deaths rounded from the insured rate surface, and population
    deaths from the population rate surface.
    """
    records: list[TrainingRecord] = []
    for coords, rate in insured_rates.cells():
        share = age_gender.value_at(
            {"age": coords["age"], "gender": coords["gender"]}
        )
        w = smoker_conditional.value_at(
            {"gender": coords["gender"], "smoker": coords["smoker"]}
        )
        exposure = population_total * share * w
        if exposure <= 0:
            raise InvalidSpecError(
                f"source subgroup {coords} has nonpositive exposure"
            )
        pop_rate = population_rates.value_at(coords)
        records.append(
            TrainingRecord(
                age=float(coords["age"]),
                gender=coords["gender"],
                smoker=coords["smoker"],
                exposure=exposure,
                deaths=float(round(rate * exposure)),
                population_deaths=pop_rate * exposure,
            )
        )
    return records


def fit_transfer_model(spec: ScenarioSpec):
    """Train the insured-rate transfer model on the source-country data.

    Returns the design, the smoothing-selection result, and the training
    records.
    """
    from .dataio import read_table

    if spec.gam_settings is None:
        raise InvalidSpecError("config lacks a [gam] section")
    source_total = (
        spec.source_population_total
        if spec.source_population_total is not None
        else spec.population_total
    )
    src_age_gender = read_table(spec.transfer["source_age_gender"])
    src_smoker = read_table(spec.transfer["source_smoker_gender"], raw=True)
    src_insured = read_table(spec.transfer["source_insured_rates"])
    src_population = read_table(spec.transfer["source_population_rates"])
    records = build_source_training_records(
        src_age_gender, src_smoker, src_insured, src_population, source_total
    )
    g = dict(spec.gam_settings)
    smooth = SmoothSpec(
        num_basis=int(g.get("num_basis", 10)),
        degree=int(g.get("degree", 3)),
        penalty_order=int(g.get("penalty_order", 2)),
    )
    design = build_design(
        records,
        smooth,
        smooth,
        gender_levels=src_insured.dim("gender").levels,
        smoker_levels=src_insured.dim("smoker").levels,
    )
    grid = lambda_grid(
        [float(v) for v in g.get("lambda_age", [0.1, 1.0, 10.0])],
        [float(v) for v in g.get("lambda_pop", [0.1, 1.0, 10.0])],
    )
    selection = select_smoothing(design, grid)
    return design, selection, records


def build_target_records(
    exposure: ContingencyTable, population_split: RateTable
) -> list[TargetRecord]:
    """Target-country rows: exposure plus population deaths per subgroup."""
    records: list[TargetRecord] = []
    rates = population_split.rates
    for coords, e in exposure.cells():
        records.append(
            TargetRecord(
                age=float(coords["age"]),
                gender=coords["gender"],
                smoker=coords["smoker"],
                exposure=e,
                population_deaths=rates.value_at(coords) * e,
            )
        )
    return records


def run_scenario_3(spec: ScenarioSpec) -> ScenarioResult:
    """Infer insured rates for a country with population data only.

    Runs the split pipeline on the target's general-population rates,
    trains the transfer model on the source country's paired data, and
    predicts the target's insured rates, which drive the simulation.
    """
    if spec.scenario_id != 3:
        raise InvalidSpecError(
            f"config declares scenario {spec.scenario_id}, not 3"
        )
    from .dataio import read_table

    age_gender, prevalence_raw, prevalence_joint, state = _read_marginal_inputs(
        spec, "prevalence"
    )
    population_rates = read_table(spec.inputs["population_rates"])

    ipf_result, distribution, joint, constraints = _fit_joint(
        spec, age_gender, prevalence_joint, state
    )
    base, population_split, prevalence = _split_stage(
        spec, population_rates, joint, prevalence_raw
    )

    design, selection, training = fit_transfer_model(spec)
    model = selection.model

    keep = ["age", "gender", "smoker"]
    target_exposure = joint.marginalize(keep)
    targets = build_target_records(target_exposure, population_split)
    insured = predict_insured_rates(model, targets)

    insured_rates = insured.table.rates
    expected = target_exposure.with_values(
        insured_rates.values * target_exposure.values, kind="count"
    )
    matrix = simulate(expected, spec.sim_config)
    ci = spec.sim_config.ci_levels
    summary = summarize(matrix, exposure=target_exposure, ci_levels=ci)

    inputs = ScenarioInputs(
        constraints=tuple(constraints),
        conditional_shares=(("prevalence", "gender", prevalence_raw),),
        rate_tables=(("population_rates", population_rates),),
        hazard=spec.hazard,
    )
    outputs = ScenarioOutputs(
        distribution=distribution,
        ipf_result=ipf_result,
        ipf_tolerance=spec.ipf_config.tolerance,
        rate_tables=(("insured_rates", insured_rates),),
        split=population_split,
        death_totals=(
            population_split.expected_deaths().total(),
            base.expected_deaths().total(),
        ),
        summaries=(summary,),
    )
    metrics = {
        "ipf_iterations": ipf_result.iterations_used,
        "ipf_max_deviation": ipf_result.max_deviation,
        "total_expected_insured_deaths": expected.total(),
        "lambda_age": model.lambda_age,
        "lambda_pop": model.lambda_pop,
        "model_edf": model.edf,
        "model_converged": model.converged,
        "extrapolated_cells": int(insured.extrapolated.sum()),
    }
    report = validate(inputs, outputs, metrics)
    return ScenarioResult(
        spec=spec,
        joint=joint,
        distribution=distribution,
        rates=insured_rates,
        expected=expected,
        summary=summary,
        summary_exposure=target_exposure,
        curve_summary=summary,
        curve_exposure=target_exposure,
        ipf_result=ipf_result,
        report=report,
        inputs=inputs,
        split=population_split,
        model=model,
        design=design,
        insured=insured,
    )


def run_scenario(spec: ScenarioSpec) -> ScenarioResult:
    """Dispatch to the runner matching the configured scenario id."""
    runner = {1: run_scenario_1, 2: run_scenario_2, 3: run_scenario_3}
    return runner[spec.scenario_id](spec)


# ---------------------------------------------------------------------------
# Output emission


def _summary_columns(
    summary: SimulationSummary,
) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {
        "mean": summary.mean,
        "variance": summary.variance,
        "standard_error": summary.standard_error,
    }
    if summary.mean_rate is not None:
        cols["mean_rate"] = summary.mean_rate
    for (lo, hi), (lo_v, hi_v) in summary.count_intervals.items():
        cols[f"count_p{lo:g}"] = lo_v
        cols[f"count_p{hi:g}"] = hi_v
    for (lo, hi), (lo_v, hi_v) in summary.rate_intervals.items():
        cols[f"rate_p{lo:g}"] = lo_v
        cols[f"rate_p{hi:g}"] = hi_v
    return cols


def write_outputs(result: ScenarioResult, out_dir: str | Path) -> list[Path]:
    """Emit every artifact of a run into ``out_dir``.

    Tables go out as long-format CSV with sidecars, the report as JSON
    plus readable text, the manifest as JSON, and the rate-vs-age curves
    as a deterministic SVG.  Returns the written paths.
    """
    from .dataio import (
        build_manifest,
        write_ci_rows,
        write_json,
        write_model,
        write_table,
    )
    from .plots import plot_rate_curves, plot_transfer_comparison

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit_table(table: ContingencyTable, name: str, desc: str) -> None:
        path = out / name
        write_table(table, path, desc)
        written.extend([path, path.with_name(path.stem + ".meta.json")])

    spec = result.spec
    emit_table(
        result.joint, "joint.csv",
        "Synthesized population counts fitted to the input marginals.",
    )
    emit_table(
        result.rates, "rates.csv",
        "Mortality rates per simulated cell.",
    )
    emit_table(
        result.expected, "expected_deaths.csv",
        "Expected death counts (rate times population) per simulated cell.",
    )
    ci_path = out / "ci.csv"
    write_ci_rows(result.summary.dims, _summary_columns(result.summary), ci_path)
    written.append(ci_path)
    if result.curve_summary is not result.summary:
        curve_path = out / "ci_age_gender_smoker.csv"
        write_ci_rows(
            result.curve_summary.dims,
            _summary_columns(result.curve_summary),
            curve_path,
        )
        written.append(curve_path)
    if result.state_summary is not None:
        state_path = out / "ci_state.csv"
        write_ci_rows(
            result.state_summary.dims,
            _summary_columns(result.state_summary),
            state_path,
        )
        written.append(state_path)
    if result.split is not None:
        emit_table(
            result.split.rates, "split_rates.csv",
            "Rates disaggregated into risk subgroups by fixed hazard ratios.",
        )
    if result.insured is not None:
        emit_table(
            result.insured.table.rates, "insured_rates.csv",
            "Insured-population rates predicted by the transfer model.",
        )
    if result.model is not None:
        model_path = out / "model.json"
        write_model(result.model, model_path)
        written.append(model_path)

    report_json = out / "report.json"
    write_json(result.report.to_dict(), report_json)
    written.append(report_json)
    report_txt = out / "report.txt"
    report_txt.write_text(result.report.format_text(), encoding="utf-8")
    written.append(report_txt)

    manifest = build_manifest(
        config_echo=dict(spec.config_echo),
        input_paths=spec.all_input_paths(),
        seed=spec.sim_config.seed,
        extra={"scenario": spec.scenario_id, "country": spec.country},
    )
    manifest_path = out / "manifest.json"
    write_json(manifest, manifest_path)
    written.append(manifest_path)

    plot_path = out / "rates_by_age.svg"
    plot_rate_curves(
        result.curve_summary,
        plot_path,
        title=f"{spec.country}: mortality rate by age",
    )
    written.append(plot_path)
    if result.insured is not None and result.split is not None:
        cmp_path = out / "transfer_comparison.svg"
        plot_transfer_comparison(
            result.insured.table.rates,
            result.split.rates,
            cmp_path,
            title=f"{spec.country}: insured vs population rates",
        )
        written.append(cmp_path)
    return written
