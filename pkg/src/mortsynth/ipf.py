"""Iterative proportional fitting of joint tables to marginal constraints.

The fitter cycles through the constraints in the caller's order, rescaling
the joint so its marginal over each constraint's dimensions matches the
target.  Updates are count-preserving: cells are multiplied by
``target / current`` factors and the table total ends up equal to the shared
constraint total.  For strictly positive seeds and consistent targets the
fixed point is the minimum-discrimination-information table: it satisfies
every constraint while preserving the seed's interaction structure (all
cross-cell odds ratios not pinned down by a constraint).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InfeasibleConstraintsError,
    InfeasibleUpdateError,
    InvalidSpecError,
)
from .tables import ContingencyTable, MarginalConstraint

# Relative slack when checking that constraint totals agree.
_TOTAL_RTOL = 1e-8


@dataclass(frozen=True)
class IpfConfig:
    """Stopping rule and zero-cell policy for the fitter.

    ``tolerance`` is the maximum absolute deviation (in the table's own
    units) between any fitted marginal cell and its target.  ``zero_policy``
    is ``keep_zero`` to treat zero seed cells as structural, or
    ``epsilon_floor`` to floor them at ``epsilon`` before fitting.
    """

    tolerance: float = 1e-10
    max_iterations: int = 1000
    zero_policy: str = "keep_zero"
    epsilon: float = 1e-12

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise InvalidSpecError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidSpecError("max_iterations must be at least 1")
        if self.zero_policy not in ("keep_zero", "epsilon_floor"):
            raise InvalidSpecError(f"unknown zero_policy {self.zero_policy!r}")
        if self.epsilon < 0:
            raise InvalidSpecError("epsilon must be nonnegative")


@dataclass(frozen=True)
class IpfResult:
    fitted: ContingencyTable
    iterations_used: int
    converged: bool
    max_deviation: float
    deviation_history: tuple[float, ...] = field(default_factory=tuple)


def _update_values(
    values: np.ndarray,
    table: ContingencyTable,
    constraint: MarginalConstraint,
) -> np.ndarray:
    """One proportional-scaling pass of raw cell values against a constraint."""
    names = table.dim_names
    axes = tuple(i for i, n in enumerate(names) if n not in constraint.over)
    current = values.sum(axis=axes, keepdims=True)
    target = constraint.target.aligned_values(names)

    bad = (target > 0) & (current == 0)
    if np.any(bad):
        n_bad = int(bad.sum())
        raise InfeasibleUpdateError(
            f"constraint over {constraint.over} has {n_bad} positive target "
            "cell(s) whose current marginal is zero; use the epsilon_floor "
            "policy if those zeros are accidental"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(current > 0, target / np.where(current > 0, current, 1.0), 0.0)
    return values * factor


def ipf_update_step(
    table: ContingencyTable, constraint: MarginalConstraint
) -> ContingencyTable:
    """Rescale ``table`` so its marginal over the constraint matches exactly.

    Cells project onto marginal cells; each is multiplied by
    ``target / current`` for its projection.  Cells whose marginal is zero
    with a zero target stay zero.
    """
    constraint.check_against(table)
    return table.with_values(_update_values(table.values, table, constraint))


def max_marginal_deviation(
    table: ContingencyTable, constraints: list[MarginalConstraint]
) -> float:
    """Largest absolute gap between a fitted marginal cell and its target."""
    worst = 0.0
    for c in constraints:
        marg = c.current_marginal(table)
        gap = np.abs(marg.values - c.target.values)
        worst = max(worst, float(gap.max()))
    return worst


def _check_totals(constraints: list[MarginalConstraint]) -> float:
    totals = [c.target.total() for c in constraints]
    ref = totals[0]
    for t in totals[1:]:
        if abs(t - ref) > _TOTAL_RTOL * max(1.0, abs(ref)):
            raise InfeasibleConstraintsError(
                f"constraint totals disagree: {totals}; normalize inputs to a "
                "common total before fitting"
            )
    return ref


def ipf_fit(
    seed: ContingencyTable,
    constraints: list[MarginalConstraint],
    config: IpfConfig = IpfConfig(),
) -> IpfResult:
    """Fit ``seed`` to every constraint by cyclic proportional scaling.

    One iteration applies every constraint once, in the given order.  Stops
    when the maximum marginal deviation drops to ``config.tolerance`` or the
    iteration budget runs out; non-convergence is reported in the result, not
    raised.  Totals of all targets must agree beforehand.
    """
    if not constraints:
        raise InvalidSpecError("ipf_fit needs at least one constraint")
    for c in constraints:
        c.check_against(seed)
    _check_totals(constraints)

    values = np.array(seed.values, dtype=float)
    if config.zero_policy == "epsilon_floor" and config.epsilon > 0:
        values = np.maximum(values, config.epsilon)

    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        for c in constraints:
            values = _update_values(values, seed, c)
        fitted = seed.with_values(values)
        deviation = max_marginal_deviation(fitted, constraints)
        history.append(deviation)
        if deviation <= config.tolerance:
            converged = True
            break

    return IpfResult(
        fitted=seed.with_values(values),
        iterations_used=iterations,
        converged=converged,
        max_deviation=history[-1],
        deviation_history=tuple(history),
    )


def fit_within_groups(
    seed: ContingencyTable,
    group_dim: str,
    group_shares: ContingencyTable,
    constraints_by_group: dict[str, list[MarginalConstraint]],
    config: IpfConfig = IpfConfig(),
) -> tuple[ContingencyTable, dict[str, IpfResult]]:
    """Fit one independent table per level of ``group_dim`` and recombine.

    Alternative to a single fit with cross-tabulated constraints: each
    group's slice is fitted against its own (group-conditional) constraints,
    then slices are weighted by ``group_shares`` and stacked back into a
    joint table over the seed's dimensions.
    """
    gdim = seed.dim(group_dim)
    if tuple(group_shares.dim_names) != (group_dim,):
        raise InvalidSpecError("group_shares must be a one-dimensional table "
                               f"over {group_dim!r}")
    results: dict[str, IpfResult] = {}
    slices: dict[str, np.ndarray] = {}
    axis = seed.dim_names.index(group_dim)
    sub_dims = tuple(d for d in seed.dims if d.name != group_dim)
    for level in gdim.levels:
        idx = [slice(None)] * len(seed.dims)
        idx[axis] = gdim.index(level)
        sub_seed = ContingencyTable(sub_dims, seed.values[tuple(idx)], seed.kind,
                                    declared_total=float(seed.values[tuple(idx)].sum()))
        sub_seed = sub_seed.normalized()
        res = ipf_fit(sub_seed, constraints_by_group[level], config)
        results[level] = res
        slices[level] = res.fitted.values * group_shares.value_at({group_dim: level})

    stacked = np.stack([slices[lv] for lv in gdim.levels], axis=axis)
    return seed.with_values(stacked), results
