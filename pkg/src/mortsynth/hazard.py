"""Splitting base mortality rates into risk subgroups by hazard ratios.

Given a base rate ``mu`` per cell, subgroup shares ``w_g`` and hazard ratios
``h_g`` (reference group 1), the reference rate is ``q = mu / sum_g w_g h_g``
and each subgroup's rate is ``h_g * q``.  The share-weighted mean of the
split rates reproduces ``mu`` exactly, so total expected deaths are
preserved for any exposure split proportional to the shares, and the ratio
between any two subgroup rates equals the ratio of their hazards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import (
    DegenerateTableError,
    InfeasibleSplitError,
    InvalidSpecError,
    RateOverflowError,
)
from .tables import ContingencyTable, DimensionSpec, MarginalConstraint, canonical_dims

RatioValue = Union[float, ContingencyTable]


@dataclass(frozen=True)
class HazardRatioSpec:
    """Hazard ratios per level of a grouping dimension.

    ``ratios`` maps each level to either a scalar (global scope) or a table
    of ratios over other dimensions (e.g. per age-gender).  The reference
    level's ratio must be exactly 1 everywhere.
    """

    group_dimension: str
    reference_level: str
    ratios: Mapping[str, RatioValue]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratios", dict(self.ratios))
        if self.reference_level not in self.ratios:
            raise InvalidSpecError(
                f"reference level {self.reference_level!r} missing from ratios"
            )
        for level, ratio in self.ratios.items():
            values = ratio.values if isinstance(ratio, ContingencyTable) else np.asarray(ratio)
            if np.any(values < 0) or not np.all(np.isfinite(values)):
                raise InvalidSpecError(f"hazard ratio for {level!r} must be finite and >= 0")
        ref = self.ratios[self.reference_level]
        ref_values = ref.values if isinstance(ref, ContingencyTable) else np.asarray(ref)
        if not np.all(ref_values == 1.0):
            raise InvalidSpecError("reference level hazard ratio must be exactly 1")

    @property
    def levels(self) -> tuple[str, ...]:
        return tuple(self.ratios)

    def ratio_array(self, level: str, dim_names: tuple[str, ...]) -> np.ndarray:
        """Ratio for ``level`` broadcastable over axes named ``dim_names``."""
        ratio = self.ratios[level]
        if isinstance(ratio, ContingencyTable):
            return ratio.aligned_values(dim_names)
        return np.asarray(float(ratio))


@dataclass(frozen=True)
class RateTable:
    """Mortality rates with matching exposures over identical dimensions."""

    rates: ContingencyTable
    exposure: ContingencyTable

    def __post_init__(self) -> None:
        if self.rates.kind != "rate":
            raise InvalidSpecError("rates table must have kind 'rate'")
        if self.rates.dims != self.exposure.dims:
            raise InvalidSpecError("rates and exposure must share dimensions")
        if np.any(self.rates.values > 1.0):
            raise RateOverflowError("mortality rates must lie in [0, 1]")

    @property
    def dims(self) -> tuple[DimensionSpec, ...]:
        return self.rates.dims

    def expected_deaths(self) -> ContingencyTable:
        return expected_deaths(self)


def expected_deaths(rate_table: RateTable) -> ContingencyTable:
    """Cellwise rate times exposure, as a count table."""
    deaths = rate_table.rates.values * rate_table.exposure.values
    return ContingencyTable(rate_table.dims, deaths, "count")


def implied_hazard_ratio(
    rate_a: float | ContingencyTable, rate_b: float | ContingencyTable
) -> float | ContingencyTable:
    """Ratio of two rates (scalars or aligned tables); the hazard ratio they imply."""
    if isinstance(rate_a, ContingencyTable) or isinstance(rate_b, ContingencyTable):
        if not (isinstance(rate_a, ContingencyTable) and isinstance(rate_b, ContingencyTable)):
            raise InvalidSpecError("both rates must be tables, or both scalars")
        if rate_a.dim_names != rate_b.dim_names or rate_a.shape != rate_b.shape:
            raise InvalidSpecError("rate tables must share the same dimensions")
        if np.any(rate_b.values == 0):
            raise DegenerateTableError("cannot form a hazard ratio against a zero rate")
        return rate_a.with_values(rate_a.values / rate_b.values)
    if rate_b == 0:
        raise DegenerateTableError("cannot form a hazard ratio against a zero rate")
    return rate_a / rate_b


def split_rates(
    base: RateTable,
    prevalence: MarginalConstraint,
    spec: HazardRatioSpec,
) -> RateTable:
    """Disaggregate ``base`` along ``spec.group_dimension``.

    ``prevalence`` gives the subgroup shares: its target covers the group
    dimension plus any subset of the base dimensions, and for every base
    projection the shares over the group levels must sum to 1.  Exposure is
    split proportionally to the shares, so subgroup expected deaths add up
    to the base expected deaths cell by cell.
    """
    gname = spec.group_dimension
    if gname in base.rates.dim_names:
        raise InvalidSpecError(f"base table already has dimension {gname!r}")
    if gname not in prevalence.over:
        raise InvalidSpecError(f"prevalence must cover dimension {gname!r}")

    gdim = prevalence.target.dim(gname)
    if set(gdim.levels) != set(spec.levels):
        raise InvalidSpecError(
            f"hazard ratios cover {sorted(spec.levels)} but prevalence has "
            f"levels {sorted(gdim.levels)}"
        )

    out_dims = canonical_dims(base.dims + (gdim,))
    out_names = tuple(d.name for d in out_dims)
    out_shape = tuple(len(d) for d in out_dims)
    g_axis = out_names.index(gname)

    shares = prevalence.target.aligned_values(out_names)
    share_sum = shares.sum(axis=g_axis, keepdims=True)
    if not np.allclose(share_sum, 1.0, atol=1e-9):
        raise InvalidSpecError(
            "prevalence shares must sum to 1 over the group levels in every cell"
        )

    ratio_list = []
    for level in gdim.levels:
        r = spec.ratio_array(level, out_names)
        ratio_list.append(np.broadcast_to(r, tuple(1 if i == g_axis else s
                                                   for i, s in enumerate(out_shape))))
    ratios = np.concatenate(ratio_list, axis=g_axis)

    mu = base.rates.aligned_values(out_names)
    denom = (np.broadcast_to(shares, out_shape) * ratios).sum(axis=g_axis, keepdims=True)
    infeasible = (denom == 0) & (mu > 0)
    if np.any(infeasible):
        raise InfeasibleSplitError(
            f"{int(infeasible.sum())} cell(s) have positive base rate but zero "
            "share-weighted hazard"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        reference_rate = np.where(denom > 0, mu / np.where(denom > 0, denom, 1.0), 0.0)
    split = np.broadcast_to(reference_rate * ratios, out_shape)
    if np.any(split > 1.0):
        worst = float(split.max())
        raise RateOverflowError(
            f"split produced a rate of {worst:.6g} > 1; hazard ratios and "
            "shares are inconsistent with the base rates"
        )

    exposure = base.exposure.aligned_values(out_names) * np.broadcast_to(shares, out_shape)
    return RateTable(
        rates=ContingencyTable(out_dims, split, "rate"),
        exposure=ContingencyTable(out_dims, exposure, "count"),
    )


def recombine(split: RateTable, prevalence: MarginalConstraint,
              group_dimension: str) -> RateTable:
    """Share-weighted collapse of a split table back to its base dimensions.

    Inverse of :func:`split_rates` up to float rounding; used by validation.
    """
    names = split.rates.dim_names
    if group_dimension not in names:
        raise InvalidSpecError(f"table has no dimension {group_dimension!r}")
    g_axis = names.index(group_dimension)
    shares = np.broadcast_to(prevalence.target.aligned_values(names),
                             split.rates.shape)
    mean_rate = (split.rates.values * shares).sum(axis=g_axis)
    exposure = split.exposure.values.sum(axis=g_axis)
    sub_dims = tuple(d for d in split.dims if d.name != group_dimension)
    return RateTable(
        rates=ContingencyTable(sub_dims, mean_rate, "rate"),
        exposure=ContingencyTable(sub_dims, exposure, "count"),
    )
