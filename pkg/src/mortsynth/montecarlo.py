"""Monte Carlo simulation of death counts and summary statistics.

Expected deaths per cell act as Poisson intensities; replicated draws are
reduced to means, variances, and percentile confidence intervals, either
per cell or after aggregating cells (aggregation happens per replicate,
before any percentile is taken, so interval widths reflect the aggregate's
own sampling distribution).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientSampleError, InvalidSpecError
from .rng import poisson_matrix
from .tables import ContingencyTable, DimensionSpec

DEFAULT_REPLICATES = 10_000
DEFAULT_CI = (2.5, 97.5)


@dataclass(frozen=True)
class SimulationConfig:
    """Replication count, seed, and the interval levels to report.

    ``ci_levels`` holds (lower, upper) percentile pairs, e.g. (2.5, 97.5)
    for a central 95% interval.
    """

    replicates: int = DEFAULT_REPLICATES
    seed: int = 0
    ci_levels: tuple[tuple[float, float], ...] = (DEFAULT_CI,)

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise InvalidSpecError("replicates must be at least 1")
        for lo, hi in self.ci_levels:
            if not (0.0 <= lo < hi <= 100.0):
                raise InvalidSpecError(
                    f"percentile pair ({lo}, {hi}) must satisfy 0 <= lo < hi <= 100"
                )


@dataclass(frozen=True)
class ReplicateMatrix:
    """Simulated death counts: one row per cell, one column per replicate.

    Rows follow C order over the canonical (alphabetical) dimension layout,
    matching ``ContingencyTable.cells()``.
    """

    dims: tuple[DimensionSpec, ...]
    counts: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        expected = int(np.prod([len(d) for d in self.dims])) if self.dims else 1
        if counts.ndim != 2 or counts.shape[0] != expected:
            raise InvalidSpecError(
                f"replicate matrix must have shape ({expected}, n_replicates)"
            )
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_cells(self) -> int:
        return self.counts.shape[0]

    @property
    def n_replicates(self) -> int:
        return self.counts.shape[1]

    @property
    def dim_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def grid(self) -> np.ndarray:
        """Counts reshaped to (*dim sizes, replicates)."""
        shape = tuple(len(d) for d in self.dims) + (self.n_replicates,)
        return self.counts.reshape(shape)


@dataclass(frozen=True)
class SimulationSummary:
    """Per-cell moments and percentile intervals from replicated counts.

    ``count_intervals`` maps a (lo, hi) percentile pair to a pair of arrays
    of interval endpoints; ``rate_intervals`` divides those endpoints by
    exposure, with cells of zero exposure flagged in ``rate_undefined``
    and reported as NaN.
    """

    dims: tuple[DimensionSpec, ...]
    mean: np.ndarray
    variance: np.ndarray
    count_intervals: Mapping[tuple[float, float], tuple[np.ndarray, np.ndarray]]
    rate_intervals: Mapping[tuple[float, float], tuple[np.ndarray, np.ndarray]]
    mean_rate: np.ndarray | None
    rate_undefined: np.ndarray | None
    n_replicates: int
    standard_error: np.ndarray = field(default=None)  # type: ignore[assignment]

    def relative_ci_width(self, level: tuple[float, float]) -> np.ndarray:
        """Interval width divided by mean count (NaN where the mean is 0)."""
        lo, hi = self.count_intervals[level]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = (hi - lo) / self.mean
        return np.where(self.mean > 0, rel, np.nan)


def simulate(expected: ContingencyTable, config: SimulationConfig) -> ReplicateMatrix:
    """Draw Poisson death counts around per-cell expected values.

    Cell (i, j) of the result depends only on ``(config.seed, i, j)``, so
    identical inputs reproduce bit-identical matrices.
    """
    lam = expected.values.ravel()
    counts = poisson_matrix(config.seed, lam, config.replicates)
    return ReplicateMatrix(dims=expected.dims, counts=counts, seed=config.seed)


def aggregate_replicates(
    replicates: ReplicateMatrix, keep: Sequence[str]
) -> ReplicateMatrix:
    """Sum counts over all dimensions not in ``keep``, per replicate.

    Keeping the replicate axis intact preserves cross-cell dependence, so
    percentiles of the aggregate are exact rather than naively combined.
    """
    keep_set = set(keep)
    names = replicates.dim_names
    unknown = keep_set - set(names)
    if unknown:
        raise InvalidSpecError(f"unknown dimensions to keep: {sorted(unknown)}")
    kept = tuple(d for d in replicates.dims if d.name in keep_set)
    drop_axes = tuple(i for i, d in enumerate(replicates.dims) if d.name not in keep_set)
    grid = replicates.grid()
    if drop_axes:
        grid = grid.sum(axis=drop_axes)
    counts = grid.reshape(-1, replicates.n_replicates)
    return ReplicateMatrix(dims=kept, counts=counts, seed=replicates.seed)


def summarize(
    replicates: ReplicateMatrix,
    exposure: ContingencyTable | None = None,
    ci_levels: Sequence[tuple[float, float]] = (DEFAULT_CI,),
) -> SimulationSummary:
    """Means, variances, and percentile intervals for each cell.

    Percentiles use linear interpolation between order statistics; the
    variance uses the n-1 denominator.  When ``exposure`` is given, each
    count interval is also expressed as a mortality-rate interval.
    """
    counts = replicates.counts
    n = replicates.n_replicates
    mean = counts.mean(axis=1)
    if n > 1:
        variance = counts.var(axis=1, ddof=1)
        se = np.sqrt(variance / n)
    else:
        variance = np.full(mean.shape, np.nan)
        se = np.full(mean.shape, np.nan)

    exp_vals = None
    undefined = None
    mean_rate = None
    if exposure is not None:
        if tuple(exposure.dim_names) != replicates.dim_names:
            raise InvalidSpecError(
                "exposure table dimensions must match the replicate matrix"
            )
        exp_vals = exposure.values.ravel()
        undefined = exp_vals == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            mean_rate = np.where(undefined, np.nan, mean / np.where(undefined, 1.0, exp_vals))

    count_iv: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    rate_iv: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    for lo, hi in ci_levels:
        lo_v, hi_v = np.percentile(counts, [lo, hi], axis=1)
        count_iv[(lo, hi)] = (lo_v, hi_v)
        if exp_vals is not None:
            safe = np.where(undefined, 1.0, exp_vals)
            rate_lo = np.where(undefined, np.nan, lo_v / safe)
            rate_hi = np.where(undefined, np.nan, hi_v / safe)
            rate_iv[(lo, hi)] = (rate_lo, rate_hi)

    return SimulationSummary(
        dims=replicates.dims,
        mean=mean,
        variance=variance,
        count_intervals=count_iv,
        rate_intervals=rate_iv,
        mean_rate=mean_rate,
        rate_undefined=undefined,
        n_replicates=n,
        standard_error=se,
    )


def mc_standard_error(sample: np.ndarray) -> float | np.ndarray:
    """Monte Carlo standard error sqrt(s^2 / n) along the last axis.

    Needs at least two replicates; with one the sample variance is
    undefined.
    """
    arr = np.asarray(sample, dtype=float)
    n = arr.shape[-1] if arr.ndim else 0
    if n < 2:
        raise InsufficientSampleError(
            "standard error needs at least 2 replicates"
        )
    return np.sqrt(arr.var(axis=-1, ddof=1) / n)
