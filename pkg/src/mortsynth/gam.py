"""Penalized Poisson regression for cross-population mortality transfer.

Models insured death counts as Poisson with a log link and an exposure
offset.  The linear predictor combines an intercept, level effects for
gender-smoker combinations, a smooth age effect, and a smooth effect of
general-population deaths (on a log(1 + x) scale) that may vary by
gender-smoker level.  Once fitted on a source population where both
insured and general-population deaths are observed, the model predicts
insured mortality rates for a target population where only
general-population deaths are available.

Smooths are cubic B-splines with quantile-placed knots and second-order
difference penalties on the coefficients; smoothing strength is chosen by
generalized cross-validation over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import xlogy

from .errors import (
    DegenerateBasisError,
    InvalidSpecError,
    SelectionFailedError,
    UnknownLevelError,
)
from .hazard import RateTable
from .tables import ContingencyTable, DimensionSpec

_MAX_ITER = 50
_DEVIANCE_RTOL = 1e-8
_SCORE_TOL = 1e-6
_MAX_HALVINGS = 40
_GCV_TIE_RTOL = 1e-9
_GCV_TIE_ATOL = 1e-12
# A step counts as non-increasing if the objective rises by no more than
# this (relative) amount: heavy penalties push the float noise floor of
# the objective well above machine epsilon.
_ACCEPT_RTOL = 1e-8


@dataclass(frozen=True)
class TrainingRecord:
    """One modelled subgroup: covariates plus observed deaths and exposure.

    ``deaths`` counts insured-population deaths; ``population_deaths``
    counts deaths in the general population for the same subgroup.
    """

    age: float
    gender: str
    smoker: str
    exposure: float
    deaths: float
    population_deaths: float

    def __post_init__(self) -> None:
        if not (self.exposure > 0 and math.isfinite(self.exposure)):
            raise InvalidSpecError("exposure must be a positive finite number")
        if not (self.deaths >= 0 and math.isfinite(self.deaths)):
            raise InvalidSpecError("deaths must be nonnegative and finite")
        if float(self.deaths) != int(self.deaths):
            raise InvalidSpecError("deaths must be integer-valued")
        if self.deaths > self.exposure:
            raise InvalidSpecError("deaths cannot exceed exposure")
        if not (self.population_deaths >= 0 and math.isfinite(self.population_deaths)):
            raise InvalidSpecError("population deaths must be nonnegative and finite")


@dataclass(frozen=True)
class TargetRecord:
    """A subgroup to predict for: covariates and exposure, no insured deaths."""

    age: float
    gender: str
    smoker: str
    exposure: float
    population_deaths: float

    def __post_init__(self) -> None:
        if not (self.exposure > 0 and math.isfinite(self.exposure)):
            raise InvalidSpecError("exposure must be a positive finite number")
        if not (self.population_deaths >= 0 and math.isfinite(self.population_deaths)):
            raise InvalidSpecError("population deaths must be nonnegative and finite")


@dataclass(frozen=True)
class SmoothSpec:
    """Shape of one smooth term: basis size, spline degree, penalty order."""

    num_basis: int = 10
    degree: int = 3
    penalty_order: int = 2

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise InvalidSpecError("spline degree must be at least 1")
        if self.penalty_order < 1:
            raise InvalidSpecError("penalty order must be at least 1")
        if self.num_basis < self.penalty_order + 1:
            raise InvalidSpecError(
                "num_basis must exceed the penalty order"
            )
        if self.num_basis < self.degree + 1:
            raise InvalidSpecError("num_basis must be at least degree + 1")


def _difference_penalty(num_basis: int, order: int) -> np.ndarray:
    d = np.diff(np.eye(num_basis), n=order, axis=0)
    return d.T @ d


def _quantile_knots(x: np.ndarray, spec: SmoothSpec, what: str) -> np.ndarray:
    """Clamped knot vector with interior knots at quantiles of ``x``."""
    lo = float(np.min(x))
    hi = float(np.max(x))
    if hi <= lo:
        raise DegenerateBasisError(
            f"covariate {what!r} is constant; cannot build a smooth basis"
        )
    n_interior = spec.num_basis - spec.degree - 1
    interior = np.empty(0)
    if n_interior > 0:
        qs = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        interior = np.quantile(x, qs)
    knots = np.concatenate(
        [np.full(spec.degree + 1, lo), interior, np.full(spec.degree + 1, hi)]
    )
    inner = np.concatenate([[lo], interior, [hi]])
    if np.any(np.diff(inner) <= 0):
        raise DegenerateBasisError(
            f"quantile knots for {what!r} are not strictly increasing; "
            "too few distinct covariate values"
        )
    return knots


def _basis_matrix(x: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    lo = knots[degree]
    hi = knots[-degree - 1]
    clipped = np.clip(x, lo, hi)
    return BSpline.design_matrix(clipped, knots, degree).toarray()


def pop_transform(population_deaths: np.ndarray | float) -> np.ndarray | float:
    """Scale for the general-population-deaths covariate: log(1 + x)."""
    return np.log1p(population_deaths)


@dataclass(frozen=True)
class DesignLayout:
    """Everything needed to rebuild design rows for new records."""

    gender_levels: tuple[str, ...]
    smoker_levels: tuple[str, ...]
    level_labels: tuple[str, ...]
    include_level_effects: bool
    varying: bool
    age_knots: tuple[float, ...] | None
    age_degree: int
    age_centers: tuple[float, ...] | None
    age_range: tuple[float, float] | None
    pop_knots: tuple[float, ...] | None
    pop_degree: int
    pop_centers: tuple[tuple[float, ...], ...] | None
    pop_range: tuple[float, float] | None
    blocks: tuple[tuple[str, int, int], ...]
    n_columns: int

    def block(self, name: str) -> tuple[int, int]:
        for label, start, stop in self.blocks:
            if label == name:
                return start, stop
        raise KeyError(name)

    def level_label(self, gender: str, smoker: str) -> str:
        if gender not in self.gender_levels:
            raise UnknownLevelError(f"unknown gender level {gender!r}")
        if smoker not in self.smoker_levels:
            raise UnknownLevelError(f"unknown smoker level {smoker!r}")
        return f"{gender}|{smoker}"


@dataclass(frozen=True)
class Design:
    """Design matrix, penalty blocks, and offset for a training set."""

    matrix: np.ndarray
    offset: np.ndarray
    counts: np.ndarray
    layout: DesignLayout
    penalty_blocks: tuple[tuple[str, int, np.ndarray], ...]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def penalty_matrix(self, lambda_age: float, lambda_pop: float) -> np.ndarray:
        """Assemble the full penalty for given smoothing strengths."""
        p = self.n_columns
        s = np.zeros((p, p))
        for group, start, block in self.penalty_blocks:
            lam = lambda_age if group == "age" else lambda_pop
            k = block.shape[0]
            s[start : start + k, start : start + k] += lam * block
        return s


def _extract_arrays(
    records: Sequence[TrainingRecord],
) -> tuple[np.ndarray, list[str], list[str], np.ndarray, np.ndarray, np.ndarray]:
    ages = np.array([r.age for r in records], dtype=float)
    genders = [r.gender for r in records]
    smokers = [r.smoker for r in records]
    exposure = np.array([r.exposure for r in records], dtype=float)
    deaths = np.array([r.deaths for r in records], dtype=float)
    pop = np.array([r.population_deaths for r in records], dtype=float)
    return ages, genders, smokers, exposure, deaths, pop


def build_design(
    records: Sequence[TrainingRecord],
    age_smooth: SmoothSpec | None = SmoothSpec(),
    pop_smooth: SmoothSpec | None = SmoothSpec(),
    *,
    varying: bool = True,
    include_level_effects: bool = True,
    gender_levels: Sequence[str] | None = None,
    smoker_levels: Sequence[str] | None = None,
) -> Design:
    """Assemble the design matrix, penalties, and offset from records.

    Columns are laid out as intercept, then gender-smoker level effects
    (reference level dropped), then the age-smooth basis, then the
    population-deaths smooth: one column block per gender-smoker level
    when ``varying`` is true, a single shared block otherwise.  Smooth
    columns are centered to sum to zero over the training rows, which
    keeps them orthogonal to the intercept.
    """
    if not records:
        raise InvalidSpecError("at least one training record is required")
    ages, genders, smokers, exposure, deaths, pop = _extract_arrays(records)
    n = len(records)

    g_levels = tuple(gender_levels) if gender_levels is not None else tuple(
        sorted(set(genders))
    )
    s_levels = tuple(smoker_levels) if smoker_levels is not None else tuple(
        sorted(set(smokers))
    )
    unknown_g = set(genders) - set(g_levels)
    unknown_s = set(smokers) - set(s_levels)
    if unknown_g or unknown_s:
        raise UnknownLevelError(
            f"records use undeclared levels: {sorted(unknown_g | unknown_s)}"
        )
    labels = tuple(f"{g}|{s}" for g in g_levels for s in s_levels)
    row_labels = np.array([f"{g}|{s}" for g, s in zip(genders, smokers)])

    columns: list[np.ndarray] = [np.ones((n, 1))]
    blocks: list[tuple[str, int, int]] = [("intercept", 0, 1)]
    penalties: list[tuple[str, int, np.ndarray]] = []
    cursor = 1

    if include_level_effects and len(labels) > 1:
        dummies = np.column_stack(
            [(row_labels == lab).astype(float) for lab in labels[1:]]
        )
        columns.append(dummies)
        blocks.append(("levels", cursor, cursor + dummies.shape[1]))
        cursor += dummies.shape[1]

    age_knots = age_centers = age_range = None
    age_degree = 0
    if age_smooth is not None:
        if np.unique(ages).size < 2:
            raise DegenerateBasisError("need at least 2 distinct ages for a smooth")
        knots = _quantile_knots(ages, age_smooth, "age")
        basis = _basis_matrix(ages, knots, age_smooth.degree)
        centers = basis.mean(axis=0)
        columns.append(basis - centers)
        k = basis.shape[1]
        blocks.append(("f_age", cursor, cursor + k))
        penalties.append(
            ("age", cursor, _difference_penalty(k, age_smooth.penalty_order))
        )
        cursor += k
        age_knots = tuple(float(t) for t in knots)
        age_centers = tuple(float(c) for c in centers)
        age_range = (float(knots[age_smooth.degree]), float(knots[-age_smooth.degree - 1]))
        age_degree = age_smooth.degree

    pop_knots = pop_range = None
    pop_centers_out: tuple[tuple[float, ...], ...] | None = None
    pop_degree = 0
    if pop_smooth is not None:
        x = pop_transform(pop)
        if np.unique(x).size < 2:
            raise DegenerateBasisError(
                "need at least 2 distinct population-death values for a smooth"
            )
        knots = _quantile_knots(x, pop_smooth, "population deaths")
        basis = _basis_matrix(x, knots, pop_smooth.degree)
        k = basis.shape[1]
        pen = _difference_penalty(k, pop_smooth.penalty_order)
        if varying:
            centers_list = []
            for lab in labels:
                mask = row_labels == lab
                if not mask.any():
                    raise InvalidSpecError(
                        f"no training records for level {lab!r}; "
                        "every gender-smoker combination needs data"
                    )
                centers = basis[mask].mean(axis=0)
                col = np.zeros((n, k))
                col[mask] = basis[mask] - centers
                columns.append(col)
                blocks.append((f"f_pop|{lab}", cursor, cursor + k))
                penalties.append(("pop", cursor, pen))
                cursor += k
                centers_list.append(tuple(float(c) for c in centers))
            pop_centers_out = tuple(centers_list)
        else:
            centers = basis.mean(axis=0)
            columns.append(basis - centers)
            blocks.append(("f_pop", cursor, cursor + k))
            penalties.append(("pop", cursor, pen))
            cursor += k
            pop_centers_out = (tuple(float(c) for c in centers),)
        pop_knots = tuple(float(t) for t in knots)
        pop_range = (float(knots[pop_smooth.degree]), float(knots[-pop_smooth.degree - 1]))
        pop_degree = pop_smooth.degree

    matrix = np.column_stack(columns) if len(columns) > 1 else columns[0]
    layout = DesignLayout(
        gender_levels=g_levels,
        smoker_levels=s_levels,
        level_labels=labels,
        include_level_effects=include_level_effects and len(labels) > 1,
        varying=varying,
        age_knots=age_knots,
        age_degree=age_degree,
        age_centers=age_centers,
        age_range=age_range,
        pop_knots=pop_knots,
        pop_degree=pop_degree,
        pop_centers=pop_centers_out,
        pop_range=pop_range,
        blocks=tuple(blocks),
        n_columns=cursor,
    )
    return Design(
        matrix=matrix,
        offset=np.log(exposure),
        counts=deaths,
        layout=layout,
        penalty_blocks=tuple(penalties),
    )


def poisson_deviance(counts: np.ndarray, mu: np.ndarray) -> float:
    """2 * sum[y log(y/mu) - (y - mu)], with the y = 0 terms equal to 2 mu."""
    return float(2.0 * np.sum(xlogy(counts, counts / np.maximum(mu, 1e-300))
                              - (counts - mu)))


@dataclass(frozen=True)
class GamModel:
    """A fitted penalized Poisson model, immutable and serializable."""

    layout: DesignLayout
    coefficients: np.ndarray
    lambda_age: float
    lambda_pop: float
    deviance: float
    penalized_deviance: float
    edf: float
    edf_blocks: dict[str, float] = field(repr=False)
    converged: bool = True
    iterations: int = 0
    max_score: float = float("nan")
    n_obs: int = 0
    objective_history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        beta = np.asarray(self.coefficients, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "coefficients", beta)

    def gcv_score(self) -> float:
        """n * deviance / (n - edf)^2; infinite when edf exhausts the data.

        Deviance is clamped at zero: an interpolating fit can evaluate to
        a tiny negative number in floats.
        """
        denom = self.n_obs - self.edf
        if denom <= 0:
            return float("inf")
        return self.n_obs * max(self.deviance, 0.0) / denom**2


def fit_pirls(
    design: Design,
    lambda_age: float = 0.0,
    lambda_pop: float = 0.0,
    counts: np.ndarray | None = None,
) -> GamModel:
    """Fit by penalized iteratively reweighted least squares (Newton steps).

    Iterates full Newton updates on the penalized Poisson log-likelihood,
    halving the step whenever the penalized deviance would rise (or the
    mean overflows), until the objective change falls below 1e-8 relative
    (with the same absolute floor near zero, where an interpolating fit
    leaves only float noise) and the penalized score is at machine-small
    levels, or 50 iterations pass.
    """
    if lambda_age < 0 or lambda_pop < 0:
        raise InvalidSpecError("smoothing parameters must be nonnegative")
    y = design.counts if counts is None else np.asarray(counts, dtype=float)
    if y.shape != (design.n_rows,):
        raise InvalidSpecError("counts must have one entry per design row")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise InvalidSpecError("counts must be finite and nonnegative")

    x = design.matrix
    offset = design.offset
    s = design.penalty_matrix(lambda_age, lambda_pop)
    n, p = x.shape

    beta = np.zeros(p)
    total_exposure = float(np.exp(offset).sum())
    beta[0] = math.log(max(float(y.sum()), 0.5) / total_exposure)

    def objective(b: np.ndarray) -> tuple[float, float, np.ndarray]:
        eta = x @ b + offset
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        if not np.all(np.isfinite(mu)):
            return float("inf"), float("inf"), mu
        dev = poisson_deviance(y, mu)
        return dev + float(b @ s @ b), dev, mu

    pdev, dev, mu = objective(beta)
    history = [pdev]
    converged = False
    iterations = 0
    max_score = float(np.max(np.abs(x.T @ (y - mu) - s @ beta)))
    for iterations in range(1, _MAX_ITER + 1):
        grad = x.T @ (y - mu) - s @ beta
        hess = (x * mu[:, None]).T @ x + s
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]

        scale = 1.0
        new_beta = beta + step
        new_pdev, new_dev, new_mu = objective(new_beta)
        halvings = 0
        accept_tol = _ACCEPT_RTOL * max(1.0, abs(pdev))
        while new_pdev > pdev + accept_tol and halvings < _MAX_HALVINGS:
            scale *= 0.5
            halvings += 1
            new_beta = beta + scale * step
            new_pdev, new_dev, new_mu = objective(new_beta)
        if not math.isfinite(new_pdev) or new_pdev > pdev + accept_tol:
            # No acceptable step exists.  If the score is already at the
            # target we are at a stationary point; otherwise flag failure.
            converged = max_score <= _SCORE_TOL
            break

        change = abs(pdev - new_pdev)
        beta, pdev, dev, mu = new_beta, new_pdev, new_dev, new_mu
        history.append(pdev)
        max_score = float(np.max(np.abs(x.T @ (y - mu) - s @ beta))) if p else 0.0
        if change <= _DEVIANCE_RTOL * max(1.0, abs(pdev)) and max_score <= _SCORE_TOL:
            converged = True
            break

    weighted = (x * mu[:, None]).T @ x
    hess = weighted + s
    hinv = np.linalg.pinv(hess, hermitian=True)
    influence = hinv @ weighted
    edf = float(np.trace(influence))
    edf_blocks = {
        name: float(np.sum(np.diag(influence)[start:stop]))
        for name, start, stop in design.layout.blocks
    }

    return GamModel(
        layout=design.layout,
        coefficients=beta,
        lambda_age=float(lambda_age),
        lambda_pop=float(lambda_pop),
        deviance=dev,
        penalized_deviance=pdev,
        edf=edf,
        edf_blocks=edf_blocks,
        converged=converged,
        iterations=iterations,
        max_score=max_score,
        n_obs=n,
        objective_history=tuple(history),
    )


def penalized_log_likelihood(
    design: Design,
    beta: np.ndarray,
    lambda_age: float,
    lambda_pop: float,
    counts: np.ndarray | None = None,
) -> float:
    """Poisson log-likelihood (without the y! constant) minus the penalty."""
    y = design.counts if counts is None else np.asarray(counts, dtype=float)
    eta = design.matrix @ beta + design.offset
    mu = np.exp(eta)
    s = design.penalty_matrix(lambda_age, lambda_pop)
    return float(np.sum(y * eta - mu) - 0.5 * beta @ s @ beta)


def penalized_score(
    design: Design,
    beta: np.ndarray,
    lambda_age: float,
    lambda_pop: float,
    counts: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient of :func:`penalized_log_likelihood` in the coefficients."""
    y = design.counts if counts is None else np.asarray(counts, dtype=float)
    mu = np.exp(design.matrix @ beta + design.offset)
    s = design.penalty_matrix(lambda_age, lambda_pop)
    return design.matrix.T @ (y - mu) - s @ beta


def lambda_grid(
    age_values: Iterable[float], pop_values: Iterable[float]
) -> tuple[tuple[float, float], ...]:
    """Cross product of candidate smoothing strengths."""
    return tuple((a, p) for a in age_values for p in pop_values)


@dataclass(frozen=True)
class SelectionResult:
    """Chosen smoothing strengths plus the per-candidate score trace."""

    lambda_age: float
    lambda_pop: float
    model: GamModel
    scores: tuple[tuple[float, float, float], ...]


def select_smoothing(
    design: Design,
    grid: Sequence[tuple[float, float]],
    counts: np.ndarray | None = None,
) -> SelectionResult:
    """Pick the grid point minimizing generalized cross-validation.

    The score is n * deviance / (n - edf)^2.  Candidates that fail to
    converge are skipped; near-equal scores resolve toward the smoother
    (larger) candidate.
    """
    if not grid:
        raise InvalidSpecError("smoothing grid must be nonempty")
    best: tuple[float, float, GamModel] | None = None
    trace: list[tuple[float, float, float]] = []
    for lam_a, lam_p in grid:
        if lam_a < 0 or lam_p < 0:
            raise InvalidSpecError("smoothing parameters must be nonnegative")
        try:
            model = fit_pirls(design, lam_a, lam_p, counts=counts)
        except (np.linalg.LinAlgError, FloatingPointError):
            continue
        if not model.converged:
            continue
        score = model.gcv_score()
        trace.append((float(lam_a), float(lam_p), score))
        if best is None:
            best = (lam_a, lam_p, model)
            continue
        best_score = best[2].gcv_score()
        tied = abs(score - best_score) <= max(
            _GCV_TIE_RTOL * max(abs(score), abs(best_score)), _GCV_TIE_ATOL
        )
        if tied:
            if (lam_a + lam_p, lam_p, lam_a) > (best[0] + best[1], best[1], best[0]):
                best = (lam_a, lam_p, model)
        elif score < best_score:
            best = (lam_a, lam_p, model)
    if best is None:
        raise SelectionFailedError("no smoothing candidate produced a converged fit")
    return SelectionResult(
        lambda_age=float(best[0]),
        lambda_pop=float(best[1]),
        model=best[2],
        scores=tuple(trace),
    )


def _rows_for_records(
    layout: DesignLayout,
    ages: np.ndarray,
    genders: Sequence[str],
    smokers: Sequence[str],
    pop_deaths: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Design rows for new records, plus a per-row extrapolation flag.

    Covariates beyond the trained range are held at the boundary (the
    smooth continues flat) and the row is flagged as extrapolated.
    """
    n = len(ages)
    labels = [layout.level_label(g, s) for g, s in zip(genders, smokers)]
    row_labels = np.array(labels)
    x = np.zeros((n, layout.n_columns))
    extrapolated = np.zeros(n, dtype=bool)

    start, stop = layout.block("intercept")
    x[:, start] = 1.0

    if layout.include_level_effects:
        start, stop = layout.block("levels")
        for j, lab in enumerate(layout.level_labels[1:]):
            x[:, start + j] = (row_labels == lab).astype(float)

    if layout.age_knots is not None:
        knots = np.asarray(layout.age_knots)
        lo, hi = layout.age_range
        extrapolated |= (ages < lo) | (ages > hi)
        basis = _basis_matrix(ages, knots, layout.age_degree)
        start, stop = layout.block("f_age")
        x[:, start:stop] = basis - np.asarray(layout.age_centers)

    if layout.pop_knots is not None:
        knots = np.asarray(layout.pop_knots)
        lo, hi = layout.pop_range
        t = np.asarray(pop_transform(pop_deaths), dtype=float)
        extrapolated |= (t < lo) | (t > hi)
        basis = _basis_matrix(t, knots, layout.pop_degree)
        if layout.varying:
            for lab, centers in zip(layout.level_labels, layout.pop_centers):
                mask = row_labels == lab
                if mask.any():
                    start, stop = layout.block(f"f_pop|{lab}")
                    x[mask, start:stop] = basis[mask] - np.asarray(centers)
        else:
            start, stop = layout.block("f_pop")
            x[:, start:stop] = basis - np.asarray(layout.pop_centers[0])
    return x, extrapolated


@dataclass(frozen=True)
class PredictionResult:
    """Per-record predicted rates and deaths, with extrapolation flags."""

    rates: np.ndarray
    predicted_deaths: np.ndarray
    extrapolated: np.ndarray


def predict_rows(
    model: GamModel, records: Sequence[TargetRecord | TrainingRecord]
) -> PredictionResult:
    """Predicted insured mortality rate exp(eta) for each record.

    The exposure offset is excluded from the rate, so scaling exposures
    leaves rates unchanged and scales predicted deaths proportionally.
    """
    ages = np.array([r.age for r in records], dtype=float)
    genders = [r.gender for r in records]
    smokers = [r.smoker for r in records]
    exposure = np.array([r.exposure for r in records], dtype=float)
    pop = np.array([r.population_deaths for r in records], dtype=float)
    x, extrapolated = _rows_for_records(model.layout, ages, genders, smokers, pop)
    rates = np.exp(x @ model.coefficients)
    return PredictionResult(
        rates=rates,
        predicted_deaths=rates * exposure,
        extrapolated=extrapolated,
    )


def _format_age(age: float) -> str:
    return str(int(age)) if float(age) == int(age) else repr(float(age))


@dataclass(frozen=True)
class InsuredPrediction:
    """Gridded prediction output: a rate table plus extrapolation flags."""

    table: RateTable
    extrapolated: np.ndarray


def predict_insured_rates(
    model: GamModel, records: Sequence[TargetRecord | TrainingRecord]
) -> InsuredPrediction:
    """Predictions assembled into an age-gender-smoker rate table.

    Records must tile a complete grid over their distinct ages, genders,
    and smoker levels (each combination exactly once).
    """
    result = predict_rows(model, records)
    ages = sorted({float(r.age) for r in records})
    genders = sorted({r.gender for r in records})
    smokers = sorted({r.smoker for r in records})
    n_expected = len(ages) * len(genders) * len(smokers)
    if len(records) != n_expected:
        raise InvalidSpecError(
            f"records must form a complete grid: expected {n_expected} rows, "
            f"got {len(records)}"
        )
    dims = (
        DimensionSpec("age", tuple(_format_age(a) for a in ages)),
        DimensionSpec("gender", tuple(genders)),
        DimensionSpec("smoker", tuple(smokers)),
    )
    shape = tuple(len(d) for d in dims)
    rate_grid = np.full(shape, np.nan)
    exp_grid = np.zeros(shape)
    flag_grid = np.zeros(shape, dtype=bool)
    a_idx = {a: i for i, a in enumerate(ages)}
    g_idx = {g: i for i, g in enumerate(genders)}
    s_idx = {s: i for i, s in enumerate(smokers)}
    for row, rec in enumerate(records):
        pos = (a_idx[float(rec.age)], g_idx[rec.gender], s_idx[rec.smoker])
        if not np.isnan(rate_grid[pos]):
            raise InvalidSpecError(
                f"duplicate record for cell (age={rec.age}, gender={rec.gender}, "
                f"smoker={rec.smoker})"
            )
        rate_grid[pos] = result.rates[row]
        exp_grid[pos] = rec.exposure
        flag_grid[pos] = result.extrapolated[row]
    table = RateTable(
        rates=ContingencyTable(dims, rate_grid, "rate"),
        exposure=ContingencyTable(dims, exp_grid, "count",
                                  declared_total=float(exp_grid.sum())),
    )
    return InsuredPrediction(table=table, extrapolated=flag_grid)


def model_to_dict(model: GamModel) -> dict:
    """Plain-data form of a fitted model, for lossless serialization."""
    layout = model.layout
    return {
        "format": "mortsynth-gam-v1",
        "layout": {
            "gender_levels": list(layout.gender_levels),
            "smoker_levels": list(layout.smoker_levels),
            "level_labels": list(layout.level_labels),
            "include_level_effects": layout.include_level_effects,
            "varying": layout.varying,
            "age_knots": list(layout.age_knots) if layout.age_knots else None,
            "age_degree": layout.age_degree,
            "age_centers": list(layout.age_centers) if layout.age_centers else None,
            "age_range": list(layout.age_range) if layout.age_range else None,
            "pop_knots": list(layout.pop_knots) if layout.pop_knots else None,
            "pop_degree": layout.pop_degree,
            "pop_centers": [list(c) for c in layout.pop_centers]
            if layout.pop_centers
            else None,
            "pop_range": list(layout.pop_range) if layout.pop_range else None,
            "blocks": [[name, start, stop] for name, start, stop in layout.blocks],
            "n_columns": layout.n_columns,
        },
        "coefficients": [float(b) for b in model.coefficients],
        "lambda_age": model.lambda_age,
        "lambda_pop": model.lambda_pop,
        "deviance": model.deviance,
        "penalized_deviance": model.penalized_deviance,
        "edf": model.edf,
        "edf_blocks": {k: float(v) for k, v in model.edf_blocks.items()},
        "converged": model.converged,
        "iterations": model.iterations,
        "max_score": model.max_score,
        "n_obs": model.n_obs,
    }


def model_from_dict(data: dict) -> GamModel:
    """Rebuild a fitted model from :func:`model_to_dict` output."""
    if data.get("format") != "mortsynth-gam-v1":
        raise InvalidSpecError(
            f"unrecognized model format {data.get('format')!r}"
        )
    lay = data["layout"]
    layout = DesignLayout(
        gender_levels=tuple(lay["gender_levels"]),
        smoker_levels=tuple(lay["smoker_levels"]),
        level_labels=tuple(lay["level_labels"]),
        include_level_effects=bool(lay["include_level_effects"]),
        varying=bool(lay["varying"]),
        age_knots=tuple(lay["age_knots"]) if lay["age_knots"] else None,
        age_degree=int(lay["age_degree"]),
        age_centers=tuple(lay["age_centers"]) if lay["age_centers"] else None,
        age_range=tuple(lay["age_range"]) if lay["age_range"] else None,
        pop_knots=tuple(lay["pop_knots"]) if lay["pop_knots"] else None,
        pop_degree=int(lay["pop_degree"]),
        pop_centers=tuple(tuple(c) for c in lay["pop_centers"])
        if lay["pop_centers"]
        else None,
        pop_range=tuple(lay["pop_range"]) if lay["pop_range"] else None,
        blocks=tuple((b[0], int(b[1]), int(b[2])) for b in lay["blocks"]),
        n_columns=int(lay["n_columns"]),
    )
    return GamModel(
        layout=layout,
        coefficients=np.array(data["coefficients"], dtype=float),
        lambda_age=float(data["lambda_age"]),
        lambda_pop=float(data["lambda_pop"]),
        deviance=float(data["deviance"]),
        penalized_deviance=float(data["penalized_deviance"]),
        edf=float(data["edf"]),
        edf_blocks={k: float(v) for k, v in data["edf_blocks"].items()},
        converged=bool(data["converged"]),
        iterations=int(data["iterations"]),
        max_score=float(data["max_score"]),
        n_obs=int(data["n_obs"]),
    )
