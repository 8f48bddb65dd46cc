"""Penalized Poisson regression: fitting, selection, prediction, export."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
import pytest

from mortsynth import (
    DegenerateBasisError,
    Design,
    GamModel,
    InvalidSpecError,
    SelectionFailedError,
    SmoothSpec,
    TargetRecord,
    TrainingRecord,
    UnknownLevelError,
    build_design,
    fit_pirls,
    lambda_grid,
    model_from_dict,
    model_to_dict,
    poisson_deviance,
    predict_insured_rates,
    predict_rows,
    select_smoothing,
)
import mortsynth.gam as gam
from mortsynth.gam import penalized_log_likelihood, penalized_score

from synthdata import make_grid_records, make_recovery_records, true_log_rate


@pytest.fixture(scope="module")
def grid_records():
    return make_grid_records()


@pytest.fixture(scope="module")
def grid_design(grid_records):
    return build_design(grid_records)


@pytest.fixture(scope="module")
def fitted(grid_design):
    return fit_pirls(grid_design, lambda_age=1.0, lambda_pop=1.0)


def record(age=30.0, gender="F", smoker="no", exposure=100.0, deaths=1.0, pop=2.0):
    return TrainingRecord(
        age=age, gender=gender, smoker=smoker,
        exposure=exposure, deaths=deaths, population_deaths=pop,
    )


class TestRecordValidation:
    def test_negative_exposure(self):
        with pytest.raises(InvalidSpecError):
            record(exposure=-5.0)

    def test_deaths_exceeding_exposure(self):
        with pytest.raises(InvalidSpecError):
            record(exposure=10.0, deaths=11.0)

    def test_fractional_deaths(self):
        with pytest.raises(InvalidSpecError):
            record(deaths=1.5)

    def test_negative_population_deaths(self):
        with pytest.raises(InvalidSpecError):
            record(pop=-1.0)

    def test_target_record_needs_positive_exposure(self):
        with pytest.raises(InvalidSpecError):
            TargetRecord(age=30.0, gender="F", smoker="no",
                         exposure=0.0, population_deaths=1.0)


class TestSmoothSpecValidation:
    def test_degree_zero_rejected(self):
        with pytest.raises(InvalidSpecError):
            SmoothSpec(degree=0)

    def test_basis_smaller_than_degree(self):
        with pytest.raises(InvalidSpecError):
            SmoothSpec(num_basis=3, degree=3)

    def test_basis_must_exceed_penalty_order(self):
        with pytest.raises(InvalidSpecError):
            SmoothSpec(num_basis=2, degree=1, penalty_order=2)


class TestDesign:
    def test_block_layout(self, grid_design):
        names = [name for name, _, _ in grid_design.layout.blocks]
        assert names == [
            "intercept", "levels", "f_age",
            "f_pop|F|no", "f_pop|F|yes", "f_pop|M|no", "f_pop|M|yes",
        ]
        assert grid_design.n_columns == 1 + 3 + 10 + 4 * 10
        assert grid_design.n_rows == 120

    def test_smooth_columns_are_centered(self, grid_design):
        start, stop = grid_design.layout.block("f_age")
        sums = grid_design.matrix[:, start:stop].sum(axis=0)
        np.testing.assert_allclose(sums, 0.0, atol=1e-10)

    def test_level_pop_columns_centered_within_level(self, grid_design):
        start, stop = grid_design.layout.block("f_pop|M|yes")
        sums = grid_design.matrix[:, start:stop].sum(axis=0)
        np.testing.assert_allclose(sums, 0.0, atol=1e-10)

    def test_penalty_matrix_scales_with_lambdas(self, grid_design):
        s1 = grid_design.penalty_matrix(2.0, 0.0)
        s2 = grid_design.penalty_matrix(0.0, 3.0)
        start, stop = grid_design.layout.block("f_age")
        assert np.any(s1[start:stop, start:stop] != 0)
        assert not np.any(s2[start:stop, start:stop] != 0)
        both = grid_design.penalty_matrix(2.0, 3.0)
        np.testing.assert_allclose(both, s1 + s2)

    def test_offset_is_log_exposure(self, grid_records, grid_design):
        np.testing.assert_allclose(
            grid_design.offset, np.log([r.exposure for r in grid_records])
        )

    def test_constant_age_rejected(self):
        recs = [record(age=30.0, pop=float(i + 1)) for i in range(10)]
        with pytest.raises(DegenerateBasisError):
            build_design(recs, pop_smooth=None)

    def test_undeclared_level_rejected(self, grid_records):
        with pytest.raises(UnknownLevelError):
            build_design(grid_records, gender_levels=("F",))

    def test_varying_smooth_needs_data_per_level(self):
        recs = [record(age=float(a), gender="F", smoker="no", pop=float(a))
                for a in range(20, 40)]
        recs += [record(age=float(a), gender="M", smoker="no", pop=float(a))
                 for a in range(20, 40)]
        with pytest.raises(InvalidSpecError):
            build_design(
                recs,
                gender_levels=("F", "M"),
                smoker_levels=("no", "yes"),
            )

    def test_empty_records_rejected(self):
        with pytest.raises(InvalidSpecError):
            build_design([])


class TestInterceptOnlyOracle:
    """Two observations with unit exposure: closed-form maximum likelihood.

    The intercept-only fit must return the sample mean as the fitted
    intensity, with the deviance equal to its textbook closed form.
    """

    def fit(self):
        recs = [
            record(age=20.0, deaths=0.0, exposure=1.0, pop=1.0),
            record(age=21.0, deaths=0.0, exposure=1.0, pop=2.0),
        ]
        design = build_design(recs, age_smooth=None, pop_smooth=None,
                              include_level_effects=False)
        return fit_pirls(design, counts=np.array([2.0, 4.0]))

    def test_mle_is_sample_mean(self):
        model = self.fit()
        assert model.converged
        assert math.exp(model.coefficients[0]) == pytest.approx(3.0, abs=1e-8)

    def test_deviance_closed_form(self):
        model = self.fit()
        want = 2.0 * (2.0 * math.log(2.0 / 3.0) + 4.0 * math.log(4.0 / 3.0))
        assert model.deviance == pytest.approx(want, rel=1e-10)

    def test_deviance_zero_when_mu_equals_counts(self):
        y = np.array([2.0, 4.0, 0.0])
        assert poisson_deviance(y, y.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_deviance_handles_zero_counts(self):
        got = poisson_deviance(np.array([0.0]), np.array([3.0]))
        assert got == pytest.approx(6.0)


class TestFitDiagnostics:
    def test_converged_with_small_score(self, fitted):
        assert fitted.converged
        assert fitted.max_score <= 1e-6

    def test_score_function_agrees(self, grid_design, fitted):
        score = penalized_score(grid_design, fitted.coefficients, 1.0, 1.0)
        assert np.max(np.abs(score)) <= 1e-6

    def test_total_fitted_deaths_match_observed(self, grid_design, fitted):
        mu = np.exp(grid_design.matrix @ fitted.coefficients + grid_design.offset)
        assert abs(mu.sum() - grid_design.counts.sum()) <= 1e-6

    def test_gradient_matches_finite_differences(self, grid_design, fitted):
        beta = fitted.coefficients + 0.05 * np.sin(
            np.arange(grid_design.n_columns)
        )
        analytic = penalized_score(grid_design, beta, 1.0, 1.0)
        h = 1e-5
        fd = np.empty_like(analytic)
        for j in range(beta.size):
            hj = h * max(1.0, abs(beta[j]))
            up = beta.copy()
            dn = beta.copy()
            up[j] += hj
            dn[j] -= hj
            fd[j] = (
                penalized_log_likelihood(grid_design, up, 1.0, 1.0)
                - penalized_log_likelihood(grid_design, dn, 1.0, 1.0)
            ) / (2.0 * hj)
        scale = np.max(np.abs(analytic))
        rel = np.abs(fd - analytic) / np.maximum(np.abs(analytic), 1e-6 * scale)
        assert np.max(rel) <= 1e-4

    def test_objective_history_non_increasing(self, fitted):
        hist = np.array(fitted.objective_history)
        tol = 1e-8 * np.maximum(1.0, np.abs(hist[:-1]))
        assert np.all(np.diff(hist) <= tol)

    def test_heavier_penalty_lowers_edf(self, grid_design):
        light = fit_pirls(grid_design, 0.01, 0.01)
        heavy = fit_pirls(grid_design, 1e4, 1e4)
        assert heavy.edf < light.edf
        assert heavy.deviance >= light.deviance

    def test_extreme_penalty_leaves_linear_trend(self, grid_design):
        """A second-difference penalty cannot remove linear structure."""
        model = fit_pirls(grid_design, 1e8, 1e8)
        assert model.edf_blocks["f_age"] == pytest.approx(1.0, abs=0.02)

    def test_nested_model_deviance_ordering(self, grid_records):
        small = build_design(grid_records, age_smooth=None, pop_smooth=None,
                             include_level_effects=False)
        large = build_design(grid_records, pop_smooth=None)
        dev_small = fit_pirls(small).deviance
        dev_large = fit_pirls(large).deviance
        assert dev_large <= dev_small + 1e-8

    def test_negative_lambda_rejected(self, grid_design):
        with pytest.raises(InvalidSpecError):
            fit_pirls(grid_design, -1.0, 0.0)

    def test_counts_shape_checked(self, grid_design):
        with pytest.raises(InvalidSpecError):
            fit_pirls(grid_design, counts=np.array([1.0, 2.0]))


class TestOffsetInvariance:
    """Scaling every exposure by c shifts only the intercept, by -log c."""

    def test_coefficients_and_deaths_invariant(self, grid_records):
        scaled = [
            dataclasses.replace(r, exposure=r.exposure * 10.0)
            for r in grid_records
        ]
        base = fit_pirls(build_design(grid_records), 1.0, 1.0)
        shifted = fit_pirls(build_design(scaled), 1.0, 1.0)
        assert shifted.coefficients[0] - base.coefficients[0] == pytest.approx(
            -math.log(10.0), abs=1e-8
        )
        np.testing.assert_allclose(
            shifted.coefficients[1:], base.coefficients[1:], atol=1e-8
        )
        d_base = predict_rows(base, grid_records).predicted_deaths
        d_shift = predict_rows(shifted, scaled).predicted_deaths
        np.testing.assert_allclose(d_shift, d_base, rtol=1e-8)


class TestRecovery:
    def test_smooth_surface_recovered(self):
        records, truth = make_recovery_records()
        design = build_design(records, pop_smooth=None)
        model = fit_pirls(design, lambda_age=1.0)
        assert model.converged
        pred = predict_rows(model, records)
        rmse = float(np.sqrt(np.mean((np.log(pred.rates) - truth) ** 2)))
        assert rmse <= 0.05


class TestSelection:
    def test_lambda_grid_cross_product(self):
        grid = lambda_grid([0.1, 1.0], [10.0])
        assert grid == ((0.1, 10.0), (1.0, 10.0))

    def test_exactly_representable_data_prefers_smoother(self):
        """Counts on a log-linear curve over evenly spaced ages.

        Degree-1 basis functions peak exactly at the observed ages, so both
        candidates interpolate with zero deviance and tie on the selection
        score; the tie must resolve toward the stronger penalty.
        """
        recs = [
            record(age=float(i), deaths=float(2**i), exposure=1000.0,
                   pop=1.0 + i)
            for i in range(4)
        ]
        design = build_design(
            recs, age_smooth=SmoothSpec(num_basis=4, degree=1),
            pop_smooth=None,
        )
        sel = select_smoothing(design, [(1.0, 0.0), (1e8, 0.0)])
        assert sel.lambda_age == 1e8
        scores = [s for _, _, s in sel.scores]
        assert scores[0] == pytest.approx(scores[1], abs=1e-12)

    def test_wiggly_data_prefers_light_penalty(self):
        """A strong two-period oscillation the basis can track."""
        recs = [
            record(
                age=float(i),
                deaths=float(round(100 * math.exp(math.sin(2 * math.pi * i / 8)))),
                exposure=1000.0,
                pop=1.0 + i,
            )
            for i in range(16)
        ]
        design = build_design(
            recs, age_smooth=SmoothSpec(num_basis=8), pop_smooth=None
        )
        sel = select_smoothing(design, [(1.0, 0.0), (1e8, 0.0)])
        assert sel.lambda_age == 1.0

    def test_trace_records_all_candidates(self, grid_design):
        grid = lambda_grid([0.1, 10.0], [0.1, 10.0])
        sel = select_smoothing(grid_design, grid)
        assert len(sel.scores) == 4
        assert (sel.lambda_age, sel.lambda_pop) in grid
        best = min(s for _, _, s in sel.scores)
        assert sel.model.gcv_score() == pytest.approx(best, rel=1e-12)

    def test_empty_grid_rejected(self, grid_design):
        with pytest.raises(InvalidSpecError):
            select_smoothing(grid_design, [])

    def test_negative_candidate_rejected(self, grid_design):
        with pytest.raises(InvalidSpecError):
            select_smoothing(grid_design, [(-1.0, 0.0)])

    def test_no_converged_candidate_raises(self, grid_design, monkeypatch):
        real = gam.fit_pirls

        def unconverged(*args, **kwargs):
            return dataclasses.replace(real(*args, **kwargs), converged=False)

        monkeypatch.setattr(gam, "fit_pirls", unconverged)
        with pytest.raises(SelectionFailedError):
            gam.select_smoothing(grid_design, [(1.0, 1.0)])


class TestGcvScore:
    def test_infinite_when_edf_exhausts_data(self, fitted):
        saturated = dataclasses.replace(fitted, edf=float(fitted.n_obs))
        assert saturated.gcv_score() == float("inf")

    def test_negative_deviance_clamped(self, fitted):
        noisy = dataclasses.replace(fitted, deviance=-1e-14)
        assert noisy.gcv_score() == 0.0


class TestPrediction:
    def test_rates_exclude_exposure(self, fitted, grid_records):
        rec = grid_records[0]
        doubled = dataclasses.replace(rec, exposure=rec.exposure * 2)
        a = predict_rows(fitted, [rec])
        b = predict_rows(fitted, [doubled])
        assert b.rates[0] == pytest.approx(a.rates[0], rel=1e-12)
        assert b.predicted_deaths[0] == pytest.approx(
            2 * a.predicted_deaths[0], rel=1e-12
        )

    def test_extrapolation_is_flat_and_flagged(self, fitted):
        at_edge = TargetRecord(age=49.0, gender="F", smoker="no",
                               exposure=100.0, population_deaths=50.0)
        beyond = TargetRecord(age=75.0, gender="F", smoker="no",
                              exposure=100.0, population_deaths=50.0)
        res = predict_rows(fitted, [at_edge, beyond])
        assert not res.extrapolated[0]
        assert res.extrapolated[1]
        assert res.rates[1] == pytest.approx(res.rates[0], rel=1e-12)

    def test_population_covariate_extrapolation_flagged(self, fitted):
        res = predict_rows(fitted, [
            TargetRecord(age=30.0, gender="F", smoker="no",
                         exposure=100.0, population_deaths=1e9),
        ])
        assert res.extrapolated[0]

    def test_unknown_level_rejected(self, fitted):
        with pytest.raises(UnknownLevelError):
            predict_rows(fitted, [
                TargetRecord(age=30.0, gender="X", smoker="no",
                             exposure=100.0, population_deaths=1.0),
            ])

    def test_grid_prediction_assembles_table(self, fitted):
        targets = [
            TargetRecord(age=float(a), gender=g, smoker=s,
                         exposure=1000.0, population_deaths=30.0)
            for a in (25, 26)
            for g in ("F", "M")
            for s in ("no", "yes")
        ]
        pred = predict_insured_rates(fitted, targets)
        table = pred.table.rates
        assert table.dim_names == ("age", "gender", "smoker")
        assert table.values.shape == (2, 2, 2)
        rows = predict_rows(fitted, targets)
        assert table.value_at(
            {"age": "25", "gender": "F", "smoker": "no"}
        ) == rows.rates[0]
        assert pred.extrapolated.shape == (2, 2, 2)

    def test_incomplete_grid_rejected(self, fitted):
        targets = [
            TargetRecord(age=25.0, gender="F", smoker="no",
                         exposure=1000.0, population_deaths=30.0),
            TargetRecord(age=26.0, gender="M", smoker="yes",
                         exposure=1000.0, population_deaths=30.0),
        ]
        with pytest.raises(InvalidSpecError):
            predict_insured_rates(fitted, targets)

    def test_duplicate_cell_rejected(self, fitted):
        one = TargetRecord(age=25.0, gender="F", smoker="no",
                           exposure=1000.0, population_deaths=30.0)
        with pytest.raises(InvalidSpecError):
            predict_insured_rates(fitted, [one, one])


class TestSerialization:
    def test_json_round_trip_is_bitwise(self, fitted, grid_records):
        payload = json.dumps(model_to_dict(fitted))
        restored = model_from_dict(json.loads(payload))
        np.testing.assert_array_equal(restored.coefficients, fitted.coefficients)
        assert restored.layout == fitted.layout
        assert restored.edf == fitted.edf
        a = predict_rows(fitted, grid_records[:8]).rates
        b = predict_rows(restored, grid_records[:8]).rates
        np.testing.assert_array_equal(a, b)

    def test_unknown_format_rejected(self):
        with pytest.raises(InvalidSpecError):
            model_from_dict({"format": "other"})


class TestQualitativeStructure:
    def test_fitted_rates_increase_with_age(self, fitted):
        targets = [
            TargetRecord(age=float(a), gender="M", smoker="yes",
                         exposure=1000.0, population_deaths=40.0)
            for a in range(22, 46)
        ]
        rates = predict_rows(fitted, targets).rates
        assert rates[-1] > rates[0]

    def test_smoker_and_gender_effects_recovered(self):
        records, _ = make_recovery_records()
        model = fit_pirls(build_design(records, pop_smooth=None), 1.0)
        mk = lambda g, s: TargetRecord(age=40.0, gender=g, smoker=s,
                                       exposure=1.0, population_deaths=1.0)
        r = predict_rows(model, [mk("F", "no"), mk("F", "yes"),
                                 mk("M", "no"), mk("M", "yes")]).rates
        assert r[1] > r[0] and r[3] > r[2]  # smoker loading
        assert r[2] > r[0] and r[3] > r[1]  # male loading
        assert math.log(r[1] / r[0]) == pytest.approx(0.60, abs=0.1)
        assert math.log(r[2] / r[0]) == pytest.approx(0.35, abs=0.1)
