"""Rate splitting by hazard ratios: exactness, conservation, errors."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortsynth import (
    ContingencyTable,
    DegenerateTableError,
    DimensionSpec,
    HazardRatioSpec,
    InvalidSpecError,
    MarginalConstraint,
    RateOverflowError,
    RateTable,
    expected_deaths,
    implied_hazard_ratio,
    recombine,
    split_rates,
)

AGE = DimensionSpec("age", ("20", "21"))
GENDER = DimensionSpec("gender", ("F", "M"))
SMOKER = DimensionSpec("smoker", ("no", "yes"))


def smoker_spec(h: float) -> HazardRatioSpec:
    return HazardRatioSpec("smoker", "no", {"no": 1.0, "yes": h})


def prevalence_by_gender(p_f: float, p_m: float) -> MarginalConstraint:
    target = ContingencyTable(
        (GENDER, SMOKER),
        np.array([[1.0 - p_f, p_f], [1.0 - p_m, p_m]]),
        "probability",
        declared_total=2.0,
    )
    return MarginalConstraint(("gender", "smoker"), target)


def base_rate_table(rates: np.ndarray, exposure: np.ndarray) -> RateTable:
    return RateTable(
        rates=ContingencyTable((AGE, GENDER), rates, "rate"),
        exposure=ContingencyTable((AGE, GENDER), exposure, "count"),
    )


class TestHazardRatioSpec:
    def test_reference_ratio_must_be_one(self):
        with pytest.raises(InvalidSpecError):
            HazardRatioSpec("smoker", "no", {"no": 0.9, "yes": 1.4})

    def test_reference_must_be_present(self):
        with pytest.raises(InvalidSpecError):
            HazardRatioSpec("smoker", "no", {"yes": 1.4})

    def test_negative_ratio_rejected(self):
        with pytest.raises(InvalidSpecError):
            HazardRatioSpec("smoker", "no", {"no": 1.0, "yes": -2.0})

    def test_tabulated_ratio_broadcasts(self):
        ratio_table = ContingencyTable((AGE,), np.array([1.3, 1.5]), "rate")
        spec = HazardRatioSpec("smoker", "no", {"no": 1.0, "yes": ratio_table})
        arr = spec.ratio_array("yes", ("age", "gender"))
        assert arr.shape == (2, 1)


class TestSplitByHand:
    """One cell split by hand: base 0.001, share 0.3 smokers, h = 2.

    Reference rate q satisfies 0.7 q + 0.3 (2q) = 0.001, so q = 0.001/1.3
    and the smoker rate is 2q.
    """

    def test_matches_hand_computation(self):
        base = base_rate_table(
            np.full((2, 2), 0.001), np.full((2, 2), 1000.0)
        )
        split = split_rates(base, prevalence_by_gender(0.3, 0.3), smoker_spec(2.0))
        q = 0.001 / 1.3
        got_no = split.rates.value_at({"age": "20", "gender": "F", "smoker": "no"})
        got_yes = split.rates.value_at({"age": "20", "gender": "F", "smoker": "yes"})
        assert got_no == pytest.approx(q, rel=1e-14)
        assert got_yes == pytest.approx(2 * q, rel=1e-14)

    def test_exposure_split_by_share(self):
        base = base_rate_table(
            np.full((2, 2), 0.001), np.full((2, 2), 1000.0)
        )
        split = split_rates(base, prevalence_by_gender(0.3, 0.4), smoker_spec(2.0))
        assert split.exposure.value_at(
            {"age": "20", "gender": "F", "smoker": "yes"}
        ) == pytest.approx(300.0)
        assert split.exposure.value_at(
            {"age": "20", "gender": "M", "smoker": "yes"}
        ) == pytest.approx(400.0)


class TestPublishedSplitValues:
    """Base rate 0.000532 with h = 1.4 and smoker share 88/177.

    The share-weighted mean must return the base rate and the published
    three-figure values 0.000621 / 0.000444 must be reproduced.
    """

    def test_three_figure_reproduction(self):
        p = 88.0 / 177.0
        base = base_rate_table(
            np.full((2, 2), 0.000532), np.full((2, 2), 1000.0)
        )
        split = split_rates(base, prevalence_by_gender(p, p), smoker_spec(1.4))
        yes = split.rates.value_at({"age": "20", "gender": "M", "smoker": "yes"})
        no = split.rates.value_at({"age": "20", "gender": "M", "smoker": "no"})
        assert yes / no == pytest.approx(1.4, abs=1e-12)
        assert (1 - p) * no + p * yes == pytest.approx(0.000532, abs=1e-12)
        assert float(f"{yes:.3g}") == 0.000621
        assert float(f"{no:.3g}") == 0.000444


class TestConservation:
    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        h=st.floats(1.0, 5.0),
        p_f=st.floats(0.05, 0.95),
        p_m=st.floats(0.05, 0.95),
    )
    def test_expected_deaths_conserved(self, seed, h, p_f, p_m):
        rng = np.random.default_rng(seed)
        base = base_rate_table(
            rng.uniform(1e-4, 0.05, size=(2, 2)),
            rng.uniform(100.0, 10000.0, size=(2, 2)),
        )
        split = split_rates(base, prevalence_by_gender(p_f, p_m), smoker_spec(h))
        before = base.expected_deaths().values
        after = split.expected_deaths().marginalize(["age", "gender"]).values
        np.testing.assert_allclose(after, before, rtol=1e-12)

    def test_recombine_inverts_split(self):
        base = base_rate_table(
            np.array([[0.001, 0.002], [0.003, 0.004]]),
            np.array([[100.0, 200.0], [300.0, 400.0]]),
        )
        prev = prevalence_by_gender(0.2, 0.3)
        split = split_rates(base, prev, smoker_spec(1.4))
        back = recombine(split, prev, "smoker")
        np.testing.assert_allclose(back.rates.values, base.rates.values, rtol=1e-12)
        np.testing.assert_allclose(
            back.exposure.values, base.exposure.values, rtol=1e-12
        )


class TestImpliedRatio:
    def test_scalar_ratio(self):
        assert implied_hazard_ratio(0.0028, 0.002) == pytest.approx(1.4)

    def test_zero_denominator_rejected(self):
        with pytest.raises(DegenerateTableError):
            implied_hazard_ratio(0.001, 0.0)

    def test_elementwise_table_ratio(self):
        a = ContingencyTable((AGE,), np.array([0.002, 0.004]), "rate")
        b = ContingencyTable((AGE,), np.array([0.001, 0.002]), "rate")
        r = implied_hazard_ratio(a, b)
        np.testing.assert_allclose(r.values, [2.0, 2.0])

    def test_mixed_scalar_table_rejected(self):
        a = ContingencyTable((AGE,), np.array([0.002, 0.004]), "rate")
        with pytest.raises(InvalidSpecError):
            implied_hazard_ratio(a, 0.001)


class TestSplitErrors:
    def test_existing_group_dimension_rejected(self):
        rates = ContingencyTable(
            (AGE, SMOKER), np.full((2, 2), 0.001), "rate"
        )
        exposure = ContingencyTable((AGE, SMOKER), np.full((2, 2), 10.0))
        base = RateTable(rates=rates, exposure=exposure)
        with pytest.raises(InvalidSpecError):
            split_rates(base, prevalence_by_gender(0.3, 0.3), smoker_spec(2.0))

    def test_shares_must_sum_to_one(self):
        target = ContingencyTable(
            (GENDER, SMOKER),
            np.array([[0.5, 0.3], [0.5, 0.3]]),
            "probability",
            declared_total=1.6,
        )
        bad = MarginalConstraint(("gender", "smoker"), target)
        base = base_rate_table(np.full((2, 2), 0.001), np.full((2, 2), 10.0))
        with pytest.raises(InvalidSpecError):
            split_rates(base, bad, smoker_spec(2.0))

    def test_rate_above_one_rejected(self):
        # Reference rate 0.9/1.4 with ratio 5 puts the smoker rate past 1.
        base = base_rate_table(np.full((2, 2), 0.9), np.full((2, 2), 10.0))
        with pytest.raises(RateOverflowError):
            split_rates(base, prevalence_by_gender(0.1, 0.1), smoker_spec(5.0))

    def test_rate_table_requires_matching_dims(self):
        rates = ContingencyTable((AGE, GENDER), np.full((2, 2), 0.001), "rate")
        exposure = ContingencyTable((AGE,), np.full(2, 10.0))
        with pytest.raises(InvalidSpecError):
            RateTable(rates=rates, exposure=exposure)

    def test_rate_table_rejects_rates_above_one(self):
        rates = ContingencyTable((AGE,), np.array([0.5, 1.5]), "rate")
        exposure = ContingencyTable((AGE,), np.full(2, 10.0))
        with pytest.raises(RateOverflowError):
            RateTable(rates=rates, exposure=exposure)


class TestExpectedDeaths:
    def test_rate_times_exposure(self):
        base = base_rate_table(
            np.array([[0.001, 0.002], [0.003, 0.004]]),
            np.array([[1000.0, 1000.0], [1000.0, 1000.0]]),
        )
        d = expected_deaths(base)
        np.testing.assert_allclose(d.values, [[1.0, 2.0], [3.0, 4.0]])
        assert d.kind == "count"
