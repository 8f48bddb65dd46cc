"""Counter-based generator: known-answer vectors, exactness, determinism."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

import mortsynth.rng as rng
from mortsynth import InvalidIntensityError, poisson_matrix
from mortsynth.rng import block_uniforms, philox4x32


def _words(*vals: int) -> list[np.ndarray]:
    return [np.array([v], dtype=np.uint64) for v in vals]


class TestPhiloxKnownAnswers:
    """Published Random123 verification vectors for Philox4x32-10."""

    def test_zero_counter_zero_key(self):
        out = philox4x32(*_words(0, 0, 0, 0), 0, 0)
        got = [int(w[0]) for w in out]
        assert got == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]

    def test_all_ones_counter_and_key(self):
        f = 0xFFFFFFFF
        out = philox4x32(*_words(f, f, f, f), f, f)
        got = [int(w[0]) for w in out]
        assert got == [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]

    def test_pi_digit_counter(self):
        out = philox4x32(
            *_words(0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
            0xA4093822,
            0x299F31D0,
        )
        got = [int(w[0]) for w in out]
        assert got == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]

    def test_vectorized_matches_scalar(self):
        c = np.arange(64, dtype=np.uint64)
        batch = philox4x32(c, c * 7, c * 13, c * 29, 123, 456)
        for i in (0, 17, 63):
            single = philox4x32(
                *_words(i, i * 7, i * 13, i * 29), 123, 456
            )
            for w_batch, w_single in zip(batch, single):
                assert w_batch[i] == w_single[0]


class TestBlockUniforms:
    def test_strictly_inside_unit_interval(self):
        cells = np.arange(1000, dtype=np.uint64)
        reps = np.zeros(1000, dtype=np.uint64)
        u, v = block_uniforms(9, cells, reps, 0)
        for arr in (u, v):
            assert np.all(arr > 0.0)
            assert np.all(arr < 1.0)

    def test_attempt_advances_the_stream(self):
        cells = np.arange(100, dtype=np.uint64)
        reps = np.zeros(100, dtype=np.uint64)
        u0, _ = block_uniforms(9, cells, reps, 0)
        u1, _ = block_uniforms(9, cells, reps, 1)
        assert not np.array_equal(u0, u1)

    def test_uniform_mean(self):
        cells = np.arange(200_000, dtype=np.uint64)
        reps = np.zeros(cells.size, dtype=np.uint64)
        u, v = block_uniforms(31337, cells, reps, 0)
        assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
        assert abs(v.mean() - 0.5) < 4 * np.sqrt(1 / 12 / v.size)


def _chi_square_pvalue(draws: np.ndarray, lam: float) -> float:
    """Goodness-of-fit p-value against the exact Poisson pmf.

    Adjacent bins are merged until each expected count is at least five,
    with the far tails folded into the end bins.
    """
    n = draws.size
    lo = int(stats.poisson.ppf(1e-9, lam))
    hi = int(stats.poisson.ppf(1 - 1e-9, lam))
    ks = np.arange(lo, hi + 1)
    probs = stats.poisson.pmf(ks, lam)
    probs[0] += stats.poisson.cdf(lo - 1, lam)
    probs[-1] += stats.poisson.sf(hi, lam)
    observed = np.bincount(
        np.clip(draws, lo, hi) - lo, minlength=ks.size
    ).astype(float)
    expected = probs * n
    obs_m: list[float] = []
    exp_m: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    obs_arr = np.array(obs_m)
    exp_arr = np.array(exp_m)
    exp_arr *= obs_arr.sum() / exp_arr.sum()
    stat = float(((obs_arr - exp_arr) ** 2 / exp_arr).sum())
    return float(stats.chi2.sf(stat, obs_arr.size - 1))


class TestPoissonDistribution:
    @pytest.mark.parametrize(
        "lam", [0.3, 1.0, 5.0, 9.99, 10.0, 35.0, 100.0, 1000.0]
    )
    def test_goodness_of_fit(self, lam):
        seed = 424242 + round(lam * 1000)
        draws = poisson_matrix(seed, np.array([lam]), 200_000).ravel()
        p = _chi_square_pvalue(draws, lam)
        assert p > 1e-3, f"chi-square GOF rejected at lam={lam}: p={p:.2e}"

    def test_zero_intensity_gives_zero(self):
        out = poisson_matrix(5, np.array([0.0, 2.0, 0.0]), 50)
        assert np.all(out[0] == 0)
        assert np.all(out[2] == 0)
        assert out[1].sum() > 0

    def test_huge_intensity_moments(self):
        lam = 1.0e6
        out = poisson_matrix(77, np.array([lam]), 2000).ravel()
        n = out.size
        assert np.all(out > 0)
        assert abs(out.mean() - lam) < 4 * np.sqrt(lam / n)
        se_var = np.sqrt((2 * lam**2 + lam) / n)
        assert abs(out.var(ddof=1) - lam) < 4 * se_var


class TestPoissonDeterminism:
    def test_bitwise_repeatable(self):
        lam = np.array([0.5, 3.0, 12.0, 250.0])
        a = poisson_matrix(2024, lam, 64)
        b = poisson_matrix(2024, lam, 64)
        assert a.dtype == np.int64
        np.testing.assert_array_equal(a, b)

    def test_seed_changes_output(self):
        lam = np.full(50, 5.0)
        a = poisson_matrix(1, lam, 20)
        b = poisson_matrix(2, lam, 20)
        assert not np.array_equal(a, b)

    def test_high_seed_word_matters(self):
        lam = np.full(50, 5.0)
        a = poisson_matrix(3, lam, 20)
        b = poisson_matrix(3 + 2**32, lam, 20)
        assert not np.array_equal(a, b)

    def test_independent_of_chunk_size(self, monkeypatch):
        lam = np.concatenate(
            [np.full(11, 2.5), np.full(12, 40.0)]
        )
        baseline = poisson_matrix(99, lam, 13)
        monkeypatch.setattr(rng, "_CHUNK_LANES", 7)
        rechunked = poisson_matrix(99, lam, 13)
        np.testing.assert_array_equal(baseline, rechunked)

    def test_draws_are_cell_addressed(self):
        """Row i depends only on (seed, i), not on neighbouring rows."""
        lam_full = np.array([1.0, 4.0, 20.0, 300.0])
        full = poisson_matrix(7, lam_full, 16)
        sub = poisson_matrix(7, lam_full[:2], 16)
        np.testing.assert_array_equal(full[:2], sub)

    def test_two_dimensional_intensities_ravel(self):
        lam = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = poisson_matrix(11, lam, 5)
        assert out.shape == (4, 5)
        np.testing.assert_array_equal(out, poisson_matrix(11, lam.ravel(), 5))


class TestPoissonValidation:
    @pytest.mark.parametrize("bad", [-1.0, np.nan, np.inf])
    def test_invalid_intensity_rejected(self, bad):
        with pytest.raises(InvalidIntensityError):
            poisson_matrix(0, np.array([1.0, bad]), 10)

    def test_replicates_must_be_positive(self):
        with pytest.raises(InvalidIntensityError):
            poisson_matrix(0, np.array([1.0]), 0)

    def test_empty_intensities_allowed(self):
        out = poisson_matrix(0, np.array([]), 10)
        assert out.shape == (0, 10)
