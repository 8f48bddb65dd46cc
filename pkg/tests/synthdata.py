"""Deterministic synthetic training sets shared across test modules."""

from __future__ import annotations

import numpy as np

from mortsynth import TrainingRecord

RECOVERY_SEED = 7
RECOVERY_N = 500


def true_log_rate(age: np.ndarray, is_male: np.ndarray, is_smoker: np.ndarray) -> np.ndarray:
    """Smooth ground-truth log mortality rate used by the recovery test."""
    return (
        np.log(0.002)
        + 0.35 * is_male
        + 0.60 * is_smoker
        + 0.50 * np.sin(2.0 * np.pi * (age - 20.0) / 40.0)
    )


def make_recovery_records(
    seed: int = RECOVERY_SEED, n: int = RECOVERY_N
) -> tuple[list[TrainingRecord], np.ndarray]:
    """Poisson-noised records from a known smooth surface.

    Returns the records and the true per-record log rates.
    """
    rng = np.random.default_rng(seed)
    ages = rng.uniform(20.0, 60.0, size=n)
    is_male = rng.integers(0, 2, size=n)
    is_smoker = rng.integers(0, 2, size=n)
    exposure = np.full(n, 50_000.0)
    log_rate = true_log_rate(ages, is_male, is_smoker)
    lam = np.exp(log_rate) * exposure
    deaths = rng.poisson(lam).astype(float)
    records = [
        TrainingRecord(
            age=float(ages[i]),
            gender="M" if is_male[i] else "F",
            smoker="yes" if is_smoker[i] else "no",
            exposure=float(exposure[i]),
            deaths=float(deaths[i]),
            population_deaths=float(lam[i] / 0.8),
        )
        for i in range(n)
    ]
    return records, log_rate


def make_grid_records(seed: int = 11) -> list[TrainingRecord]:
    """A complete age-gender-smoker grid with plausible insured deaths."""
    rng = np.random.default_rng(seed)
    records = []
    for age in range(20, 50):
        for gi, gender in enumerate(("F", "M")):
            for si, smoker in enumerate(("no", "yes")):
                rate = 0.002 * np.exp(0.05 * (age - 20)) * (1.2**gi) * (1.4**si)
                exposure = 5000.0
                deaths = float(rng.poisson(rate * exposure))
                records.append(
                    TrainingRecord(
                        age=float(age),
                        gender=gender,
                        smoker=smoker,
                        exposure=exposure,
                        deaths=deaths,
                        population_deaths=rate / 0.8 * exposure,
                    )
                )
    return records
