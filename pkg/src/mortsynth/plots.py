"""Static SVG plots of rate-vs-age curves with confidence ribbons.

Emission is deterministic: the SVG hash salt is pinned and the date
metadata removed, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

from .errors import InvalidSpecError  # noqa: E402
from .montecarlo import SimulationSummary  # noqa: E402
from .tables import ContingencyTable  # noqa: E402

_HASH_SALT = "mortsynth"
_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _age_axis(dims) -> np.ndarray:
    try:
        return np.array([float(lev) for lev in dims[0].levels])
    except ValueError as exc:
        raise InvalidSpecError(
            f"age levels must be numeric for plotting: {exc}"
        ) from exc


def _curve_iter(dims):
    """Yield (label, color, index tuple) per gender-smoker combination."""
    genders = dims[1].levels
    smokers = dims[2].levels
    i = 0
    for g_i, gender in enumerate(genders):
        for s_i, smoker in enumerate(smokers):
            yield f"{gender}, smoker={smoker}", _COLORS[i % len(_COLORS)], (g_i, s_i)
            i += 1


def _save(fig, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": _HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_rate_curves(
    summary: SimulationSummary, path: str | Path, title: str = ""
) -> None:
    """Mean simulated mortality rate by age, one curve per gender-smoker.

    Shaded ribbons span the summary's percentile intervals on the rate
    scale.  Requires a summary over (age, gender, smoker) with exposure.
    """
    dims = summary.dims
    if tuple(d.name for d in dims) != ("age", "gender", "smoker"):
        raise InvalidSpecError(
            "rate curves need a summary over (age, gender, smoker), got "
            f"{tuple(d.name for d in dims)}"
        )
    if summary.mean_rate is None:
        raise InvalidSpecError("rate curves need a summary with exposure")
    shape = tuple(len(d) for d in dims)
    ages = _age_axis(dims)
    mean_rate = summary.mean_rate.reshape(shape)

    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    for label, color, (g_i, s_i) in _curve_iter(dims):
        ax.plot(ages, mean_rate[:, g_i, s_i], color=color, label=label, lw=1.5)
        for level, (lo, hi) in summary.rate_intervals.items():
            ax.fill_between(
                ages,
                lo.reshape(shape)[:, g_i, s_i],
                hi.reshape(shape)[:, g_i, s_i],
                color=color,
                alpha=0.18,
                linewidth=0,
            )
    ax.set_yscale("log")
    ax.set_xlabel("age")
    ax.set_ylabel("mortality rate")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=9)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    _save(fig, Path(path))


def plot_transfer_comparison(
    insured_rates: ContingencyTable,
    population_rates: ContingencyTable,
    path: str | Path,
    title: str = "",
) -> None:
    """Predicted insured rates (solid) against population rates (dashed)."""
    for name, table in (("insured", insured_rates), ("population", population_rates)):
        if tuple(d.name for d in table.dims) != ("age", "gender", "smoker"):
            raise InvalidSpecError(
                f"{name} table must span (age, gender, smoker)"
            )
    dims = insured_rates.dims
    ages = _age_axis(dims)
    ins = insured_rates.values
    pop = population_rates.values

    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    for label, color, (g_i, s_i) in _curve_iter(dims):
        ax.plot(ages, ins[:, g_i, s_i], color=color, lw=1.5,
                label=f"insured {label}")
        ax.plot(ages, pop[:, g_i, s_i], color=color, lw=1.2, ls="--",
                label=f"population {label}")
    ax.set_yscale("log")
    ax.set_xlabel("age")
    ax.set_ylabel("mortality rate")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8, ncol=2)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    _save(fig, Path(path))
