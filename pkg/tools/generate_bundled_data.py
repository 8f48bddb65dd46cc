"""Regenerate the bundled reference datasets under src/mortsynth/data/.

Ages 20-33 of the Germany age-gender shares, the Germany smoker shares,
the German state shares, and the Italy male insured rates for ages 20-29
are fixed published aggregate figures and are embedded verbatim below.
Everything else (older ages, female Italy rates, all Switzerland inputs,
the parametric insured/population rate surfaces) is synthetic, produced
by the closed-form rules in this script so the datasets are complete,
self-consistent, and license-free.  Rerunning the script rewrites the
files deterministically.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mortsynth.dataio import write_table  # noqa: E402
from mortsynth.tables import ContingencyTable, DimensionSpec  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "mortsynth" / "data"

AGES = tuple(str(a) for a in range(20, 114))
GENDERS = ("F", "M")
SMOKERS = ("no", "yes")

# Published joint population shares (percent of the full population) for
# ages 20-33 by gender.
AGE_GENDER_PERCENT_F = [
    1.439913, 1.507098, 1.503754, 1.483638, 1.515971, 1.573950, 1.609090,
    1.671727, 1.823225, 1.809394, 1.846709, 1.812673, 1.790005, 1.739514,
]
AGE_GENDER_PERCENT_M = [
    1.5818712, 1.6599224, 1.6463640, 1.6237836, 1.6515359, 1.7035385,
    1.7303510, 1.7916157, 1.9605025, 1.9270780, 1.9747674, 1.9276493,
    1.8826642, 1.8217951,
]
# Synthetic gender split for the completed table (percent of total).
GENDER_TOTAL_PERCENT = {"F": 50.8, "M": 49.2}

# Published smoker shares within each gender (percent per gender).
SMOKER_GIVEN_GENDER_PERCENT = {
    ("F", "yes"): 20.8, ("F", "no"): 79.2,
    ("M", "yes"): 27.0, ("M", "no"): 73.0,
}

# Published state population shares (percent); they sum to 100.057 as
# printed, which downstream code normalizes explicitly.
STATE_PERCENT = [
    ("Baden-Württemberg", 13.4),
    ("Bayern", 15.9),
    ("Berlin", 4.47),
    ("Brandenburg", 3.05),
    ("Bremen", 0.817),
    ("Hamburg", 2.26),
    ("Hessen", 7.58),
    ("Mecklenburg-Vorpommern", 1.92),
    ("Niedersachsen", 9.64),
    ("Nordrhein-Westfalen", 21.5),
    ("Rheinland-Pfalz", 4.93),
    ("Saarland", 1.17),
    ("Sachsen", 4.83),
    ("Sachsen-Anhalt", 2.58),
    ("Schleswig-Holstein", 3.50),
    ("Thüringen", 2.51),
]

# Published Italian male insured mortality rates, ages 20-29.
ITALY_MALE_RATES = [
    0.000532, 0.000526, 0.000518, 0.000508, 0.000492,
    0.000506, 0.000528, 0.000572, 0.000634, 0.000705,
]
ITALY_FEMALE_FACTOR = 0.58
ITALY_TAIL_GROWTH = 0.062  # log-slope of the synthetic rate continuation
# Smoker share among Italian men back-solved from the published split
# rates (0.000621 / 0.000444 at hazard ratio 1.4); women synthetic.
ITALY_SMOKER_SHARE = {"M": 88.0 / 177.0, "F": 0.197}

# Synthetic Germany insured-rate surface: Gompertz in age with
# multiplicative gender and smoker loadings.
DE_BASE_RATE = 0.0025
DE_AGE_SLOPE = 0.055
DE_MALE_FACTOR = 1.2
DE_SMOKER_FACTOR = 1.4
# Insured/population rate ratios by smoker status (selection effects).
DE_INSURED_OVER_POP = {"no": 0.8, "yes": 1.15}

# Synthetic Switzerland population-rate surface and smoker structure.
CH_BASE_RATE = 0.0034
CH_AGE_SLOPE = 0.055
CH_MALE_FACTOR = 1.2
CH_SMOKER_HAZARD = 1.5
CH_SMOKER_SHARE = {"M": 0.27, "F": 0.21}

# Synthetic regional shares (percent) for Italy and Switzerland.
ITALY_REGION_PERCENT = [
    ("Lombardia", 17.1), ("Lazio", 9.7), ("Campania", 9.5), ("Sicilia", 8.2),
    ("Veneto", 8.2), ("Emilia-Romagna", 7.5), ("Piemonte", 7.2),
    ("Puglia", 6.6), ("Toscana", 6.2), ("Calabria", 3.1), ("Sardegna", 2.7),
    ("Liguria", 2.5), ("Marche", 2.5), ("Abruzzo", 2.2),
    ("Friuli-Venezia Giulia", 2.0), ("Trentino-Alto Adige", 1.8),
    ("Umbria", 1.4), ("Basilicata", 0.9), ("Molise", 0.5),
    ("Valle d'Aosta", 0.2),
]
CH_CANTON_RAW = [
    ("Zürich", 18.0), ("Bern", 11.8), ("Vaud", 9.4), ("Aargau", 8.1),
    ("St. Gallen", 6.0), ("Genève", 5.9), ("Luzern", 4.9), ("Ticino", 4.1),
]


def _exponential_tail(last_value: float, target_sum: float, n: int) -> np.ndarray:
    """Geometric decay from ``last_value`` whose ``n`` terms sum to target.

    Solves for the decay rate, then rescales so the sum is exact.
    """
    from scipy.optimize import brentq

    def gap(k: float) -> float:
        j = np.arange(1, n + 1)
        return float(last_value * np.exp(-k * j).sum() - target_sum)

    k = brentq(gap, 1e-6, 5.0, xtol=1e-14)
    tail = last_value * np.exp(-k * np.arange(1, n + 1))
    return tail * (target_sum / tail.sum())


def germany_age_gender() -> ContingencyTable:
    n_tail = len(AGES) - len(AGE_GENDER_PERCENT_F)
    cols = {}
    for gender, printed in (("F", AGE_GENDER_PERCENT_F), ("M", AGE_GENDER_PERCENT_M)):
        printed = np.array(printed)
        target_tail = GENDER_TOTAL_PERCENT[gender] - printed.sum()
        tail = _exponential_tail(printed[-1], target_tail, n_tail)
        cols[gender] = np.concatenate([printed, tail])
    values = np.column_stack([cols["F"], cols["M"]])
    dims = (DimensionSpec("age", AGES), DimensionSpec("gender", GENDERS))
    return ContingencyTable(dims, values, "probability",
                            declared_total=float(values.sum()))


def synthetic_age_gender(split: dict[str, float], ramp: float) -> ContingencyTable:
    """A smooth synthetic joint age-gender share table (percent scale)."""
    n_head, n_tail = 16, len(AGES) - 16
    cols = {}
    for gender in GENDERS:
        start = split[gender] / 65.0
        head = start * (1.0 + ramp * np.arange(n_head))
        target_tail = split[gender] - head.sum()
        tail = _exponential_tail(head[-1], target_tail, n_tail)
        cols[gender] = np.concatenate([head, tail])
    values = np.column_stack([cols["F"], cols["M"]])
    dims = (DimensionSpec("age", AGES), DimensionSpec("gender", GENDERS))
    return ContingencyTable(dims, values, "probability",
                            declared_total=float(values.sum()))


def _state_table(pairs: list[tuple[str, float]]) -> ContingencyTable:
    dims = (DimensionSpec("state", tuple(name for name, _ in pairs)),)
    values = np.array([float(v) for _, v in pairs])
    return ContingencyTable(dims, values, "probability",
                            declared_total=float(values.sum()))


def germany_rate_tables() -> tuple[ContingencyTable, ContingencyTable]:
    dims = (
        DimensionSpec("age", AGES),
        DimensionSpec("gender", GENDERS),
        DimensionSpec("smoker", SMOKERS),
    )
    insured = np.zeros((len(AGES), 2, 2))
    population = np.zeros_like(insured)
    for i, age in enumerate(AGES):
        for j, gender in enumerate(GENDERS):
            for k, smoker in enumerate(SMOKERS):
                rate = DE_BASE_RATE * math.exp(DE_AGE_SLOPE * (int(age) - 20))
                if gender == "M":
                    rate *= DE_MALE_FACTOR
                if smoker == "yes":
                    rate *= DE_SMOKER_FACTOR
                insured[i, j, k] = rate
                population[i, j, k] = rate / DE_INSURED_OVER_POP[smoker]
    return (
        ContingencyTable(dims, insured, "rate"),
        ContingencyTable(dims, population, "rate"),
    )


def italy_base_rates() -> ContingencyTable:
    male = list(ITALY_MALE_RATES)
    last = male[-1]
    for age in range(30, 114):
        male.append(last * math.exp(ITALY_TAIL_GROWTH * (age - 29)))
    male_arr = np.array(male)
    values = np.column_stack([ITALY_FEMALE_FACTOR * male_arr, male_arr])
    dims = (DimensionSpec("age", AGES), DimensionSpec("gender", GENDERS))
    return ContingencyTable(dims, values, "rate")


def smoker_share_table(shares: dict[str, float]) -> ContingencyTable:
    dims = (DimensionSpec("gender", GENDERS), DimensionSpec("smoker", SMOKERS))
    values = np.array(
        [[1.0 - shares["F"], shares["F"]], [1.0 - shares["M"], shares["M"]]]
    )
    return ContingencyTable(dims, values, "probability",
                            declared_total=float(values.sum()))


def swiss_population_rates() -> ContingencyTable:
    dims = (DimensionSpec("age", AGES), DimensionSpec("gender", GENDERS))
    values = np.zeros((len(AGES), 2))
    for i, age in enumerate(AGES):
        for j, gender in enumerate(GENDERS):
            rate = CH_BASE_RATE * math.exp(CH_AGE_SLOPE * (int(age) - 20))
            if gender == "M":
                rate *= CH_MALE_FACTOR
            values[i, j] = rate
    return ContingencyTable(dims, values, "rate")


def germany_smoker_conditional() -> ContingencyTable:
    dims = (DimensionSpec("gender", GENDERS), DimensionSpec("smoker", SMOKERS))
    values = np.array(
        [
            [SMOKER_GIVEN_GENDER_PERCENT[("F", "no")], SMOKER_GIVEN_GENDER_PERCENT[("F", "yes")]],
            [SMOKER_GIVEN_GENDER_PERCENT[("M", "no")], SMOKER_GIVEN_GENDER_PERCENT[("M", "yes")]],
        ]
    )
    return ContingencyTable(dims, values, "probability",
                            declared_total=float(values.sum()))


CONFIG_GERMANY = """\
[scenario]
id = 1
country = "germany"
population_total = 1000000.0

[inputs]
age_gender = "../germany/age_gender.csv"
smoker_gender = "../germany/smoker_gender.csv"
state = "../germany/state.csv"
insured_rates = "../germany/insured_rates.csv"

[ipf]
tolerance = 1e-10
max_iterations = 1000
zero_policy = "keep_zero"

[simulation]
replicates = 1000
seed = 20240501
ci = [2.5, 97.5]

[report]
reference_cell = { age = "20", gender = "M", state = "Baden-Württemberg", smoker = "yes" }
reference_value_percent = 0.02852311
"""

CONFIG_ITALY = """\
[scenario]
id = 2
country = "italy"
population_total = 1000000.0

[inputs]
age_gender = "../italy/age_gender.csv"
prevalence = "../italy/prevalence.csv"
state = "../italy/state.csv"
base_rates = "../italy/base_rates.csv"

[hazard]
group = "smoker"
reference = "no"

[hazard.ratios]
yes = 1.4

[ipf]
tolerance = 1e-10
max_iterations = 1000
zero_policy = "keep_zero"

[simulation]
replicates = 1000
seed = 20240502
ci = [2.5, 97.5]
"""

CONFIG_SWITZERLAND = """\
[scenario]
id = 3
country = "switzerland"
population_total = 1000000.0

[inputs]
age_gender = "../switzerland/age_gender.csv"
prevalence = "../switzerland/prevalence.csv"
state = "../switzerland/state.csv"
population_rates = "../switzerland/population_rates.csv"

[hazard]
group = "smoker"
reference = "no"

[hazard.ratios]
yes = 1.5

[transfer]
source_age_gender = "../germany/age_gender.csv"
source_smoker_gender = "../germany/smoker_gender.csv"
source_insured_rates = "../germany/insured_rates.csv"
source_population_rates = "../germany/population_rates.csv"
source_population_total = 1000000.0

[gam]
num_basis = 10
degree = 3
penalty_order = 2
lambda_age = [0.1, 1.0, 10.0]
lambda_pop = [0.1, 1.0, 10.0]

[ipf]
tolerance = 1e-10
max_iterations = 1000
zero_policy = "keep_zero"

[simulation]
replicates = 1000
seed = 20240503
ci = [2.5, 97.5]
"""

DATA_README = """\
# Bundled reference data

These files drive the three country scenarios and the test suite.

Fixed published aggregate figures (embedded verbatim in
`tools/generate_bundled_data.py`):

- `germany/age_gender.csv`, ages 20-33: joint population shares by age
  and gender, percent of the total population.
- `germany/smoker_gender.csv`: smoker shares within each gender
  (percent per gender; each gender's column sums to 100).
- `germany/state.csv`: federal-state population shares in percent. As
  printed they sum to 100.057, not 100; pipelines normalize explicitly.
- `italy/base_rates.csv`, male ages 20-29: insured mortality rates.
- `italy/prevalence.csv`, male share 88/177: back-solved from published
  smoker/non-smoker split rates at hazard ratio 1.4.

Everything else is synthetic: ages beyond the published rows, all female
Italian rates, the Germany insured/population rate surfaces, the whole
of the Switzerland inputs, and the Italy/Switzerland regional shares.
Synthetic values come from closed-form rules (geometric share decay,
Gompertz-style rate growth with fixed gender/smoker loadings) chosen for
plausibility and numerical coverage. They are NOT real demographic or
actuarial data and must not be used for anything but exercising this
software.

Regenerate everything with:

    python3 tools/generate_bundled_data.py

Table files are long-format CSV (dimension columns plus a final `value`
column) with a `<name>.meta.json` sidecar declaring kind, units, and
level order. `configs/` holds one run configuration per scenario; the
file paths inside are relative to the config file's directory.
"""


def main() -> None:
    # Germany
    de = DATA / "germany"
    write_table(
        germany_age_gender(), de / "age_gender.csv",
        "Joint population shares by age and gender, percent of total. "
        "Ages 20-33 published; older ages synthetic completion.",
        units="percent",
    )
    write_table(
        germany_smoker_conditional(), de / "smoker_gender.csv",
        "Smoker share within each gender, percent per gender.",
        units="percent", conditional_on="gender",
    )
    write_table(
        _state_table(STATE_PERCENT), de / "state.csv",
        "Federal-state population shares, percent (printed sum 100.057).",
        units="percent",
    )
    insured, population = germany_rate_tables()
    write_table(
        insured, de / "insured_rates.csv",
        "Synthetic insured-population mortality rates by age, gender, smoker.",
    )
    write_table(
        population, de / "population_rates.csv",
        "Synthetic general-population mortality rates by age, gender, smoker.",
    )

    # Italy
    it = DATA / "italy"
    write_table(
        synthetic_age_gender({"F": 51.3, "M": 48.7}, 0.012),
        it / "age_gender.csv",
        "Synthetic joint population shares by age and gender, percent.",
        units="percent",
    )
    write_table(
        italy_base_rates(), it / "base_rates.csv",
        "Insured mortality rates by age and gender. Male ages 20-29 "
        "published; all other cells synthetic.",
    )
    write_table(
        smoker_share_table(ITALY_SMOKER_SHARE), it / "prevalence.csv",
        "Smoker share within each gender (male share back-solved; female synthetic).",
        conditional_on="gender",
    )
    write_table(
        _state_table(ITALY_REGION_PERCENT), it / "state.csv",
        "Synthetic regional population shares, percent.",
        units="percent",
    )

    # Switzerland
    ch = DATA / "switzerland"
    write_table(
        synthetic_age_gender({"F": 50.4, "M": 49.6}, 0.010),
        ch / "age_gender.csv",
        "Synthetic joint population shares by age and gender, percent.",
        units="percent",
    )
    write_table(
        swiss_population_rates(), ch / "population_rates.csv",
        "Synthetic general-population mortality rates by age and gender.",
    )
    write_table(
        smoker_share_table(CH_SMOKER_SHARE), ch / "prevalence.csv",
        "Synthetic smoker share within each gender.",
        conditional_on="gender",
    )
    total = sum(v for _, v in CH_CANTON_RAW)
    cantons = [(name, 100.0 * v / total) for name, v in CH_CANTON_RAW]
    write_table(
        _state_table(cantons), ch / "state.csv",
        "Synthetic canton population shares, percent.",
        units="percent",
    )

    configs = DATA / "configs"
    configs.mkdir(parents=True, exist_ok=True)
    (configs / "germany.toml").write_text(CONFIG_GERMANY, encoding="utf-8")
    (configs / "italy.toml").write_text(CONFIG_ITALY, encoding="utf-8")
    (configs / "switzerland.toml").write_text(CONFIG_SWITZERLAND, encoding="utf-8")
    (DATA / "README.md").write_text(DATA_README, encoding="utf-8")
    print(f"wrote bundled data under {DATA}")


if __name__ == "__main__":
    main()
