"""Standardized mean differences against a reference population.

Signed SMDs are comparator minus reference over the pooled SD. The same two
formulas serve population parameters (table reproduction), realized
cohorts, and weighted cohorts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import NumericalError, SpecificationError
from .population import (
    BINARY_COLUMNS,
    COLUMNS,
    Cohort,
    PopulationSpec,
    expand_covariates,
)

ROW_LABELS = {
    "age": "Age (years)",
    "female": "Sex (female)",
    "race_black": "Race: Black",
    "race_other": "Race: Other",
    "hispanic": "Hispanic Ethnicity",
    "hypertension": "Hypertension",
    "heart_failure": "Heart failure",
    "cad": "Coronary artery disease",
    "pad": "Peripheral artery disease",
}


def smd_continuous(mean_a: float, sd_a: float, mean_b: float, sd_b: float) -> float:
    if not (sd_a > 0 and sd_b > 0):
        raise NumericalError(f"standard deviations must be positive, got {sd_a}, {sd_b}")
    return (mean_a - mean_b) / math.sqrt((sd_a**2 + sd_b**2) / 2.0)


def smd_binary(p_a: float, p_b: float) -> float:
    for p in (p_a, p_b):
        if not 0.0 <= p <= 1.0:
            raise NumericalError(f"prevalence outside [0, 1]: {p}")
    pooled = (p_a * (1.0 - p_a) + p_b * (1.0 - p_b)) / 2.0
    if pooled <= 0.0:
        raise NumericalError(f"zero pooled variance for prevalences {p_a}, {p_b}")
    return (p_a - p_b) / math.sqrt(pooled)


@dataclass(frozen=True)
class Moments:
    """Per-column summary feeding the SMD formulas; ``None`` marks UNMEASURED."""

    name: str
    age_mean: float
    age_sd: float
    prevalence: Mapping[str, float | None]

    @classmethod
    def from_spec(cls, spec: PopulationSpec) -> "Moments":
        return cls(spec.name, spec.age_mean, spec.age_sd, spec.prevalences())

    @classmethod
    def from_cohort(cls, cohort: Cohort, weights=None) -> "Moments":
        w = None if weights is None else np.asarray(weights, dtype=np.float64)
        age = cohort["age"]
        if w is None:
            mean, sd = float(age.mean()), float(age.std(ddof=1))
        else:
            mean = float(np.dot(w, age) / w.sum())
            sd = float(np.sqrt(np.dot(w, (age - mean) ** 2) / w.sum()))
        prev = {}
        for col in BINARY_COLUMNS:
            x = cohort[col]
            if x is None:
                prev[col] = None
            elif w is None:
                prev[col] = float(x.mean())
            else:
                prev[col] = float(np.dot(w, x) / w.sum())
        return cls(cohort.spec_name, mean, sd, prev)


def column_smds(comparator: Moments, reference: Moments) -> dict[str, float | None]:
    out: dict[str, float | None] = {
        "age": smd_continuous(comparator.age_mean, comparator.age_sd, reference.age_mean, reference.age_sd)
    }
    for col in BINARY_COLUMNS:
        pa, pb = comparator.prevalence[col], reference.prevalence[col]
        out[col] = None if pa is None or pb is None else smd_binary(pa, pb)
    return out


@dataclass
class BalanceReport:
    reference_name: str
    smd: dict[str, dict[str, float | None]]
    aggregates: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def populations(self) -> list[str]:
        return list(self.smd)

    def absolute(self) -> dict[str, dict[str, float | None]]:
        return {
            pop: {c: None if v is None else abs(v) for c, v in row.items()}
            for pop, row in self.smd.items()
        }


def population_balance(
    specs: Sequence[PopulationSpec],
    reference: PopulationSpec,
    include_reference: bool = False,
) -> BalanceReport:
    """Parameter-based SMDs of every spec against ``reference``."""
    ref = Moments.from_spec(reference)
    smd = {
        s.name: column_smds(Moments.from_spec(s), ref)
        for s in specs
        if include_reference or s.name != reference.name
    }
    return BalanceReport(reference.name, smd)


def cohort_balance(cohorts: Sequence[Cohort], reference: Cohort) -> BalanceReport:
    """SMDs computed from realized samples."""
    ref = Moments.from_cohort(reference)
    return BalanceReport(
        reference.spec_name,
        {c.spec_name: column_smds(Moments.from_cohort(c), ref) for c in cohorts},
    )


def aggregate_smd(report: BalanceReport, modifier_set) -> dict[str, float]:
    """Sum of signed SMDs over ``modifier_set`` for every population.

    Race counts as its two indicator rows. UNMEASURED cells contribute 0.
    """
    cols = expand_covariates(modifier_set)
    out = {}
    for pop, row in report.smd.items():
        total = 0.0
        for col in cols:
            v = row[col]
            if v is not None:
                total += v
        out[pop] = total
    return out


def add_aggregates(report: BalanceReport, scenarios, weightings) -> BalanceReport:
    """Attach one aggregate row per (scenario, weighting model).

    Each row sums the scenario's modifiers that the weighting model adjusts
    for, i.e. the divergence that weighting to that target carries into bias.
    """
    for sc in scenarios:
        for w in weightings:
            used = [c for c in w.covariates if c in sc.modifiers]
            report.aggregates[f"{sc.name}:{w.name}"] = aggregate_smd(report, used)
    return report


def weighted_balance(trial: Cohort, weights, target: PopulationSpec) -> dict[str, float | None]:
    """SMDs of the weighted trial against the target's parameters."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(trial),):
        raise SpecificationError("weights", f"expected {len(trial)} weights, got {w.shape}")
    if np.any(~(w > 0)):
        raise NumericalError("weights must be positive")
    return column_smds(Moments.from_cohort(trial, w), Moments.from_spec(target))


def balance_table(report: BalanceReport) -> pd.DataFrame:
    """Wide table: covariate and aggregate rows by population columns."""
    rows = []
    for col in COLUMNS:
        rows.append({"row": col, "label": ROW_LABELS[col],
                     **{pop: report.smd[pop][col] for pop in report.populations}})
    for key, agg in report.aggregates.items():
        rows.append({"row": key, "label": f"aggregate {key}",
                     **{pop: agg[pop] for pop in report.populations}})
    return pd.DataFrame(rows, columns=["row", "label", *report.populations])


def love_plot_data(report: BalanceReport) -> pd.DataFrame:
    """Long format (population, covariate, signed_smd, abs_smd); UNMEASURED as NaN."""
    recs = []
    for pop in report.populations:
        for col in COLUMNS:
            v = report.smd[pop][col]
            recs.append({
                "population": pop,
                "covariate": col,
                "signed_smd": np.nan if v is None else v,
                "abs_smd": np.nan if v is None else abs(v),
            })
    return pd.DataFrame(recs, columns=["population", "covariate", "signed_smd", "abs_smd"])
