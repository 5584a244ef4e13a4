"""Linear potential-outcome model with covariate effect modification.

Both potential outcomes share one residual draw per individual, so the
individual treatment effect is a deterministic function of covariates::

    y0 = mu0 + beta' x + eps
    y1 = mu0 + k * shift + (beta + k * delta)' x + eps
    te = k * (shift + delta' x)

Age enters ``x`` standardized against an anchor population (the analytic
sample by default); every binary indicator enters as 0/1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OutcomeGenerationError, SpecificationError
from .population import (
    COLUMNS,
    COVARIATES,
    Cohort,
    PopulationSpec,
    builtin_specs,
    covariate_columns,
    expand_covariates,
)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    modifiers: frozenset = field(default_factory=frozenset)
    mu0: float = 3.1
    treatment_shift: float = 5.4
    beta: float = -0.50
    delta: float = 1.34
    sigma_eps: float = 7.0
    effect_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modifiers", frozenset(self.modifiers))
        unknown = self.modifiers - set(COVARIATES)
        if unknown:
            raise SpecificationError("modifiers", f"unknown covariates {sorted(unknown)}")
        if not self.sigma_eps > 0:
            raise SpecificationError("sigma_eps", f"must be positive, got {self.sigma_eps}")
        # zero is tolerated here for degenerate checks; study configs reject it
        if not (math.isfinite(self.effect_scale) and self.effect_scale >= 0):
            raise SpecificationError("effect_scale", f"must be non-negative, got {self.effect_scale}")

    @property
    def modifier_columns(self) -> tuple[str, ...]:
        return tuple(c for c in COLUMNS if c in expand_covariates(self.modifiers))

    def scaled(self, k: float) -> "ScenarioSpec":
        return replace(self, effect_scale=float(k))

    def to_dict(self) -> dict:
        return {
            "modifiers": [c for c in COVARIATES if c in self.modifiers],
            "mu0": self.mu0,
            "treatment_shift": self.treatment_shift,
            "beta": self.beta,
            "delta": self.delta,
            "sigma_eps": self.sigma_eps,
        }


@dataclass(frozen=True)
class PotentialOutcomes:
    """Both potential outcomes plus the effect ``te``.

    ``te`` is kept as computed rather than as ``y1 - y0`` so that it carries
    no rounding from the shared residual.
    """

    y0: np.ndarray
    y1: np.ndarray
    te: np.ndarray

    def __len__(self) -> int:
        return len(self.y0)


def scenario_catalog() -> dict[str, ScenarioSpec]:
    """The four effect-modification structures of the study."""
    return {
        "all_modifiers": ScenarioSpec("all_modifiers", frozenset(COVARIATES)),
        "four_modifiers": ScenarioSpec(
            "four_modifiers", frozenset({"age", "female", "hypertension", "pad"})
        ),
        "one_modifier": ScenarioSpec("one_modifier", frozenset({"hypertension"})),
        "no_modifiers": ScenarioSpec("no_modifiers", frozenset()),
    }


def default_anchor() -> PopulationSpec:
    return builtin_specs()["trial"]


def standardize_age(age, anchor: PopulationSpec | None = None):
    anchor = default_anchor() if anchor is None else anchor
    return (age - anchor.age_mean) / anchor.age_sd


def _outcome_design(cohort: Cohort, anchor: PopulationSpec) -> np.ndarray:
    for col in COLUMNS:
        if cohort[col] is None:
            raise OutcomeGenerationError(col)
    X = cohort.design(COLUMNS)
    X[:, 0] = standardize_age(X[:, 0], anchor)
    return X


def _effects(X: np.ndarray, scenario: ScenarioSpec) -> np.ndarray:
    k = scenario.effect_scale
    mods = scenario.modifier_columns
    delta = np.array([scenario.delta if c in mods else 0.0 for c in COLUMNS])
    return k * scenario.treatment_shift + X @ (k * delta)


def treatment_effects(cohort: Cohort, scenario: ScenarioSpec, anchor: PopulationSpec | None = None) -> np.ndarray:
    """Noise-free individual effects ``k * (shift + delta' x)``."""
    anchor = default_anchor() if anchor is None else anchor
    return _effects(_outcome_design(cohort, anchor), scenario)


def generate_outcomes(
    cohort: Cohort,
    scenario: ScenarioSpec,
    seed,
    anchor: PopulationSpec | None = None,
) -> PotentialOutcomes:
    anchor = default_anchor() if anchor is None else anchor
    X = _outcome_design(cohort, anchor)
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, scenario.sigma_eps, size=len(cohort))

    beta = np.full(len(COLUMNS), scenario.beta)
    te = _effects(X, scenario)
    y0 = scenario.mu0 + X @ beta + eps
    return PotentialOutcomes(y0, y0 + te, te)


def expected_sate(
    spec: PopulationSpec,
    scenario: ScenarioSpec,
    anchor: PopulationSpec | None = None,
) -> float:
    """Population-level mean treatment effect implied by the population parameters."""
    anchor = default_anchor() if anchor is None else anchor
    total = 0.0
    for cov in sorted(scenario.modifiers):
        if cov == "age":
            total += (spec.age_mean - anchor.age_mean) / anchor.age_sd
            continue
        for col in covariate_columns(cov):
            p = getattr(spec, col)
            if p is None:
                raise OutcomeGenerationError(col, f"modifier is UNMEASURED in {spec.name!r}")
            total += p
    k = scenario.effect_scale
    return k * scenario.treatment_shift + k * scenario.delta * total
