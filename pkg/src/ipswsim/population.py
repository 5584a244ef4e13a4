"""Population specifications and synthetic cohort sampling.

A :class:`PopulationSpec` holds the marginal covariate parameters of one
population (age mean/SD and binary prevalences). :func:`sample_population`
draws an independent-covariate cohort from it. Clinical covariates may be
``UNMEASURED`` for sources that only carry demographics; such columns are
absent for the whole cohort, never per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

import numpy as np

from .errors import SpecificationError

# Column-level sentinel for a covariate that the data source does not record.
UNMEASURED = None

ROLES = ("analytic_sample", "target", "reference")

DEMOGRAPHIC = ("age", "female", "race", "hispanic")
CLINICAL = ("hypertension", "heart_failure", "cad", "pad")
COVARIATES = DEMOGRAPHIC + CLINICAL

BINARY_COLUMNS = (
    "female",
    "race_black",
    "race_other",
    "hispanic",
    "hypertension",
    "heart_failure",
    "cad",
    "pad",
)
COLUMNS = ("age",) + BINARY_COLUMNS

RACE_CATEGORIES = ("white", "black", "other")


def covariate_columns(covariate: str) -> tuple[str, ...]:
    """Cohort columns that encode ``covariate`` (race expands to two indicators)."""
    if covariate == "race":
        return ("race_black", "race_other")
    if covariate in COVARIATES:
        return (covariate,)
    raise SpecificationError("covariate", f"unknown covariate {covariate!r}")


def expand_covariates(covariates) -> tuple[str, ...]:
    cols: list[str] = []
    for cov in covariates:
        cols.extend(covariate_columns(cov))
    return tuple(cols)


def race_indicators(category: str) -> tuple[int, int]:
    """Encode a race category as ``(race_black, race_other)``; white is the reference level."""
    try:
        idx = RACE_CATEGORIES.index(category)
    except ValueError:
        raise SpecificationError("race", f"unknown race category {category!r}") from None
    return (int(idx == 1), int(idx == 2))


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    n_simulated: int
    age_mean: float
    age_sd: float
    female: float
    race_black: float
    race_other: float
    hispanic: float
    hypertension: float | None = UNMEASURED
    heart_failure: float | None = UNMEASURED
    cad: float | None = UNMEASURED
    pad: float | None = UNMEASURED
    role: str = "target"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise SpecificationError("name", "must be a non-empty string")
        if isinstance(self.n_simulated, bool) or not isinstance(self.n_simulated, (int, np.integer)):
            raise SpecificationError("n_simulated", "must be an integer")
        if self.n_simulated <= 0:
            raise SpecificationError("n_simulated", f"must be positive, got {self.n_simulated}")
        if not math.isfinite(self.age_mean):
            raise SpecificationError("age_mean", "must be finite")
        if not (math.isfinite(self.age_sd) and self.age_sd > 0):
            raise SpecificationError("age_sd", f"must be positive, got {self.age_sd}")
        if self.role not in ROLES:
            raise SpecificationError("role", f"must be one of {ROLES}, got {self.role!r}")
        for col in BINARY_COLUMNS:
            p = getattr(self, col)
            if p is UNMEASURED:
                if col not in CLINICAL:
                    raise SpecificationError(col, "only clinical covariates may be UNMEASURED")
                continue
            if isinstance(p, bool) or not isinstance(p, (int, float, np.floating)):
                raise SpecificationError(col, f"prevalence must be a number, got {p!r}")
            if not 0.0 <= p <= 1.0:
                raise SpecificationError(col, f"prevalence must lie in [0, 1], got {p}")
        if self.race_black + self.race_other > 1.0 + 1e-12:
            raise SpecificationError("race_other", "race_black + race_other exceeds 1")

    @property
    def race_white(self) -> float:
        return max(0.0, 1.0 - self.race_black - self.race_other)

    def is_measured(self, covariate: str) -> bool:
        return all(
            col == "age" or getattr(self, col) is not UNMEASURED
            for col in covariate_columns(covariate)
        )

    def unmeasured(self) -> tuple[str, ...]:
        return tuple(c for c in BINARY_COLUMNS if getattr(self, c) is UNMEASURED)

    def prevalences(self) -> dict[str, float | None]:
        return {c: getattr(self, c) for c in BINARY_COLUMNS}

    def with_size(self, n: int) -> "PopulationSpec":
        return replace(self, n_simulated=n)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Published baseline characteristics: age mean (SD) and printed percentages; simulated sizes as defaults.
_BUILTIN = (
    PopulationSpec("trial", 5_000, 61.8, 12.7, 0.504, 0.225, 0.065, 0.090,
                   0.784, 0.105, 0.230, 0.092, role="analytic_sample"),
    PopulationSpec("registry", 75_000, 67.9, 12.6, 0.455, 0.117, 0.030, 0.054,
                   0.872, 0.268, 0.579, 0.155, role="target"),
    PopulationSpec("pcornet_disease", 150_000, 63.0, 13.7, 0.521, 0.232, 0.111, 0.160,
                   0.770, 0.149, 0.249, 0.229, role="reference"),
    PopulationSpec("pcornet_overall", 300_000, 41.4, 22.2, 0.569, 0.167, 0.134, 0.150,
                   0.239, 0.030, 0.070, 0.050, role="target"),
    PopulationSpec("us_census", 500_000, 39.1, 23.5, 0.509, 0.135, 0.105, 0.187,
                   role="target"),
)


def builtin_specs() -> dict[str, PopulationSpec]:
    """The five built-in populations, keyed by name, in continuum order."""
    return {s.name: s for s in _BUILTIN}


@dataclass(frozen=True)
class Cohort:
    """A realized sample stored column-wise.

    ``columns`` maps every name in :data:`COLUMNS` to a read-only float array,
    or to ``UNMEASURED`` when the source population does not record it.
    """

    spec_name: str
    columns: Mapping[str, np.ndarray | None] = field(repr=False)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values() if v is not None}
        if len(lengths) != 1:
            raise SpecificationError("columns", "measured columns must share one length")
        missing = set(COLUMNS) - set(self.columns)
        if missing:
            raise SpecificationError("columns", f"missing columns {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.columns["age"])

    def __getitem__(self, column: str) -> np.ndarray | None:
        return self.columns[column]

    def is_measured(self, covariate: str) -> bool:
        return all(self.columns[c] is not UNMEASURED for c in covariate_columns(covariate))

    def design(self, columns) -> np.ndarray:
        """Stack ``columns`` into an ``(n, k)`` float matrix."""
        out = np.empty((len(self), len(columns)))
        for j, col in enumerate(columns):
            arr = self.columns[col]
            if arr is UNMEASURED:
                raise SpecificationError(col, f"column is UNMEASURED in cohort {self.spec_name!r}")
            out[:, j] = arr
        return out

    def race(self) -> np.ndarray:
        """Race category per row as strings."""
        labels = np.array(RACE_CATEGORIES)
        return labels[self.columns["race_black"].astype(int) + 2 * self.columns["race_other"].astype(int)]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def sample_population(spec: PopulationSpec, seed, n: int | None = None) -> Cohort:
    """Draw a cohort of ``n`` (default ``spec.n_simulated``) independent rows.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; the result
    is a pure function of ``(spec, seed, n)``.
    """
    spec.validate()
    n = spec.n_simulated if n is None else int(n)
    if n <= 0:
        raise SpecificationError("n_simulated", f"must be positive, got {n}")
    rng = np.random.default_rng(seed)

    cols: dict[str, np.ndarray | None] = {}
    cols["age"] = _frozen(rng.normal(spec.age_mean, spec.age_sd, size=n))
    cols["female"] = _frozen((rng.random(n) < spec.female).astype(np.float64))

    # one categorical draw over (white, black, other)
    u = rng.random(n)
    p_white = 1.0 - spec.race_black - spec.race_other
    is_black = (u >= p_white) & (u < p_white + spec.race_black)
    is_other = u >= p_white + spec.race_black
    if spec.race_other == 0.0:
        is_other[:] = False
    cols["race_black"] = _frozen(is_black.astype(np.float64))
    cols["race_other"] = _frozen(is_other.astype(np.float64))

    for col in ("hispanic",) + CLINICAL:
        p = getattr(spec, col)
        if p is UNMEASURED:
            cols[col] = UNMEASURED
        else:
            cols[col] = _frozen((rng.random(n) < p).astype(np.float64))
    return Cohort(spec.name, cols)
