"""SATE / IPSW PATE estimation and the Monte Carlo replication engine.

Each replication draws every population afresh, fits one selection model per
feasible (weighting model, target) pair, and then evaluates every requested
(scenario, effect scale) combination on those same draws. Populations and
fits do not depend on the outcome model, so this common-random-numbers layout
costs one set of fits per replication regardless of how many scenarios and
scales are requested.

Bias is always taken within a replication against that replication's
reference estimate, so the reference estimator's bias is exactly zero.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from .balance import weighted_balance
from .errors import ConfigError, NumericalError
from .outcomes import PotentialOutcomes, ScenarioSpec, generate_outcomes, scenario_catalog
from .population import PopulationSpec, builtin_specs, sample_population
from .selection import WeightingSpec, fit_selection_model, weighting_catalog

log = logging.getLogger(__name__)

DEFAULT_REPLICATIONS = 1000
DEFAULT_SEED = 20240611
DEFAULT_SWEEP = (0.5, 1.0, 1.5, 2.0, 2.5)

SUMMARY_COLUMNS = [
    "scenario", "effect_scale", "weighting_model", "target",
    "pate_mean", "pate_sd", "bias_mean", "bias_sd",
]
DRAW_COLUMNS = ["scenario", "effect_scale", "weighting_model", "target", "rep", "bias"]


class EstimatorKey(NamedTuple):
    weighting_model: str
    target: str


SATE_KEY = EstimatorKey("none", "SATE")


@dataclass(frozen=True)
class SkipRecord:
    weighting_model: str
    target: str
    reason: str


def sate(outcomes: PotentialOutcomes) -> float:
    te = np.asarray(outcomes.te)
    if te.size == 0:
        raise NumericalError("SATE of an empty cohort")
    return float(te.mean())


def pate_ipsw(weights, outcomes: PotentialOutcomes) -> float:
    w = np.asarray(weights, dtype=np.float64)
    te = np.asarray(outcomes.te)
    if w.shape != te.shape:
        raise NumericalError(f"weights {w.shape} do not match outcomes {te.shape}")
    return float(np.dot(w, te) / w.sum())


@dataclass(frozen=True)
class StudyConfig:
    populations: tuple[PopulationSpec, ...]
    scenarios: tuple[ScenarioSpec, ...]
    weightings: tuple[WeightingSpec, ...]
    replications: int = DEFAULT_REPLICATIONS
    master_seed: int = DEFAULT_SEED
    effect_scales: tuple[float, ...] = (1.0,)
    reference_weighting: str = "dem_clin"
    max_weight: float | None = None
    excluded_pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for name in ("populations", "scenarios", "weightings", "effect_scales", "excluded_pairs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if isinstance(self.replications, bool) or not isinstance(self.replications, (int, np.integer)) \
                or self.replications < 1:
            raise ConfigError("replications", f"must be an integer >= 1, got {self.replications!r}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, (int, np.integer)) \
                or self.master_seed < 0:
            raise ConfigError("master_seed", f"must be a non-negative integer, got {self.master_seed!r}")
        roles = [p.role for p in self.populations]
        for role in ("analytic_sample", "reference"):
            if roles.count(role) != 1:
                raise ConfigError("populations", f"exactly one population must have role {role!r}")
        for kind in ("populations", "scenarios", "weightings"):
            names = [x.name for x in getattr(self, kind)]
            if len(set(names)) != len(names):
                raise ConfigError(kind, "names must be unique")
        if not self.scenarios:
            raise ConfigError("scenarios", "at least one scenario is required")
        if not self.weightings:
            raise ConfigError("weightings", "at least one weighting model is required")
        if not self.effect_scales:
            raise ConfigError("effect_scales", "at least one scale is required")
        for k in self.effect_scales:
            if not (math.isfinite(k) and k >= 0):
                raise ConfigError("effect_scales", f"scales must be non-negative, got {k}")
        if self.max_weight is not None and not self.max_weight > 0:
            raise ConfigError("max_weight", f"must be positive, got {self.max_weight}")
        ref_w = {w.name: w for w in self.weightings}.get(self.reference_weighting)
        if ref_w is None:
            raise ConfigError("reference_weighting", f"unknown weighting model {self.reference_weighting!r}")
        if not ref_w.feasible_for(self.reference):
            raise ConfigError("reference_weighting",
                              f"{ref_w.name} uses covariates UNMEASURED in {self.reference.name!r}")
        for w in self.weightings:
            if not w.feasible_for(self.analytic_sample):
                raise ConfigError(f"weightings.{w.name}", "uses covariates UNMEASURED in the analytic sample")
        excl = set(self.excluded_pairs)
        if (self.reference_weighting, self.reference.name) in excl:
            raise ConfigError("excluded_pairs", "the reference estimator cannot be excluded")

    @property
    def analytic_sample(self) -> PopulationSpec:
        return next(p for p in self.populations if p.role == "analytic_sample")

    @property
    def reference(self) -> PopulationSpec:
        return next(p for p in self.populations if p.role == "reference")

    @property
    def targets(self) -> tuple[PopulationSpec, ...]:
        return tuple(p for p in self.populations if p.role != "analytic_sample")

    @property
    def reference_key(self) -> EstimatorKey:
        return EstimatorKey(self.reference_weighting, self.reference.name)

    def pairs(self) -> tuple[list[tuple[WeightingSpec, PopulationSpec]], list[SkipRecord]]:
        """Feasible (weighting model, target) pairs plus a record for every skipped one."""
        feasible, skipped = [], []
        excl = set(self.excluded_pairs)
        for w in self.weightings:
            for t in self.targets:
                if (w.name, t.name) in excl:
                    skipped.append(SkipRecord(w.name, t.name, "excluded by configuration"))
                elif not w.feasible_for(t):
                    missing = [c for c in w.covariates if not t.is_measured(c)]
                    skipped.append(SkipRecord(w.name, t.name, f"UNMEASURED in target: {', '.join(missing)}"))
                else:
                    feasible.append((w, t))
        return feasible, skipped

    def estimator_keys(self) -> list[EstimatorKey]:
        return [SATE_KEY] + [EstimatorKey(w.name, t.name) for w, t in self.pairs()[0]]


def default_config(**overrides) -> StudyConfig:
    cfg = StudyConfig(
        populations=tuple(builtin_specs().values()),
        scenarios=tuple(scenario_catalog().values()),
        weightings=tuple(weighting_catalog().values()),
    )
    return replace(cfg, **overrides) if overrides else cfg


# -- seeding ---------------------------------------------------------------

def _stable_int(*parts) -> int:
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def population_seed(master_seed: int, rep_index: int, population: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, rep_index, _stable_int("population", population)])


def outcome_seed(master_seed: int, scenario: str, effect_scale: float, rep_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [master_seed, rep_index, _stable_int("outcome", scenario, float(effect_scale))]
    )


# -- replications ------------------------------------------------------------

@dataclass
class ReplicationResult:
    rep_index: int
    scenario: str
    effect_scale: float
    estimates: dict[EstimatorKey, float]
    reference_pate: float
    y0_mean: float
    y1_mean: float
    skipped: list[SkipRecord] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list, repr=False)

    @property
    def bias(self) -> dict[EstimatorKey, float]:
        return {k: v - self.reference_pate for k, v in self.estimates.items()}


def sample_cohorts(config: StudyConfig, rep_index: int) -> dict:
    return {
        p.name: sample_population(p, population_seed(config.master_seed, rep_index, p.name))
        for p in config.populations
    }


def _replicate(
    config: StudyConfig,
    rep_index: int,
    combos: Sequence[tuple[ScenarioSpec, float]],
) -> list[ReplicationResult]:
    cohorts = sample_cohorts(config, rep_index)
    trial = cohorts[config.analytic_sample.name]
    pairs, skipped = config.pairs()

    weights: dict[EstimatorKey, np.ndarray] = {}
    diagnostics = []
    for w, target in pairs:
        fit = fit_selection_model(trial, cohorts[target.name], w, config.max_weight)
        if not fit.converged:
            log.warning("rep %d: selection model %s -> %s did not converge (%d iterations, score %.3g)",
                        rep_index, w.name, target.name, fit.iterations, fit.max_abs_score)
        weights[EstimatorKey(w.name, target.name)] = fit.weights
        row = {"rep": rep_index, **fit.diagnostics()}
        smds = weighted_balance(trial, fit.weights, target)
        row["max_abs_weighted_smd"] = max(
            abs(smds[c]) for c in w.columns if smds[c] is not None
        )
        diagnostics.append(row)

    results = []
    for scenario, k in combos:
        sc = scenario.scaled(k)
        po = generate_outcomes(trial, sc, outcome_seed(config.master_seed, sc.name, k, rep_index),
                               anchor=config.analytic_sample)
        estimates = {SATE_KEY: sate(po)}
        for key, w in weights.items():
            estimates[key] = pate_ipsw(w, po)
        results.append(ReplicationResult(
            rep_index=rep_index,
            scenario=sc.name,
            effect_scale=float(k),
            estimates=estimates,
            reference_pate=estimates[config.reference_key],
            y0_mean=float(po.y0.mean()),
            y1_mean=float(po.y1.mean()),
            skipped=list(skipped),
            diagnostics=diagnostics,
        ))
    return results


def run_replication(config: StudyConfig, scenario: ScenarioSpec | str, effect_scale: float,
                    rep_index: int) -> ReplicationResult:
    if isinstance(scenario, str):
        scenario = {s.name: s for s in config.scenarios}[scenario]
    with threadpool_limits(1):
        return _replicate(config, rep_index, [(scenario, effect_scale)])[0]


def _combos(config: StudyConfig) -> list[tuple[ScenarioSpec, float]]:
    return [(sc, float(k)) for sc in config.scenarios for k in config.effect_scales]


def _worker_init():
    threadpool_limits(1)


def _task(args) -> list[ReplicationResult]:
    config, rep_index = args
    return _replicate(config, rep_index, _combos(config))


@dataclass
class MonteCarloResult:
    summary: pd.DataFrame
    draws: pd.DataFrame
    skips: list[SkipRecord]
    diagnostics: pd.DataFrame
    warnings: list[str] = field(default_factory=list)
    outcome_means: pd.DataFrame | None = None

    def block(self, scenario: str, effect_scale: float = 1.0) -> pd.DataFrame:
        s = self.summary
        return s[(s.scenario == scenario) & (s.effect_scale == effect_scale)].reset_index(drop=True)

    def cell(self, scenario: str, weighting_model: str, target: str, effect_scale: float = 1.0) -> pd.Series:
        b = self.block(scenario, effect_scale)
        hit = b[(b.weighting_model == weighting_model) & (b.target == target)]
        if len(hit) != 1:
            raise KeyError((scenario, weighting_model, target, effect_scale))
        return hit.iloc[0]


def default_workers() -> int:
    import os

    env = os.environ.get("IPSWSIM_WORKERS")
    return int(env) if env else 1


def run_monte_carlo(
    config: StudyConfig,
    workers: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> MonteCarloResult:
    """Run all replications and aggregate them in rep-index order."""
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers", f"must be >= 1, got {workers}")
    reps = range(config.replications)
    per_rep: list[list[ReplicationResult]] = []
    total = config.replications

    if workers == 1:
        with threadpool_limits(1):
            for i in reps:
                per_rep.append(_replicate(config, i, _combos(config)))
                if progress:
                    progress(i + 1, total)
    else:
        chunk = max(1, min(16, total // (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
            for i, res in enumerate(pool.map(_task, ((config, r) for r in reps), chunksize=chunk)):
                per_rep.append(res)
                if progress:
                    progress(i + 1, total)
    return aggregate(config, per_rep)


def aggregate(config: StudyConfig, per_rep: list[list[ReplicationResult]]) -> MonteCarloResult:
    keys = config.estimator_keys()
    draw_rows = []
    outcome_rows = []
    for results in sorted(per_rep, key=lambda rs: rs[0].rep_index):
        for r in results:
            for key in keys:
                draw_rows.append((r.scenario, r.effect_scale, key.weighting_model, key.target,
                                  r.rep_index, r.estimates[key], r.estimates[key] - r.reference_pate))
            outcome_rows.append((r.scenario, r.effect_scale, r.rep_index, r.y0_mean, r.y1_mean))
    draws = pd.DataFrame(draw_rows, columns=DRAW_COLUMNS[:5] + ["estimate", "bias"])

    notes = []
    if config.replications == 1:
        notes.append("replications = 1: standard deviations reported as 0")
    summary = summarize(draws)

    diag = pd.DataFrame([row for results in per_rep for row in results[0].diagnostics])
    if len(diag):
        diag = diag.sort_values(["rep"], kind="stable").reset_index(drop=True)
        n_bad = int((~diag["converged"]).sum())
        if n_bad:
            notes.append(f"{n_bad} selection fits did not converge")
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    _, skips = config.pairs()
    outcome_means = pd.DataFrame(outcome_rows, columns=["scenario", "effect_scale", "rep", "y0_mean", "y1_mean"])
    return MonteCarloResult(summary, draws, skips, diag, notes, outcome_means)


def summarize(draws: pd.DataFrame) -> pd.DataFrame:
    keys = ["scenario", "effect_scale", "weighting_model", "target"]
    g = draws.groupby(keys, sort=False)
    out = g.agg(
        pate_mean=("estimate", "mean"),
        pate_sd=("estimate", "std"),
        bias_mean=("bias", "mean"),
        bias_sd=("bias", "std"),
    ).reset_index()
    out[["pate_sd", "bias_sd"]] = out[["pate_sd", "bias_sd"]].fillna(0.0)
    return out[SUMMARY_COLUMNS]


def effect_scale_sweep(
    config: StudyConfig,
    scales: Sequence[float] = DEFAULT_SWEEP,
    workers: int | None = None,
    allow_zero: bool = False,
    progress=None,
) -> MonteCarloResult:
    """Full Monte Carlo at every scale; ``summary.effect_scale`` keys the blocks."""
    scales = tuple(float(k) for k in scales)
    for k in scales:
        if not (k > 0 or (allow_zero and k == 0)):
            raise ConfigError("effect_scales", f"scales must be positive, got {k}")
    return run_monte_carlo(replace(config, effect_scales=scales), workers=workers, progress=progress)
