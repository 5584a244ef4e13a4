"""Acceptance criteria 1-11, each at its stated tolerance.

One 1000-replication study at the published population sizes covers every
Monte Carlo criterion: all four scenarios at every sweep scale share the same
sampled populations and selection fits. ``IPSWSIM_ACCEPT_REPS`` lowers the
replication count for quick local iterations; the criteria are defined at 1000.

Run directly (``python tests/test_acceptance.py``) or via pytest; either way a
PASS/FAIL line per criterion is printed at the end of the session.
"""

import os
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from ipswsim.balance import BalanceReport, add_aggregates, aggregate_smd, population_balance
from ipswsim.cli import EXIT_OK, main
from ipswsim.montecarlo import DEFAULT_SWEEP, SATE_KEY, default_config, default_workers, run_monte_carlo
from ipswsim.outcomes import expected_sate, scenario_catalog
from ipswsim.population import COLUMNS, expand_covariates
from ipswsim.reporting import sha256_file
from ipswsim.selection import irls_logistic, weighting_catalog

from test_balance import PUBLISHED, PUBLISHED_AGGREGATES

REPS = int(os.environ.get("IPSWSIM_ACCEPT_REPS", "1000"))
TARGET_WORKERS = 8
MODIFIER_SCENARIOS = ("all_modifiers", "four_modifiers", "one_modifier")

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def record(criteria_log):
    def _record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        criteria_log.append(line)
        print(line)
        assert ok, line
    return _record


@pytest.fixture(scope="module")
def study():
    config = default_config(replications=REPS, effect_scales=DEFAULT_SWEEP)
    workers = default_workers()
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run_monte_carlo(config, workers=workers)
    return config, result, time.perf_counter() - t0, workers


@pytest.fixture(scope="module")
def report(specs):
    r = population_balance(list(specs.values()), specs["pcornet_disease"])
    return add_aggregates(r, scenario_catalog().values(), weighting_catalog().values())


def test_criterion_01_balance_reproduction(specs, record):
    t0 = time.perf_counter()
    r = population_balance(list(specs.values()), specs["pcornet_disease"])
    r = add_aggregates(r, scenario_catalog().values(), weighting_catalog().values())
    elapsed = time.perf_counter() - t0
    cell_err = [abs(r.smd[pop][col] - v) for pop, cells in PUBLISHED.items()
                for col, v in zip(COLUMNS, cells) if v is not None]
    agg_err = [abs(r.aggregates[key][pop] - v) for key, row in PUBLISHED_AGGREGATES.items()
               for pop, v in row.items()]
    ok = max(cell_err) <= 0.02 and max(agg_err) <= 0.03 and elapsed < 1.0
    record(1, ok, f"{len(cell_err)} cells max err {max(cell_err):.4f} (<=0.02); "
                  f"{len(agg_err)} aggregates max err {max(agg_err):.4f} (<=0.03); {elapsed * 1e3:.1f} ms")


def test_criterion_02_aggregate_sum_identity(report, record):
    worst = 0.0
    for sc in scenario_catalog().values():
        for w in weighting_catalog().values():
            cols = expand_covariates([c for c in w.covariates if c in sc.modifiers])
            for pop in report.populations:
                total = sum(report.smd[pop][c] or 0.0 for c in cols)
                worst = max(worst, abs(report.aggregates[f"{sc.name}:{w.name}"][pop] - total))
    # the published aggregate rows are sums of the published (realized) cells
    published = BalanceReport("pcornet_disease", {p: dict(zip(COLUMNS, v)) for p, v in PUBLISHED.items()})
    spots = {
        ("trial", "all"): (aggregate_smd(published, scenario_catalog()["all_modifiers"].modifiers)["trial"], -1.044),
        ("trial", "four"): (aggregate_smd(published, scenario_catalog()["four_modifiers"].modifiers)["trial"], -0.475),
        ("registry", "all"): (aggregate_smd(published, scenario_catalog()["all_modifiers"].modifiers)["registry"], 0.356),
    }
    spot_ok = all(round(got, 3) == want for got, want in spots.values())
    ok = worst <= 1e-12 and spot_ok
    record(2, ok, f"max |aggregate - sum| = {worst:.1e}; spot values "
                  + ", ".join(f"{got:.3f}" for got, _ in spots.values()) + " vs -1.044, -0.475, 0.356")


def test_criterion_03_no_modifier_null(study, record):
    config, result, elapsed, workers = study
    b = result.block("no_modifiers", 1.0)
    max_bias = b.bias_mean.abs().max()
    max_pate = (b.pate_mean - 5.4).abs().max()
    # one pass evaluates every scenario and scale; a single-scenario run costs the same fits
    projected = elapsed * workers / TARGET_WORKERS
    ok = max_bias <= 0.05 and max_pate <= 0.05 and projected < 180
    record(3, ok, f"{config.replications} reps: max |bias| {max_bias:.2e}, max |PATE-5.4| {max_pate:.2e}; "
                  f"{elapsed:.0f}s on {workers} worker(s) -> {projected:.0f}s projected on {TARGET_WORKERS}")


def test_criterion_04_sate_means(study, specs, record):
    _, result, _, _ = study
    cat = scenario_catalog()
    got, errs = {}, []
    for name in ("no_modifiers", "one_modifier", "four_modifiers"):
        mean = result.cell(name, *SATE_KEY).pate_mean
        oracle = expected_sate(specs["trial"], cat[name])
        got[name] = (mean, oracle)
        errs.append(abs(mean - oracle))
    ok = max(errs) <= 0.03
    record(4, ok, "; ".join(f"{n} {m:.3f} vs {o:.3f}" for n, (m, o) in got.items()) + " (+-0.03)")


def test_criterion_05_reference_exact(study, record):
    _, result, _, _ = study
    s = result.summary
    ref = s[(s.weighting_model == "dem_clin") & (s.target == "pcornet_disease")]
    ok = len(ref) == 4 * len(DEFAULT_SWEEP) and (ref.bias_mean == 0).all() and (ref.bias_sd == 0).all()
    record(5, ok, f"{len(ref)} scenario/scale blocks with bias mean and SD exactly 0")


def test_criterion_06_sign_structure(study, record):
    config, result, _, _ = study
    parts, ok = [], True
    for name in MODIFIER_SCENARIOS:
        reg = result.cell(name, "dem_clin", "registry")
        ovr = result.cell(name, "dem_clin", "pcornet_overall")
        se_r = reg.bias_sd / np.sqrt(config.replications)
        se_o = ovr.bias_sd / np.sqrt(config.replications)
        ok &= reg.bias_mean > 3 * se_r and ovr.bias_mean < -3 * se_o
        parts.append(f"{name} {reg.bias_mean:+.3f}/{ovr.bias_mean:+.3f}")
    record(6, bool(ok), "registry/overall bias: " + "; ".join(parts))


def test_criterion_07_one_modifier_demographic_null(study, record):
    _, result, _, _ = study
    b = result.block("one_modifier", 1.0)
    dem = b[b.weighting_model == "dem_only"]
    worst = dem.bias_mean.abs().max()
    record(7, len(dem) == 4 and worst <= 0.08,
           f"dem_only |bias| over {len(dem)} targets: max {worst:.3f} (<=0.08)")


def test_criterion_08_divergence_bias_ordering(study, report, record):
    _, result, _, _ = study
    parts, ok = [], True
    for name in MODIFIER_SCENARIOS:
        b = result.block(name, 1.0)
        dem = b[b.weighting_model == "dem_clin"].set_index("target")
        agg = report.aggregates[f"{name}:dem_clin"]
        agg = {**agg, "pcornet_disease": 0.0}
        targets = list(dem.index)
        by_bias = sorted(targets, key=lambda t: abs(dem.loc[t, "bias_mean"]))
        by_smd = sorted(targets, key=lambda t: abs(agg[t]))
        ok &= by_bias == by_smd
        parts.append(f"{name}: {' < '.join(by_bias)}")
    record(8, bool(ok), "; ".join(parts))


def test_criterion_09_scale_linearity(study, record):
    _, result, _, _ = study
    s = result.summary
    worst, n_lines, n_zero = 0.0, 0, 0
    for _, g in s.groupby(["scenario", "weighting_model", "target"], sort=False):
        g = g.sort_values("effect_scale")
        k, y = g.effect_scale.to_numpy(), g.bias_mean.to_numpy()
        assert len(k) == len(DEFAULT_SWEEP)
        n_lines += 1
        scale = np.abs(y).max()
        if scale < 1e-9:
            n_zero += 1  # identically-zero bias is trivially linear
            continue
        coef = np.polyfit(k, y, 1)
        worst = max(worst, np.abs(y - np.polyval(coef, k)).max() / scale)
    record(9, worst < 0.05, f"{n_lines} estimator lines ({n_zero} identically 0): max relative residual {worst:.1e}")


def test_criterion_10_solver_correctness(study, specs, record):
    _, result, _, _ = study
    diag = result.diagnostics
    first100 = diag[diag.rep < 100]
    score = first100.max_abs_score.max()
    conv = bool(first100.converged.all())

    rng = np.random.default_rng(2024)
    n = 20000
    X = np.column_stack([rng.normal(0, 1, n), rng.random(n) < 0.3, rng.random(n) < 0.6]).astype(float)
    true = np.array([-1.5, 0.7, -0.4, 1.1])
    y = (rng.random(n) < expit(true[0] + X @ true[1:])).astype(float)
    fit = irls_logistic(X, y)
    Z = np.column_stack([np.ones(n), X])
    p = expit(Z @ fit.coefficients)
    se = np.sqrt(np.diag(np.linalg.inv(Z.T @ (Z * (p * (1 - p))[:, None]))))
    z = np.abs(fit.coefficients - true) / se

    ref = diag[(diag.weighting_model == "dem_clin") & (diag.target == "pcornet_disease")]
    wsmd = ref.max_abs_weighted_smd.max()
    ok = conv and score < 1e-6 and np.all(z < 3) and wsmd < 0.1
    record(10, ok, f"{len(first100)} fits max |score| {score:.1e}; synthetic max |z| {z.max():.2f}; "
                   f"trial->reference dem_clin max weighted |SMD| {wsmd:.3f} over {len(ref)} reps")


def test_criterion_11_determinism(tmp_path, record):
    def run(workers):
        out = tmp_path / f"w{workers}"
        assert main(["run", "--out", str(out), "--reps", "4", "--seed", "99",
                     "--workers", str(workers), "--diagnostics"]) == EXIT_OK
        return {p.name: sha256_file(p) for p in sorted(out.iterdir()) if p.name != "manifest.json"}

    a, b, c = run(1), run(1), run(2)
    ok = a == b == c and len(a) == 9
    record(11, ok, f"{len(a)} output digests identical across reruns and 1 vs 2 workers")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider", *os.sys.argv[1:]]))
