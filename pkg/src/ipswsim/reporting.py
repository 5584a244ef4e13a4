"""Tabular artifacts: population table, balance files, Monte Carlo outputs, manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import pandas as pd

from . import __version__
from .balance import add_aggregates, balance_table, love_plot_data, population_balance
from .config import config_to_dict
from .montecarlo import DRAW_COLUMNS, MonteCarloResult, StudyConfig
from .population import Cohort, PopulationSpec

DASH = "—"

_TABLE_ROWS = (
    ("Sex (female)", "female"),
    ("Race: White", None),
    ("Race: Black", "race_black"),
    ("Race: Other", "race_other"),
    ("Hispanic Ethnicity", "hispanic"),
    ("Hypertension", "hypertension"),
    ("Heart failure", "heart_failure"),
    ("Coronary artery disease", "cad"),
    ("Peripheral artery disease", "pad"),
)


def _count_cell(x) -> str:
    if x is None:
        return DASH
    n = len(x)
    count = int(round(float(x.sum())))
    return f"{count} ({100.0 * count / n:.1f}%)"


def emit_population_table(specs: Sequence[PopulationSpec], cohorts: Mapping[str, Cohort]) -> pd.DataFrame:
    """Realized baseline characteristics: one row per characteristic, one column per population.

    Age is rendered as mean (SD); binaries as count (percent); UNMEASURED as a dash.
    """
    cols: dict[str, list[str]] = {}
    for spec in specs:
        c = cohorts[spec.name]
        age = c["age"]
        cells = [f"{len(c)}", f"{age.mean():.1f} ({age.std(ddof=1):.1f})"]
        for _, col in _TABLE_ROWS:
            if col is None:
                white = 1.0 - c["race_black"] - c["race_other"]
                cells.append(_count_cell(white))
            else:
                cells.append(_count_cell(c[col]))
        cols[spec.name] = cells
    index = ["N (simulated)", "Age (years)"] + [label for label, _ in _TABLE_ROWS]
    df = pd.DataFrame(cols, index=index)
    df.index.name = "characteristic"
    return df.reset_index()


def study_balance(config: StudyConfig):
    report = population_balance(config.populations, config.reference)
    return add_aggregates(report, config.scenarios, config.weightings)


def render_summary(result: MonteCarloResult) -> str:
    """Human-readable blocks at three decimals, one per (scenario, scale)."""
    lines = []
    s = result.summary
    for (scen, k), block in s.groupby(["scenario", "effect_scale"], sort=False):
        lines.append(f"{scen}  (effect scale {k:g}x)")
        lines.append(f"{'weighting':<10} {'target':<18} {'PATE mean':>10} {'PATE SD':>8} {'bias mean':>10} {'bias SD':>8}")
        for row in block.itertuples():
            model = "" if row.weighting_model == "none" else row.weighting_model
            lines.append(f"{model:<10} {row.target:<18} {row.pate_mean:>10.3f} {row.pate_sd:>8.3f} "
                         f"{row.bias_mean:>10.3f} {row.bias_sd:>8.3f}")
        lines.append("")
    return "\n".join(lines)


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    df.to_csv(path, index=False, lineterminator="\n")
    return path


def write_balance(config: StudyConfig, out: Path) -> list[Path]:
    report = study_balance(config)
    return [
        write_csv(balance_table(report), out / "balance_table.csv"),
        write_csv(love_plot_data(report), out / "love_plot_data.csv"),
    ]


def write_monte_carlo(result: MonteCarloResult, out: Path, diagnostics: bool = False) -> list[Path]:
    paths = [
        write_csv(result.summary, out / "summary_table.csv"),
        write_csv(result.draws[DRAW_COLUMNS], out / "bias_draws.csv"),
        write_csv(pd.DataFrame([vars(s) for s in result.skips],
                               columns=["weighting_model", "target", "reason"]), out / "skip_log.csv"),
    ]
    report = out / "summary_report.txt"
    report.write_text(render_summary(result))
    paths.append(report)
    if diagnostics:
        paths.append(write_csv(result.diagnostics, out / "diagnostics.csv"))
    return paths


def write_manifest(config: StudyConfig, files: Sequence[Path], out: Path, started: str, finished: str,
                   warnings: Sequence[str] = ()) -> Path:
    manifest = {
        "tool": "ipswsim",
        "version": __version__,
        "master_seed": int(config.master_seed),
        "started": started,
        "finished": finished,
        "config": config_to_dict(config),
        "warnings": list(warnings),
        "files": {p.name: sha256_file(p) for p in sorted(files, key=lambda p: p.name)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
