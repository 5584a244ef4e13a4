"""Command-line entry point.

    ipswsim run     --out DIR [--config FILE] [--reps N] [--seed S] [--workers W]
                    [--scenario NAME ...] [--scale K ...] [--diagnostics]
    ipswsim sweep   same flags; scales default to 0.5 1.0 1.5 2.0 2.5
    ipswsim balance --out DIR [--config FILE]
    ipswsim config  [--config FILE]      print the fully resolved config

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.
``IPSWSIM_WORKERS`` sets the default worker count.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import tempfile
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .config import dump_config, parse_config
from .errors import ConfigError, IpswSimError, SpecificationError
from .montecarlo import DEFAULT_SWEEP, default_workers, effect_scale_sweep, run_monte_carlo, sample_cohorts
from .reporting import (
    emit_population_table,
    write_balance,
    write_csv,
    write_manifest,
    write_monte_carlo,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("ipswsim")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipswsim", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, help="YAML study configuration (default: built-in study)")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    for name in ("run", "sweep"):
        p = sub.add_parser(name, help="Monte Carlo study" if name == "run" else "effect-scale sweep")
        common(p)
        p.add_argument("--reps", type=int, help="override the replication count")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="worker processes (default: $IPSWSIM_WORKERS or 1)")
        p.add_argument("--scenario", action="append", help="restrict to this scenario (repeatable)")
        p.add_argument("--scale", type=float, action="append", help="effect scale (repeatable)")
        p.add_argument("--diagnostics", action="store_true", help="write per-fit diagnostics.csv")
    common(sub.add_parser("balance", help="balance table and Love-plot data only"))
    common(sub.add_parser("config", help="print the resolved configuration"), out=False)
    return parser


def _resolve(args):
    config = parse_config(args.config)
    changes = {}
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ConfigError("--reps", f"must be >= 1, got {args.reps}")
        changes["replications"] = args.reps
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed", f"must be non-negative, got {args.seed}")
        changes["master_seed"] = args.seed
    if getattr(args, "scenario", None):
        known = {s.name: s for s in config.scenarios}
        for name in args.scenario:
            if name not in known:
                raise ConfigError("--scenario", f"unknown scenario {name!r}")
        changes["scenarios"] = tuple(known[n] for n in known if n in args.scenario)
    if getattr(args, "scale", None):
        for k in args.scale:
            if not k > 0:
                raise ConfigError("--scale", f"must be positive, got {k}")
        changes["effect_scales"] = tuple(args.scale)
    return replace(config, **changes) if changes else config


def _progress(done: int, total: int) -> None:
    step = max(1, total // 10)
    if done % step == 0 or done == total:
        log.info("replication %d/%d", done, total)


def _run(args) -> None:
    config = _resolve(args)
    if args.command == "sweep" and not args.scale:
        config = replace(config, effect_scales=DEFAULT_SWEEP)
    workers = args.workers if args.workers is not None else default_workers()
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".incomplete-", dir=out))
    started = _now()
    try:
        files = []
        cohorts = sample_cohorts(config, 0)
        files.append(write_csv(emit_population_table(config.populations, cohorts), tmp / "population_table.csv"))
        files += write_balance(config, tmp)
        t0 = time.perf_counter()
        if args.command == "sweep":
            result = effect_scale_sweep(config, config.effect_scales, workers=workers, progress=_progress)
        else:
            result = run_monte_carlo(config, workers=workers, progress=_progress)
        log.info("monte carlo finished in %.1fs", time.perf_counter() - t0)
        files += write_monte_carlo(result, tmp, diagnostics=args.diagnostics)
        cfg_path = tmp / "resolved_config.yaml"
        cfg_path.write_text(dump_config(config))
        files.append(cfg_path)
        manifest = write_manifest(config, files, tmp, started, _now(), result.warnings)
        for path in files + [manifest]:
            shutil.move(str(path), out / path.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _balance(args) -> None:
    config = _resolve(args)
    args.out.mkdir(parents=True, exist_ok=True)
    for path in write_balance(config, args.out):
        log.info("wrote %s", path)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command in ("run", "sweep"):
            _run(args)
        elif args.command == "balance":
            _balance(args)
        else:
            sys.stdout.write(dump_config(_resolve(args)))
    except (ConfigError, SpecificationError) as e:
        print(f"ipswsim: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IpswSimError as e:
        print(f"ipswsim: numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"ipswsim: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
