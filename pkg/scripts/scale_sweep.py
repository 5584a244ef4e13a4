"""Bias as a function of the effect scale k for every estimator.

    python scripts/scale_sweep.py --reps 200 --scenario all_modifiers

Prints mean bias per scale and the least-squares slope of bias on k.
"""

import argparse
import warnings

import numpy as np

from ipswsim.montecarlo import DEFAULT_SWEEP, default_config, effect_scale_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--scenario", action="append")
    ap.add_argument("--scale", type=float, action="append")
    args = ap.parse_args()

    config = default_config(replications=args.reps)
    if args.scenario:
        config = default_config(replications=args.reps,
                                scenarios=tuple(s for s in config.scenarios if s.name in args.scenario))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = effect_scale_sweep(config, tuple(args.scale or DEFAULT_SWEEP), workers=args.workers)

    wide = result.summary.pivot_table(index=["scenario", "weighting_model", "target"],
                                      columns="effect_scale", values="bias_mean", sort=False)
    k = wide.columns.to_numpy(dtype=float)
    wide["slope"] = [np.polyfit(k, row, 1)[0] for row in wide[list(wide.columns)].to_numpy()]
    print(wide.round(3).to_string())


if __name__ == "__main__":
    main()
