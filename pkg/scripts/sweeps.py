"""Sensitivity sweeps over epsilon, sigma multiplier, provision delay and fleet count.

The first three are rolling runs on the bundled fixture (independent, so they
run in parallel with ``--jobs``); the fleet-count sweep is closed form. Results
go through ``emit_report`` into ``--out``.

    python scripts/sweeps.py --hours 24 --jobs 2 --out sweeps
"""

import argparse
import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor

from v2gfr.drcc import (DrccConfig, FleetUncertainty, joint_improvement, max_joint_schedulable,
                        total_individual_limit)
from v2gfr.scheduler import default_config, rolling_simulate
from v2gfr.validation import emit_report, run_summary

EPSILONS = (0.002, 0.01, 0.05, 0.2)
SIGMA_MULTIPLIERS = (0.0, 0.5, 1.0, 2.0)
DELAYS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def _run(job):
    kind, value, hours = job
    cfg = default_config()
    if kind == "epsilon":
        cfg = cfg.with_drcc(epsilon=value)
    elif kind == "sigma_multiplier":
        cfg = cfg.replace(sigma_multiplier=value)
    elif kind == "delay":
        cfg = cfg.replace(frequency=dataclasses.replace(cfg.frequency, t_del=value))
    res = rolling_simulate(cfg, hours)
    return kind, value, run_summary(res), cfg.config_hash()


def fleet_count_sweep(max_fleets=6, config=DrccConfig()):
    """Joint over individual response when a population is split into equal fleets."""
    ref = FleetUncertainty(g=1e-5, n0=5000, mu=-500, sigma=200)
    rows = []
    for m in range(1, max_fleets + 1):
        fleets = [ref] * m
        joint, indiv = max_joint_schedulable(fleets, config), total_individual_limit(fleets, config)
        rows.append({"fleets": m, "joint_gw": joint, "individual_gw": indiv,
                     "increase_pct": 100.0 * joint_improvement(fleets, config) / indiv})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hours", type=int, default=24)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="sweeps")
    ap.add_argument("--only", choices=["epsilon", "sigma_multiplier", "delay", "fleets"],
                    action="append", help="restrict to some sweeps (repeatable)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    want = set(args.only or ["epsilon", "sigma_multiplier", "delay", "fleets"])
    jobs = [(k, v, args.hours) for k, vals in (("epsilon", EPSILONS),
                                               ("sigma_multiplier", SIGMA_MULTIPLIERS),
                                               ("delay", DELAYS)) if k in want for v in vals]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run, jobs))
    else:
        results = [_run(j) for j in jobs]
    sweeps = {}
    for kind, value, summary, _ in results:
        sweeps.setdefault(kind, []).append({kind: value, **summary})
    if "fleets" in want:
        sweeps["fleets"] = fleet_count_sweep()
    files = emit_report(args.out, default_config().config_hash(), sweeps=sweeps)
    for rows in sweeps.values():
        for r in rows:
            print(r)
    print("wrote", ", ".join(str(f) for f in files))


if __name__ == "__main__":
    main()
