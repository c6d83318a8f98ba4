"""Hourly nadir security of week-long runs under several ΔN samplers.

Either simulates the four reference runs or reads detail files written by
``v2gfr simulate`` (``hours.jsonl``).

    python scripts/hns_week.py --hours 168
    python scripts/hns_week.py --detail run/hours.jsonl --sampler two_point
"""

import argparse
import logging

from v2gfr.experiments import hns_records, hns_stats, run_case
from v2gfr.scheduler import SimulationResult, read_detail

RUNS = {"gaussian": ("joint", "gaussian", ("gaussian",)),
        "dro": ("joint", "dro", ("gaussian", "shifted_exponential", "two_point")),
        "unimodal": ("joint", "unimodal", ("gaussian", "shifted_exponential", "uniform")),
        "deterministic": ("deterministic", "gaussian", ("gaussian",))}


def show(name, result, samplers, n, seed):
    for s in samplers:
        recs = hns_records(result, s, n, seed)
        allh, tight = hns_stats(recs), hns_stats(recs, tight_only=True)
        print(f"{name:>14} {s:>20}  hours {allh['hours']:3d} min {allh['min']:.5f}  "
              f"tight {tight['hours']:3d} median {tight['median']:.5f} "
              f"[{tight['min']:.5f}, {tight['max']:.5f}]")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hours", type=int, default=168)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--detail", help="hours.jsonl of an existing run")
    ap.add_argument("--sampler", action="append", help="with --detail (repeatable)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.detail:
        header, recs = read_detail(args.detail)
        res = SimulationResult(recs, header.get("config_hash", ""), header.get("mode", ""))
        show(args.detail, res, args.sampler or ["gaussian"], args.samples, args.seed)
        return
    for name, (mode, amb, samplers) in RUNS.items():
        show(name, run_case(args.hours, mode=mode, ambiguity=amb), samplers, args.samples,
             args.seed)


if __name__ == "__main__":
    main()
