"""Command-line front end: ingest, schedule, simulate, validate, report.

Exit codes: 0 success, 1 solver or model failure, 2 usage error.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import validation as val
from .connectivity import (DAY_CLASSES, IngestError, build_distribution_table, build_series,
                           filter_active, fleet_size, ingest_events, write_events)
from .drcc import Mode
from .scheduler import (ConfigError, ModelFailure, SystemConfig, default_config_path,
                        load_config, read_detail, rolling_simulate)
from .scheduler.inputs import load_fleet, load_net_demand
from .scheduler.problem import StaticInfeasible, assemble_problem, extract, solve_horizon
from .scheduler.rolling import fleet_node_inputs, initial_state
from .scheduler.tree import build_tree
from .synthetic import synthetic_events

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
LOG_FILE = "operation_log.csv"
DETAIL_FILE = "hours.jsonl"

log = logging.getLogger("v2gfr")


class ModelError(click.ClickException):
    exit_code = 1


def _usage(msg: str):
    raise click.UsageError(msg)


def _prepare_out(out: Path, force: bool, names) -> None:
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        _usage(f"{out}: {', '.join(existing)} already exist; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def _load(config_path) -> SystemConfig:
    path = Path(config_path) if config_path else default_config_path()
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        _usage(str(exc))
    except (ConfigError, ValueError) as exc:
        _usage(f"invalid config {path}: {exc}")


def _apply_overrides(cfg: SystemConfig, mode, ambiguity, epsilon, seed) -> SystemConfig:
    kw = {}
    if mode:
        kw["mode"] = Mode(mode)
    if ambiguity:
        kw["ambiguity"] = ambiguity
    if epsilon is not None:
        kw["epsilon"] = epsilon
    try:
        if kw:
            cfg = cfg.with_drcc(**kw)
        if seed is not None:
            cfg = cfg.replace(seed=seed)
    except ValueError as exc:
        _usage(str(exc))
    return cfg


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, default=float))


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def main(verbose):
    """Frequency-secured scheduling with aggregated V2G fleets."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


mode_opt = click.option("--mode", type=click.Choice([m.value for m in Mode]), default=None)
amb_opt = click.option("--ambiguity", type=click.Choice(["gaussian", "unimodal", "dro"]), default=None)
eps_opt = click.option("--epsilon", type=float, default=None, help="Violation probability in (0, 1).")
cfg_opt = click.option("--config", "config_path", type=click.Path(), default=None,
                       help="System config (TOML or JSON); bundled fixture if omitted.")


# --- ingest -----------------------------------------------------------------------

@main.command()
@click.argument("events", type=click.Path())
@click.argument("out_dir", type=click.Path())
@click.option("--resolution", type=click.Choice(["5min", "hourly"]), default="5min")
@click.option("--day-class", "day_class", type=click.Choice(["all", *DAY_CLASSES]), default="all")
@click.option("--horizon", type=int, default=24, show_default=True)
@click.option("--n-boot", type=int, default=2000, show_default=True,
              help="Bootstrap size for the dip-test p-value.")
@click.option("--force", is_flag=True)
def ingest(events, out_dir, resolution, day_class, horizon, n_boot, force):
    """Events CSV -> connectivity series and ΔN distributions."""
    if not Path(events).exists():
        _usage(f"events file not found: {events}")
    out = Path(out_dir)
    _prepare_out(out, force, ["series.csv", "distributions.json", "rejects.csv"])
    try:
        rep = ingest_events(events)
    except IngestError as exc:
        _usage(str(exc))
    if not rep.events:
        raise ModelError("no valid events")
    with open(out / "rejects.csv", "w") as fh:
        fh.write("line,reason\n")
        for line, reason in rep.rejects:
            fh.write(f"{line},{reason}\n")
    active = filter_active(rep.events)
    build_series(active, resolution).to_csv(out / "series.csv")
    table = build_distribution_table(build_series(active, "5min"), horizon=horizon,
                                     fleet=fleet_size(rep.events), n_boot=n_boot)
    table.to_json(out / "distributions.json")
    if day_class != "all":
        doc = json.loads((out / "distributions.json").read_text())
        doc["cells"] = [c for c in doc["cells"] if c["day_class"] == day_class]
        doc["day_class"] = day_class
        (out / "distributions.json").write_text(json.dumps(doc))
    click.echo(f"events {len(rep.events)} rejected {rep.n_rejected} active chargers "
               f"{table.fleet_size}")


# --- fixture ----------------------------------------------------------------------

@main.command()
@click.argument("out_dir", type=click.Path())
@cfg_opt
@click.option("--days", type=int, default=60, show_default=True)
@click.option("--force", is_flag=True)
def fixture(out_dir, config_path, days, force):
    """Write the synthetic event datasets and a config that points at them."""
    cfg = _load(config_path)
    out = Path(out_dir)
    names = [f"events_{f.name}.csv" for f in cfg.fleets] + ["system.json"]
    _prepare_out(out, force, names)
    fleets = []
    for f in cfg.fleets:
        evs = synthetic_events(f.kind, f.data_chargers, days, start=cfg.start, seed=f.seed)
        write_events(evs, out / f"events_{f.name}.csv")
        fleets.append(dataclasses.replace(f, events=f"events_{f.name}.csv"))
    doc = cfg.replace(fleets=tuple(fleets),
                      history_days=min(cfg.history_days, max(days - 3, 1))).to_dict()
    _write_json(out / "system.json", doc)
    click.echo(f"wrote {len(cfg.fleets)} event files and system.json to {out}")


# --- schedule ---------------------------------------------------------------------

@main.command()
@cfg_opt
@click.option("--hour", type=int, default=0, show_default=True)
@mode_opt
@amb_opt
@eps_opt
def schedule(config_path, hour, mode, ambiguity, epsilon):
    """One-shot solve of the scenario tree at ``hour`` from the initial state."""
    cfg = _apply_overrides(_load(config_path), mode, ambiguity, epsilon, None)
    if hour < 0:
        _usage("--hour must be >= 0")
    sim_days = int(np.ceil((hour + cfg.horizon + 2) / 24))
    fleets = [load_fleet(f, cfg, sim_days) for f in cfg.fleets]
    net = load_net_demand(cfg, hour + 1)
    fc = net.forecast(hour, cfg.horizon + 1, cfg.quantiles)
    root = {"demand": float(net.demand[hour]), "wind": float(net.wind[hour]),
            "solar": float(net.solar[hour])}
    tree = build_tree(cfg.quantiles, root, {k: v[:, 1:] for k, v in fc.items()})
    try:
        asm = assemble_problem(tree, cfg, initial_state(cfg, fleets),
                               fleet_node_inputs(tree, fleets, hour), cfg.drcc)
    except StaticInfeasible as exc:
        raise ModelError(str(exc))
    sol = solve_horizon(asm, cfg)
    if not sol.ok:
        raise ModelError(f"solve failed: {sol.status} {sol.message}")
    v = extract(asm, sol)[0]
    click.echo(f"objective_gbp {sol.objective * 1000:.6f}")
    click.echo(f"r_ev_gw {v.r_bar:.9f}")
    click.echo(f"inertia_gws {v.h:.6f}")
    click.echo(f"k {cfg.drcc.k:.6f}")
    click.echo(f"nadir_dual {np.array2string(sol.duals.get('n0.nadir', np.array([])), precision=6)}")


# --- simulate ---------------------------------------------------------------------

@main.command()
@cfg_opt
@click.option("--hours", type=int, default=24, show_default=True)
@mode_opt
@amb_opt
@eps_opt
@click.option("--seed", type=int, default=None, help="Net-demand seed override.")
@click.option("--out", "out_dir", type=click.Path(), default="run", show_default=True)
@click.option("--force", is_flag=True)
def simulate(config_path, hours, mode, ambiguity, epsilon, seed, out_dir, force):
    """Rolling-horizon operation; writes the operation log and a manifest."""
    cfg_path = Path(config_path) if config_path else default_config_path()
    cfg = _apply_overrides(_load(config_path), mode, ambiguity, epsilon, seed)
    if hours <= 0:
        _usage("--hours must be > 0")
    out = Path(out_dir)
    _prepare_out(out, force, [LOG_FILE, DETAIL_FILE, MANIFEST, "system.json"])
    try:
        res = rolling_simulate(cfg, hours)
    except ModelFailure as exc:
        raise ModelError(str(exc))
    res.write_log(out / LOG_FILE)
    res.write_detail(out / DETAIL_FILE)
    _write_json(out / "system.json", cfg.to_dict())
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": str(cfg_path.resolve()),
        "config_hash": cfg.config_hash(),
        "data": [f.events for f in cfg.fleets if f.events],
        "seed": cfg.seed,
        "mode": cfg.drcc.mode.value,
        "ambiguity": cfg.drcc.ambiguity.value,
        "epsilon": cfg.drcc.epsilon,
        "f_inv": cfg.drcc.k,
        "hours": hours,
        "output": str(out.resolve()),
        "summary": val.run_summary(res),
    }
    _write_json(out / MANIFEST, manifest)
    click.echo(f"hours {hours} mode {manifest['mode']} total_cost_gbp {res.total_cost:.2f} "
               f"f_inv {cfg.drcc.k:.6f}")


# --- validate ---------------------------------------------------------------------

def _read_run(run_dir: Path):
    for n in (MANIFEST, DETAIL_FILE, "system.json"):
        if not (run_dir / n).exists():
            _usage(f"{run_dir}: missing {n}; run 'simulate' first")
    manifest = json.loads((run_dir / MANIFEST).read_text())
    cfg = load_config(run_dir / "system.json")
    if cfg.config_hash() != manifest["config_hash"]:
        log.warning("%s: config hash differs from manifest", run_dir)
    _, recs = read_detail(run_dir / DETAIL_FILE)
    return manifest, cfg, recs


def _validate_chunk(args):
    recs, sampler, n, seed, samples, params, percentile = args
    out = []
    for i, r in enumerate(recs):
        s = None if samples is None else samples[i]
        h = val.sample_hns(r, sampler, n=n, seed=seed, samples=s)
        chk = None
        if r.r_ev_sched_gw > 0:
            try:
                chk = val.crosscheck_nadir(r, params, percentile, sampler, n=n, seed=seed, samples=s)
            except val.NoArrest:
                chk = None
        out.append((h, chk))
    return out


@main.command()
@click.argument("run_dir", type=click.Path())
@click.option("--samples", "n_samples", type=int, default=val.DEFAULT_SAMPLES, show_default=True)
@click.option("--sampler", type=click.Choice(sorted(val.SAMPLERS)), default="empirical",
              show_default=True)
@click.option("--percentile", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--force", is_flag=True)
def validate(run_dir, n_samples, sampler, percentile, seed, jobs, force):
    """Hourly nadir security and nadir cross-checks of a simulated run."""
    run = Path(run_dir)
    manifest, cfg, recs = _read_run(run)
    if n_samples <= 0 or jobs <= 0:
        _usage("--samples and --jobs must be > 0")
    _prepare_out(run, force, ["hns.csv", "hns_summary.csv", "validation.json"])
    samples = None
    if sampler == "empirical":
        sim_days = int(np.ceil((len(recs) + cfg.horizon + 1) / 24.0))
        fleets = [load_fleet(f, cfg, sim_days) for f in cfg.fleets]
        samples = [[fd.root_samples(r.hour) for fd in fleets] for r in recs]
    chunks = np.array_split(np.arange(len(recs)), jobs)
    tasks = [([recs[i] for i in c], sampler, n_samples, seed,
              None if samples is None else [samples[i] for i in c], cfg.frequency, percentile)
             for c in chunks if len(c)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_validate_chunk, tasks))
    else:
        parts = [_validate_chunk(t) for t in tasks]
    pairs = [p for part in parts for p in part]
    hns = [h for h, _ in pairs]
    checks = [c for _, c in pairs if c is not None]
    val.write_hns_csv(run / "hns.csv", hns, manifest["config_hash"])
    summary = val.hns_summary(hns)
    val._write_rows(run / "hns_summary.csv", summary, manifest["config_hash"])
    doc = {"format_version": FORMAT_VERSION, "config_hash": manifest["config_hash"],
           "sampler": sampler, "n_samples": n_samples, "seed": seed, "percentile": percentile,
           "summary": summary,
           "worst_hns": min((h.hns for h in hns if h.r_bar > 0), default=1.0),
           "nadir": [c.__dict__ for c in checks],
           "nadir_breaches": sum(not c.secure for c in checks)}
    _write_json(run / "validation.json", doc)
    click.echo(f"hours {len(hns)} worst_hns {doc['worst_hns']:.5f} "
               f"nadir_breaches {doc['nadir_breaches']}")


# --- report -----------------------------------------------------------------------

@main.command()
@click.argument("run_dirs", nargs=-1, type=click.Path())
@click.option("--out", "out_file", type=click.Path(), default=None, help="CSV output path.")
@click.option("--force", is_flag=True)
def report(run_dirs, out_file, force):
    """Compare runs: cost, cost change against the Disabled run, worst hns."""
    if not run_dirs:
        _usage("give at least one run directory")
    rows = []
    for d in run_dirs:
        d = Path(d)
        if not (d / MANIFEST).exists():
            _usage(f"{d}: missing {MANIFEST}")
        m = json.loads((d / MANIFEST).read_text())
        v = json.loads((d / "validation.json").read_text()) if (d / "validation.json").exists() else {}
        rows.append({"run": str(d), "mode": m["mode"], "ambiguity": m["ambiguity"],
                     "epsilon": m["epsilon"], "hours": m["hours"],
                     "total_cost": m["summary"]["total_cost"],
                     "wind_curt_gwh": m["summary"]["wind_curt_gwh"],
                     "mean_r_ev_gw": m["summary"]["mean_r_ev_gw"],
                     "worst_hns": v.get("worst_hns", ""),
                     "nadir_breaches": v.get("nadir_breaches", "")})
    base = [r["total_cost"] for r in rows if r["mode"] == "disabled"]
    for r in rows:
        r["cost_delta_vs_disabled"] = (r["total_cost"] - base[0]) if base else ""
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join(str(r[c]) for c in cols) for r in rows]
    if out_file:
        p = Path(out_file)
        if p.exists() and not force:
            _usage(f"{p} exists; pass --force to overwrite")
        p.write_text(f"# format_version {FORMAT_VERSION}\n" + "\n".join(lines) + "\n")
    click.echo("\n".join(lines))


if __name__ == "__main__":  # pragma: no cover
    main()
