"""Rolling-horizon operation: solve, apply the root decisions, realise, repeat."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..drcc import DrccConfig, Mode
from .config import SystemConfig
from .inputs import FleetData, load_fleet, load_net_demand
from .problem import (FleetNodeInput, NodeValues, SystemState, assemble_problem, balance_residual,
                      extract, solve_horizon)
from .tree import build_tree

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LOG_FIELDS = ("hour", "cost", "load_shed_gwh", "wind_curt_gwh", "solar_curt_gwh", "inertia_gws",
              "r_ev_sched_gw", "mode")
TIGHT_TOL = 1e-6


class ModelFailure(RuntimeError):
    """No feasible schedule even with the EV response disabled."""


@dataclass
class HourRecord:
    hour: int
    cost: float             # £
    load_shed_gwh: float
    wind_curt_gwh: float
    solar_curt_gwh: float
    inertia_gws: float
    r_ev_sched_gw: float
    mode: str
    # root detail for validation
    g: List[float] = field(default_factory=list)    # per-EV headroom
    c: List[float] = field(default_factory=list)    # per-EV capacity committed to r_ev
    n0: List[float] = field(default_factory=list)
    mu: List[float] = field(default_factory=list)
    sigma: List[float] = field(default_factory=list)
    k: float = 0.0
    tight: bool = False
    r_nd: float = 0.0
    r_g: float = 0.0
    pl: float = 0.0
    residual_gw: float = 0.0        # realised balance
    plan_residual_gw: float = 0.0   # largest balance residual over the tree nodes
    ev_slack_gwh: float = 0.0
    plan_objective: float = 0.0   # £k, expected cost over the tree
    solve_seconds: float = 0.0

    def log_row(self) -> dict:
        return {k: getattr(self, k) for k in LOG_FIELDS}


@dataclass
class SimulationResult:
    records: List[HourRecord]
    config_hash: str
    mode: str

    @property
    def total_cost(self) -> float:
        return float(sum(r.cost for r in self.records))

    @property
    def max_residual(self) -> float:
        """Largest realised or planned (any tree node) balance residual, GW."""
        return max((max(abs(r.residual_gw), r.plan_residual_gw) for r in self.records),
                   default=0.0)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_log(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write(f"# format_version {FORMAT_VERSION} config_hash {self.config_hash}\n")
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            w.writeheader()
            for r in self.records:
                row = r.log_row()
                for k in LOG_FIELDS[1:-1]:
                    row[k] = f"{row[k]:.9g}"
                w.writerow(row)

    def write_detail(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"format_version": FORMAT_VERSION,
                                 "config_hash": self.config_hash, "mode": self.mode}) + "\n")
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")


def read_log(path) -> List[dict]:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# format_version"):
            raise ValueError(f"{path}: missing format_version header")
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        rec = {k: float(v) for k, v in row.items() if k not in ("hour", "mode")}
        rec["hour"] = int(row["hour"])
        rec["mode"] = row["mode"]
        out.append(rec)
    return out


def read_detail(path) -> tuple:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if "format_version" not in header:
            raise ValueError(f"{path}: missing format_version header")
        recs = [HourRecord(**json.loads(line)) for line in fh if line.strip()]
    return header, recs


# --- state ---------------------------------------------------------------------

def initial_state(config: SystemConfig, fleets: Sequence[FleetData]) -> SystemState:
    e_fleet = []
    for fd in fleets:
        n = fd.n0(0)
        e_fleet.append(n * 0.5 * (fd.cfg.e_in + fd.cfg.e_out))
    return SystemState(
        n_committed=None,
        startups=[],
        storage_energy=np.array([s.capacity * s.initial_soc for s in config.storage]),
        fleet_energy=np.array(e_fleet),
    )


def fleet_node_inputs(tree, fleets: Sequence[FleetData], t: int) -> List[List[FleetNodeInput]]:
    """Per-node fleet inputs.

    Energy accounting follows the hourly flows: a node covering hour ``t+k``
    starts with ``count`` EVs and sees the (dis)connections binned at
    ``t+k+1``. The root uses the realised flows, later nodes the historical
    means, and counts chain forward so departures never exceed the EVs present.
    The chance constraint uses the ΔN moments of each window instead.
    """
    horizon = max(n.offset for n in tree.nodes)
    per_offset = []
    for fd in fleets:
        n0 = fd.n0(t)
        count = n0
        rows = []
        for k in range(horizon + 1):
            mu, sd = fd.moments(t, k)
            n_in, n_out = fd.flows(t + 1) if k == 0 else fd.forecast_flows(t, k + 1)
            n_out = min(n_out, count + n_in)
            rows.append(FleetNodeInput(count, n_in, n_out, n0, mu, sd))
            count = max(count + n_in - n_out, 0.0)
        per_offset.append(rows)
    return [[rows[node.offset] for rows in per_offset] for node in tree.nodes]


def is_tight(values: NodeValues, inputs: Sequence[FleetNodeInput], drcc: DrccConfig) -> bool:
    """Root R̄ sits on the chance-constraint bound of the committed capacities.

    Hours whose committed dispersion ``max(k, 1) ||c sigma||`` is below the
    tolerance are not tight: there the bound is a deterministic row, so
    delivery either always meets R̄ or misses it by rounding.
    """
    if values.r_bar <= TIGHT_TOL or drcc.mode not in (Mode.JOINT, Mode.DETERMINISTIC):
        return False
    tol = TIGHT_TOL * max(1.0, values.r_bar)
    c = np.asarray(values.c, dtype=float)
    a = np.array([x.n0 + max(x.mu, -x.n0) for x in inputs])
    s = c * np.array([x.sigma for x in inputs])
    spread = math.sqrt(float(np.dot(s, s)))
    if max(drcc.k, 1.0) * spread <= tol:
        return False
    margin = drcc.k * spread
    return abs(float(np.dot(c, a)) - margin - values.r_bar) <= tol


# --- realisation -----------------------------------------------------------------

def _rebalance(config: SystemConfig, v: NodeValues, demand: float, wind: float, solar: float,
               e_storage: np.ndarray):
    """Adjust the root dispatch to realised demand and renewables.

    Surplus: reduce load shedding, then curtail wind, then solar.
    Deficit: release curtailment, then storage, then thermal headroom not held
    for reserve, then shed load.
    Returns the adjusted copies ``(p, dis, ch, wc, sc, ls)``.
    """
    p, dis, ch = v.p.copy(), v.s_dis.copy(), v.s_ch.copy()
    wc, sc, ls = min(v.wc, wind), min(v.sc, solar), v.ls
    supply = p.sum() + dis.sum() - ch.sum() + v.ev_power + (wind - wc) + (solar - sc) + ls
    e = supply - demand
    if e > 0:
        step = min(e, ls); ls -= step; e -= step
        step = min(e, wind - wc); wc += step; e -= step
        step = min(e, solar - sc); sc += step; e -= step
        if e > 1e-12:
            # must-run surplus with nothing left to curtail: back off thermal above p_min
            for gi, g in enumerate(config.generators):
                room = p[gi] - g.p_min * v.n[gi]
                step = min(e, max(room, 0.0)); p[gi] -= step; e -= step
    elif e < 0:
        need = -e
        step = min(need, wc); wc -= step; need -= step
        step = min(need, sc); sc -= step; need -= step
        for si, s in enumerate(config.storage):
            if need <= 0:
                break
            step = min(need, ch[si]); ch[si] -= step; need -= step
            reserve = v.s_fast[si] + v.s_slow[si]
            e_room = (e_storage[si] + s.efficiency * ch[si]) * s.efficiency - dis[si]
            room = max(min(s.rate - reserve - dis[si] + ch[si], e_room), 0.0)
            step = min(need, room); dis[si] += step; need -= step
        for gi, g in enumerate(config.generators):
            if need <= 0:
                break
            held = v.r_slow[gi]
            room = max(g.p_max * v.n[gi] - held - p[gi], 0.0)
            step = min(need, room); p[gi] += step; need -= step
        ls += need
    return p, dis, ch, wc, sc, ls


def _hour_cost(config: SystemConfig, v: NodeValues, p: np.ndarray, ls: float) -> float:
    """Operating cost (£) of the implemented hour: generation plus load shedding.

    Fleet state-of-charge slack is a planning penalty only and is logged
    separately as ``ev_slack_gwh``.
    """
    c = 0.0
    for gi, g in enumerate(config.generators):
        c += g.no_load_cost * v.n[gi] + 1000.0 * g.marginal_cost * p[gi] + g.startup_cost * v.su[gi]
    c += 1000.0 * config.c_ls * ls
    return c


# --- driver --------------------------------------------------------------------

def rolling_simulate(config: SystemConfig, hours: int, backend: str = "clarabel",
                     progress: Optional[Callable[[HourRecord], None]] = None,
                     fleets: Optional[Sequence[FleetData]] = None, net=None) -> SimulationResult:
    """Operate the system for ``hours`` hours."""
    if hours <= 0:
        raise ValueError("hours must be > 0")
    sim_days = int(math.ceil((hours + config.horizon + 1) / 24.0))
    if fleets is None:
        fleets = [load_fleet(f, config, sim_days) for f in config.fleets]
    if net is None:
        net = load_net_demand(config, hours)
    state = initial_state(config, fleets)
    records = []
    for t in range(hours):
        rec, state = step_hour(config, state, fleets, net, t, backend)
        records.append(rec)
        if progress is not None:
            progress(rec)
    return SimulationResult(records, config.config_hash(), config.drcc.mode.value)


def step_hour(config: SystemConfig, state: SystemState, fleets: Sequence[FleetData], net, t: int,
              backend: str = "clarabel"):
    q = config.quantiles
    fc = net.forecast(t, config.horizon + 1, q)
    if config.root_forecast == "median":
        med = net.forecast(t, 1, [0.5])
        root = {k: float(med[k][0, 0]) for k in ("demand", "wind", "solar")}
    else:
        # the current hour is observed when its decisions are implemented
        root = {"demand": float(net.demand[t]), "wind": float(net.wind[t]),
                "solar": float(net.solar[t])}
    branches = {k: fc[k][:, 1:] for k in ("demand", "wind", "solar")}
    tree = build_tree(q, root, branches)
    inputs = fleet_node_inputs(tree, fleets, t)

    drcc = config.drcc
    t0 = time.perf_counter()
    asm = assemble_problem(tree, config, state, inputs, drcc)
    sol = solve_horizon(asm, config, backend)
    mode = drcc.mode.value
    if not sol.ok:
        log.warning("hour %d: %s solve failed (%s); falling back to disabled", t, mode, sol.status)
        drcc = DrccConfig(drcc.ambiguity, drcc.epsilon, Mode.DISABLED)
        asm = assemble_problem(tree, config, state, inputs, drcc)
        sol = solve_horizon(asm, config, backend)
        mode = Mode.DISABLED.value
        if not sol.ok:
            raise ModelFailure(f"hour {t}: no feasible schedule ({sol.status}: {sol.message})")
    elapsed = time.perf_counter() - t0
    values = extract(asm, sol)
    v = values[0]
    plan_res = float(np.max(np.abs(balance_residual(tree, values))))
    if plan_res > 1e-5:
        log.warning("hour %d: planned balance residual %.3g GW", t, plan_res)

    demand, wind, solar = float(net.demand[t]), float(net.wind[t]), float(net.solar[t])
    p, dis, ch, wc, sc, ls = _rebalance(config, v, demand, wind, solar, state.storage_energy)
    supply = p.sum() + dis.sum() - ch.sum() + v.ev_power + (wind - wc) + (solar - sc) + ls
    residual = supply - demand

    new = state.copy()
    new.n_committed = v.n.copy()
    new.startups.append(v.su.copy())
    keep = max([int(math.ceil(g.min_up_time)) for g in config.generators] + [1])
    new.startups = new.startups[-keep:]
    eff = np.array([s.efficiency for s in config.storage])
    cap = np.array([s.capacity for s in config.storage])
    new.storage_energy = np.clip(state.storage_energy + eff * ch - dis / eff, 0.0, cap)
    # energy above the remaining EVs' capacity (or below empty) leaves with the departures
    after = np.array([max(x.count + x.n_in - x.n_out, 0.0) * f.e_cap
                      for x, f in zip(inputs[0], config.fleets)])
    new.fleet_energy = np.clip(v.f_e, 0.0, after) if len(after) else v.f_e.copy()

    rec = HourRecord(
        hour=t, cost=_hour_cost(config, v, p, ls), load_shed_gwh=ls, wind_curt_gwh=wc,
        solar_curt_gwh=sc, inertia_gws=v.h, r_ev_sched_gw=v.r_bar, mode=mode,
        g=list(map(float, v.g)), c=list(map(float, v.c)), n0=[float(x.n0) for x in inputs[0]], mu=[float(x.mu) for x in inputs[0]],
        sigma=[float(x.sigma) for x in inputs[0]], k=drcc.k if drcc.mode is not Mode.DISABLED else 0.0,
        tight=is_tight(v, inputs[0], drcc), r_nd=v.r_nd, r_g=v.r_g, pl=v.pl,
        residual_gw=float(residual), plan_residual_gw=plan_res, ev_slack_gwh=float(v.f_lo.sum() + v.f_hi.sum()),
        plan_objective=float(sol.objective), solve_seconds=elapsed)
    return rec, new
