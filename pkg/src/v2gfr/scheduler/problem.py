"""Stochastic unit-commitment program over a scenario tree.

Every node carries a full set of dispatch, reserve and frequency-security
decisions. Fleet decisions are fractions of the charger rating: ``delta``
(discharge) and ``gamma`` (charge), so the per-EV response capacity is
``g = D_max (1 - delta + gamma)``.

The objective is in £k (GW x £/MWh = £k/h); reported costs are in £.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..conic import ConicProgram, ConicSolution, LinExpr, lsum, solve_mixed
from ..drcc import (DrccConfig, FleetUncertainty, Mode, individual_constraint_rows,
                    joint_constraint_rows)
from .config import SystemConfig
from .tree import ScenarioTree


class StaticInfeasible(ValueError):
    """Bounds that no dispatch can satisfy, detected before solving."""


@dataclass(frozen=True)
class FleetNodeInput:
    count: float      # EVs assumed connected for energy accounting at this node
    n_in: float
    n_out: float
    n0: float         # connected at decision time
    mu: float
    sigma: float


@dataclass
class SystemState:
    """Carried between rolling hours."""
    n_committed: Optional[np.ndarray]        # per generator class, None before the first hour
    startups: List[np.ndarray]               # most recent last, per generator class
    storage_energy: np.ndarray               # GWh per unit
    fleet_energy: np.ndarray                 # GWh per fleet

    def copy(self) -> "SystemState":
        return SystemState(None if self.n_committed is None else self.n_committed.copy(),
                           [s.copy() for s in self.startups], self.storage_energy.copy(),
                           self.fleet_energy.copy())


@dataclass
class NodeVars:
    n: List[LinExpr]
    p: List[LinExpr]
    su: List[Optional[LinExpr]]
    r_slow: List[Optional[LinExpr]]
    s_dis: List[LinExpr]
    s_ch: List[LinExpr]
    s_e: List[LinExpr]
    s_fast: List[LinExpr]
    s_slow: List[LinExpr]
    delta: List[LinExpr]
    gamma: List[LinExpr]
    f_e: List[LinExpr]
    f_lo: List[LinExpr]
    f_hi: List[LinExpr]
    g: List[LinExpr]
    r_bar: LinExpr
    pl: LinExpr
    wc: LinExpr
    sc: LinExpr
    ls: LinExpr
    h: LinExpr
    r_nd: LinExpr
    r_g: LinExpr
    ev_power: LinExpr
    drcc_b: Optional[LinExpr] = None
    fleet_shares: Optional[list] = None


@dataclass
class Assembled:
    prog: ConicProgram
    tree: ScenarioTree
    nodes: List[NodeVars]
    fleet_inputs: List[List[FleetNodeInput]]   # [node][fleet]
    drcc: DrccConfig
    hints: list = field(default_factory=list)
    scale_obj: float = 1.0


def _uncertainty(fi: FleetNodeInput, d_max: float) -> FleetUncertainty:
    # the mean change cannot remove more EVs than are connected now
    mu = max(fi.mu, -fi.n0)
    return FleetUncertainty(g=2.0 * d_max, n0=fi.n0, mu=mu, sigma=fi.sigma)


def assemble_problem(tree: ScenarioTree, config: SystemConfig, state: SystemState,
                     fleet_inputs: Sequence[Sequence[FleetNodeInput]],
                     drcc: Optional[DrccConfig] = None) -> Assembled:
    """Build the conic program for one rolling hour."""
    drcc = drcc or config.drcc
    fp = config.frequency
    gens, stor, fleets = config.generators, config.storage, config.fleets
    prog = ConicProgram()
    nodes: List[NodeVars] = []
    min_up = [int(math.ceil(g.min_up_time)) for g in gens]
    hints = []

    for node in tree.nodes:
        tag = f"n{node.id}"
        par = nodes[node.parent] if node.parent is not None else None
        fin = fleet_inputs[node.id]
        if node.demand < 0 or node.wind < 0 or node.solar < 0:
            raise StaticInfeasible(f"node {node.id}: negative demand or renewable availability")

        # --- thermal ---
        n_v, p_v, su_v, r_v = [], [], [], []
        for gi, g in enumerate(gens):
            lo = float(g.count) if g.must_run else 0.0
            nv = prog.var(f"{tag}.{g.name}.N", lo, float(g.count))
            pv = prog.var(f"{tag}.{g.name}.P", 0.0, None)
            prog.add_le(pv - g.p_max * nv, 0.0, name=f"{tag}.{g.name}.pmax")
            prog.add_ge(pv - g.p_min * nv, 0.0, name=f"{tag}.{g.name}.pmin")
            rv = None
            if g.max_slow_fr > 0:
                rv = prog.var(f"{tag}.{g.name}.R", 0.0, None)
                prog.add_le(rv - g.max_slow_fr * nv, 0.0, name=f"{tag}.{g.name}.frcap")
                prog.add_le(rv + pv - g.p_max * nv, 0.0, name=f"{tag}.{g.name}.headroom")
            prev = par.n[gi] if par is not None else (
                None if state.n_committed is None else float(state.n_committed[gi]))
            sv = None
            if prev is not None and not g.must_run:
                if g.startup_time > 0:
                    step = g.count / g.startup_time
                    prog.add_le(nv - prev, step, name=f"{tag}.{g.name}.rampup")
                    prog.add_le(prev - nv, step, name=f"{tag}.{g.name}.rampdn")
                if g.startup_cost > 0 or min_up[gi] > 1:
                    sv = prog.var(f"{tag}.{g.name}.su", 0.0, None)
                    prog.add_ge(sv - nv + prev, 0.0, name=f"{tag}.{g.name}.su")
            n_v.append(nv)
            p_v.append(pv)
            su_v.append(sv)
            r_v.append(rv)

        # --- storage ---
        sd, sc_, se, sf, ss = [], [], [], [], []
        for si, s in enumerate(stor):
            dis = prog.var(f"{tag}.{s.name}.dis", 0.0, s.rate)
            ch = prog.var(f"{tag}.{s.name}.ch", 0.0, s.rate)
            e = prog.var(f"{tag}.{s.name}.E", 0.0, s.capacity)
            rf = prog.var(f"{tag}.{s.name}.Rf", 0.0, s.max_fast_fr)
            rs = prog.var(f"{tag}.{s.name}.Rs", 0.0, s.max_slow_fr)
            e_prev = par.s_e[si] if par is not None else float(state.storage_energy[si])
            prog.add_eq(e - e_prev - (s.efficiency * ch - dis / s.efficiency) * node.dtau, 0.0,
                        name=f"{tag}.{s.name}.soc")
            if s.max_fast_fr > 0 or s.max_slow_fr > 0:
                prog.add_le(rf + rs + dis - ch, s.rate, name=f"{tag}.{s.name}.frhead")
            sd.append(dis)
            sc_.append(ch)
            se.append(e)
            sf.append(rf)
            ss.append(rs)

        # --- fleets ---
        dl, gm, fe, flo, fhi, gx = [], [], [], [], [], []
        ev_power = LinExpr()
        for fi_, (f, x) in enumerate(zip(fleets, fin)):
            ub = 1.0 if x.count > 0 else 0.0
            d = prog.var(f"{tag}.{f.name}.delta", 0.0, ub)
            c = prog.var(f"{tag}.{f.name}.gamma", 0.0, ub)
            e = prog.var(f"{tag}.{f.name}.E", None, None)
            lo_s = prog.var(f"{tag}.{f.name}.Elo", 0.0, None)
            hi_s = prog.var(f"{tag}.{f.name}.Ehi", 0.0, None)
            e_prev = par.f_e[fi_] if par is not None else float(state.fleet_energy[fi_])
            k_e = x.count * f.d_max * node.dtau
            prog.add_eq(e - e_prev - k_e * (f.eta * c - d / f.eta)
                        - (x.n_in * f.e_in - x.n_out * f.e_out), 0.0, name=f"{tag}.{f.name}.soc")
            prog.add_ge(e + lo_s, 0.0, name=f"{tag}.{f.name}.Emin")
            after = max(x.count + x.n_in - x.n_out, 0.0)
            prog.add_le(e - hi_s, after * f.e_cap, name=f"{tag}.{f.name}.Emax")
            ev_power = ev_power + (x.count * f.d_max) * (d - c)
            dl.append(d)
            gm.append(c)
            fe.append(e)
            flo.append(lo_s)
            fhi.append(hi_s)
            gx.append(f.d_max * (1.0 - d + c))

        # --- system-level ---
        rb_ub = 0.0 if drcc.mode is Mode.DISABLED or not fleets else None
        r_bar = prog.var(f"{tag}.Rbar", 0.0, rb_ub)
        pl = prog.var(f"{tag}.PL", 0.0, None)
        wc = prog.var(f"{tag}.wc", 0.0, node.wind)
        scv = prog.var(f"{tag}.sc", 0.0, node.solar)
        ls = prog.var(f"{tag}.ls", 0.0, node.demand)
        h = lsum(g.inertia * g.p_max * nv for g, nv in zip(gens, n_v))
        r_nd = lsum(sf)
        r_g = lsum([rv for rv in r_v if rv is not None] + ss)

        prog.add_eq(lsum(p_v) + lsum(sd) - lsum(sc_) + ev_power
                    + (node.wind - wc) + (node.solar - scv) + ls - node.demand, 0.0,
                    name=f"{tag}.balance")

        # largest infeed: loading of must-run units, p_max of any flexible class
        for g, pv in zip(gens, p_v):
            if g.count == 0:
                continue
            if g.must_run:
                prog.add_ge(pl - pv / g.count, 0.0, name=f"{tag}.{g.name}.pl")
            else:
                prog.add_ge(pl, g.p_max, name=f"{tag}.{g.name}.pl")

        prog.add_ge(2.0 * fp.rocof_max * h / fp.f0 - pl, 0.0, name=f"{tag}.rocof")
        prog.add_ge(r_nd + r_bar + r_g - pl, 0.0, name=f"{tag}.steady")
        dfm = fp.delta_f_max
        z = h / fp.f0 - (r_nd + r_bar) * (fp.t1 / (4 * dfm)) - r_bar * (2 * fp.t_del / (4 * dfm))
        x = r_g / fp.t2
        y = (pl - r_nd - r_bar) / (2.0 * math.sqrt(dfm))
        prog.add_rsoc(z, 0.5 * x, [y], name=f"{tag}.nadir")

        nv_obj = NodeVars(n_v, p_v, su_v, r_v, sd, sc_, se, sf, ss, dl, gm, fe, flo, fhi, gx,
                          r_bar, pl, wc, scv, ls, h, r_nd, r_g, ev_power)

        if fleets and drcc.mode is not Mode.DISABLED:
            unc = [_uncertainty(xf, f.d_max) for xf, f in zip(fin, fleets)]
            if drcc.mode is Mode.INDIVIDUAL:
                nv_obj.fleet_shares = individual_constraint_rows(prog, gx, r_bar, unc, drcc,
                                                                 name=f"{tag}.indiv")
            else:
                rows = joint_constraint_rows(prog, gx, r_bar, unc, drcc, name=f"{tag}.drcc",
                                             relaxation=config.relaxation)
                nv_obj.drcc_b = rows.b
                nv_obj.fleet_shares = rows.shares
                if rows.b is not None:
                    hints.append(prog.index(rows.b))
        nodes.append(nv_obj)

    # minimum up time over the aggregated commitment
    for node in tree.nodes:
        nv_obj = nodes[node.id]
        for gi, g in enumerate(gens):
            if min_up[gi] <= 1 or nv_obj.su[gi] is None:
                continue
            recent = []
            cur = node.id
            while cur is not None and len(recent) < min_up[gi]:
                if nodes[cur].su[gi] is not None:
                    recent.append(nodes[cur].su[gi])
                cur = tree.nodes[cur].parent
            hist = [float(s[gi]) for s in reversed(state.startups)][: min_up[gi] - len(recent)]
            prog.add_ge(nv_obj.n[gi] - lsum(recent) - sum(hist), 0.0,
                        name=f"n{node.id}.{g.name}.minup")

    prog.minimize(objective_expr(tree, config, nodes))
    asm = Assembled(prog, tree, nodes, [list(f) for f in fleet_inputs], drcc)
    if hints:
        # relaxing every binary (b = 1, no EV response) is always feasible
        asm.hints = [{j: 1.0 for j in hints}]
    return asm


def objective_expr(tree: ScenarioTree, config: SystemConfig, nodes: Sequence[NodeVars]) -> LinExpr:
    obj = LinExpr()
    for node, nv in zip(tree.nodes, nodes):
        w = node.prob
        hourly = LinExpr()
        for g, n, p, su in zip(config.generators, nv.n, nv.p, nv.su):
            hourly = hourly + (g.no_load_cost / 1000.0) * n + g.marginal_cost * p
            if su is not None:
                obj = obj + (w * g.startup_cost / 1000.0) * su
        hourly = hourly + config.c_ls * nv.ls
        obj = obj + (w * node.dtau) * hourly
        pen = config.ev_energy_penalty
        for lo, hi in zip(nv.f_lo, nv.f_hi):
            obj = obj + (w * pen) * (lo + hi)
    return obj


# --- solving and extraction ----------------------------------------------------

@dataclass
class NodeValues:
    n: np.ndarray
    p: np.ndarray
    su: np.ndarray
    r_slow: np.ndarray
    s_dis: np.ndarray
    s_ch: np.ndarray
    s_e: np.ndarray
    s_fast: np.ndarray
    s_slow: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    f_e: np.ndarray
    f_lo: np.ndarray
    f_hi: np.ndarray
    g: np.ndarray
    r_bar: float
    pl: float
    wc: float
    sc: float
    ls: float
    h: float
    r_nd: float
    r_g: float
    ev_power: float
    drcc_b: Optional[float]
    c: Optional[np.ndarray] = None   # per-EV capacity committed to the chance constraint


def _committed(asm: Assembled, nv: NodeVars, node_id: int, g: np.ndarray, x) -> np.ndarray:
    """Per-EV capacity whose delivery backs ``r_bar`` at one node.

    Joint and deterministic modes use the participation shares (``g`` where no
    relaxation applies); individual mode divides each fleet's share by its
    per-EV support ``n0 + mu - k sigma``; disabled commits nothing.
    """
    mode = asm.drcc.mode
    if mode is Mode.DISABLED or nv.fleet_shares is None:
        return np.zeros_like(g) if mode is Mode.DISABLED else g.copy()
    shares = np.maximum([_val(e, x) for e in nv.fleet_shares], 0.0)
    if mode is not Mode.INDIVIDUAL:
        return np.minimum(shares, g)
    k = asm.drcc.k
    out = np.zeros_like(g)
    for i, (fi, share) in enumerate(zip(asm.fleet_inputs[node_id], shares)):
        coef = fi.n0 + max(fi.mu, -fi.n0) - k * fi.sigma
        if coef > 0:
            out[i] = min(share / coef, g[i])
    return out


def _val(expr, x):
    return 0.0 if expr is None else float(expr.value(x))


def extract(asm: Assembled, sol: ConicSolution) -> List[NodeValues]:
    x = sol.x
    out = []
    for node_id, nv in enumerate(asm.nodes):
        arr = lambda xs: np.array([_val(e, x) for e in xs])
        g = np.maximum(arr(nv.g), 0.0)
        out.append(NodeValues(
            arr(nv.n), arr(nv.p), arr(nv.su), arr(nv.r_slow), arr(nv.s_dis), arr(nv.s_ch),
            arr(nv.s_e), arr(nv.s_fast), arr(nv.s_slow), arr(nv.delta), arr(nv.gamma),
            arr(nv.f_e), arr(nv.f_lo), arr(nv.f_hi), g,
            _val(nv.r_bar, x), _val(nv.pl, x), _val(nv.wc, x), _val(nv.sc, x), _val(nv.ls, x),
            _val(nv.h, x), _val(nv.r_nd, x), _val(nv.r_g, x), _val(nv.ev_power, x),
            None if nv.drcc_b is None else _val(nv.drcc_b, x),
            _committed(asm, nv, node_id, g, x)))
    return out


def solve_horizon(asm: Assembled, config: SystemConfig, backend: str = "clarabel") -> ConicSolution:
    return solve_mixed(asm.prog, gap=config.mip_gap, hints=asm.hints, backend=backend)


def recompute_objective(tree: ScenarioTree, config: SystemConfig, values: Sequence[NodeValues]) -> float:
    """Expected cost (£k) from extracted decisions, independent of the program's objective row."""
    total = 0.0
    pen = config.ev_energy_penalty
    for node, v in zip(tree.nodes, values):
        hourly = 0.0
        for gi, g in enumerate(config.generators):
            hourly += g.no_load_cost / 1000.0 * v.n[gi] + g.marginal_cost * v.p[gi]
            total += node.prob * g.startup_cost / 1000.0 * v.su[gi]
        hourly += config.c_ls * v.ls
        total += node.prob * node.dtau * hourly
        total += node.prob * pen * float(np.sum(v.f_lo) + np.sum(v.f_hi))
    return total


def balance_residual(tree: ScenarioTree, values: Sequence[NodeValues]) -> np.ndarray:
    """Per-node supply minus demand (GW) from extracted decisions."""
    res = []
    for node, v in zip(tree.nodes, values):
        supply = (v.p.sum() + v.s_dis.sum() - v.s_ch.sum() + v.ev_power
                  + node.wind - v.wc + node.solar - v.sc + v.ls)
        res.append(supply - node.demand)
    return np.array(res)
