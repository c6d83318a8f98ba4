import dataclasses
import json

import numpy as np
import pytest

from v2gfr.drcc import Mode
from v2gfr.freq import FrequencyCase, simulate_trajectory
from v2gfr.scheduler import (ConfigError, ModelFailure, branch_weights, build_tree,
                             config_from_dict, default_config, load_config, read_log,
                             recompute_objective, rolling_simulate)
from v2gfr.scheduler import rolling as rolling_mod
from v2gfr.scheduler.inputs import load_fleet, load_net_demand
from v2gfr.scheduler.problem import (StaticInfeasible, assemble_problem, balance_residual, extract,
                                     solve_horizon)
from v2gfr.scheduler.rolling import fleet_node_inputs, initial_state

Q7 = (0.005, 0.1, 0.3, 0.5, 0.7, 0.9, 0.995)


def flat_forecast(nq, horizon, demand=30.0, wind=10.0, solar=0.0):
    return {k: np.full((nq, horizon), v) for k, v in
            (("demand", demand), ("wind", wind), ("solar", solar))}


# --- tree ----------------------------------------------------------------------

def test_tree_node_counts():
    root = {"demand": 30.0, "wind": 10.0, "solar": 0.0}
    assert len(build_tree(Q7, root, flat_forecast(7, 24))) == 169
    t1 = build_tree((0.5,), root, flat_forecast(1, 24))
    assert len(t1) == 25 and all(n.prob == 1.0 for n in t1.nodes)
    tree = build_tree(Q7, root, flat_forecast(7, 24))
    assert len(tree.children(0)) == 7
    assert sum(n.prob for n in tree.children(0)) == pytest.approx(1.0, abs=1e-15)


def test_branch_weights():
    w = branch_weights(Q7)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    raw = np.array([0.05, 0.1475, 0.2, 0.2, 0.2, 0.1475, 0.05])
    assert raw.sum() == pytest.approx(0.995)
    np.testing.assert_allclose(w, raw / raw.sum(), rtol=1e-12)


def test_tree_rejects_malformed_forecast():
    root = {"demand": 30.0, "wind": 10.0, "solar": 0.0}
    with pytest.raises(ValueError):
        build_tree(Q7, root, flat_forecast(6, 24))
    bad = flat_forecast(7, 24)
    bad["wind"][2, 3] = np.nan
    with pytest.raises(ValueError):
        build_tree(Q7, root, bad)
    with pytest.raises(ValueError):
        build_tree(Q7, {"demand": 1.0}, flat_forecast(7, 24))


# --- config ---------------------------------------------------------------------

def test_default_config_loads():
    cfg = default_config()
    assert [g.name for g in cfg.generators] == ["nuclear", "ccgt", "ocgt"]
    assert cfg.quantiles == Q7 and cfg.c_ls == 30000.0
    assert cfg.drcc.mode is Mode.JOINT


def test_config_json_fallback_round_trip(tmp_path):
    cfg = default_config().with_drcc(epsilon=0.05)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    back = load_config(p)
    assert back.config_hash() == cfg.config_hash()
    # JSON content under a .toml name also parses
    q = tmp_path / "cfg.toml"
    q.write_text(json.dumps(cfg.to_dict()))
    assert load_config(q).config_hash() == cfg.config_hash()


def test_config_errors(tmp_path):
    doc = default_config().to_dict()
    doc["generators"][0]["colour"] = "blue"
    with pytest.raises(ConfigError):
        config_from_dict(doc)
    doc = default_config().to_dict()
    doc["system"]["quantiles"] = [0.5, 0.1]
    with pytest.raises(ConfigError):
        config_from_dict(doc)
    doc = default_config().to_dict()
    doc["format_version"] = 99
    with pytest.raises(ConfigError):
        config_from_dict(doc)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.toml")


def test_config_hash_tracks_knobs():
    cfg = default_config()
    assert cfg.config_hash() != cfg.with_drcc(epsilon=0.02).config_hash()
    assert cfg.config_hash() == default_config().config_hash()


# --- single-hour program ------------------------------------------------------------

@pytest.fixture(scope="module")
def small():
    cfg = default_config().replace(horizon=4, quantiles=(0.1, 0.5, 0.9), history_days=35)
    fleets = [load_fleet(f, cfg, 3) for f in cfg.fleets]
    net = load_net_demand(cfg, 30)
    return cfg, fleets, net


def solve_hour(cfg, fleets, net, t, state=None, drcc=None):
    fc = net.forecast(t, cfg.horizon + 1, cfg.quantiles)
    root = {"demand": float(net.demand[t]), "wind": float(net.wind[t]), "solar": float(net.solar[t])}
    tree = build_tree(cfg.quantiles, root, {k: v[:, 1:] for k, v in fc.items()})
    state = state or initial_state(cfg, fleets)
    asm = assemble_problem(tree, cfg, state, fleet_node_inputs(tree, fleets, t), drcc or cfg.drcc)
    sol = solve_horizon(asm, cfg)
    assert sol.ok, sol.status
    return tree, asm, sol, extract(asm, sol)


@pytest.mark.parametrize("t", [0, 7, 20])
def test_hour_solution_invariants(small, t):
    cfg, fleets, net = small
    tree, asm, sol, vals = solve_hour(cfg, fleets, net, t)
    assert np.max(np.abs(balance_residual(tree, vals))) <= 1e-6
    assert recompute_objective(tree, cfg, vals) == pytest.approx(sol.objective, rel=1e-6)
    fp = cfg.frequency
    for v in vals:
        assert v.h >= v.pl * fp.f0 / (2 * fp.rocof_max) * (1 - 1e-6)
        assert v.r_nd + v.r_g + v.r_bar >= v.pl - 1e-6
    res = asm.prog.residuals(sol.x)
    assert max(res.values()) <= 1e-5


@pytest.mark.parametrize("t", [0, 20])
def test_root_nadir_secure_with_scheduled_delivery(small, t):
    cfg, fleets, net = small
    _, _, _, vals = solve_hour(cfg, fleets, net, t)
    v = vals[0]
    case = FrequencyCase(v.h, max(v.r_bar, 0.0), v.r_nd, v.r_g, v.pl)
    traj = simulate_trajectory(case, cfg.frequency, horizon_s=60, sample_dt=0.5)
    assert traj.nadir_value >= -cfg.frequency.delta_f_max - 1e-5


def test_modes_order_scheduled_response(small):
    cfg, fleets, net = small
    out = {}
    for mode in ("joint", "individual", "disabled", "deterministic"):
        _, _, sol, vals = solve_hour(cfg, fleets, net, 21, drcc=cfg.with_drcc(mode=mode).drcc)
        out[mode] = (vals[0].r_bar, sol.objective)
    assert abs(out["disabled"][0]) <= 1e-9
    assert out["joint"][0] >= out["individual"][0] - 1e-7
    # each mode relaxes the next one
    assert out["deterministic"][1] <= out["joint"][1] * (1 + 1e-7)
    assert out["joint"][1] <= out["individual"][1] * (1 + 1e-7)
    assert out["individual"][1] <= out["disabled"][1] * (1 + 1e-7)


def test_big_m_relaxation_no_better_than_participation(small):
    cfg, fleets, net = small
    _, _, s_p, _ = solve_hour(cfg, fleets, net, 21)
    _, _, s_b, _ = solve_hour(cfg.replace(relaxation="big_m"), fleets, net, 21)
    assert s_p.objective <= s_b.objective * (1 + 1e-6)


def test_static_infeasibility_detected(small):
    cfg, fleets, net = small
    root = {"demand": -1.0, "wind": 10.0, "solar": 0.0}
    tree = build_tree(cfg.quantiles, root, flat_forecast(3, cfg.horizon))
    with pytest.raises(StaticInfeasible):
        assemble_problem(tree, cfg, initial_state(cfg, fleets), fleet_node_inputs(tree, fleets, 0))


def test_fleet_inputs_chain_counts(small):
    cfg, fleets, net = small
    root = {"demand": 30.0, "wind": 10.0, "solar": 0.0}
    tree = build_tree(cfg.quantiles, root, flat_forecast(3, cfg.horizon))
    inp = fleet_node_inputs(tree, fleets, 6)
    chain = [0] + [n.id for n in tree.nodes if n.branch == 1]
    for i in range(len(fleets)):
        for a, b in zip(chain, chain[1:]):
            x, y = inp[a][i], inp[b][i]
            assert y.count == pytest.approx(max(x.count + x.n_in - x.n_out, 0.0))
            assert x.n_out <= x.count + x.n_in + 1e-9


# --- rolling --------------------------------------------------------------------------

def test_short_rolling_run_and_log(small, tmp_path):
    cfg, fleets, net = small
    res = rolling_simulate(cfg, 4, fleets=fleets, net=net)
    assert len(res.records) == 4 and res.max_residual <= 1e-6
    res.write_log(tmp_path / "log.csv")
    rows = read_log(tmp_path / "log.csv")
    assert [r["hour"] for r in rows] == [0, 1, 2, 3]
    assert rows[2]["cost"] == pytest.approx(res.records[2].cost, rel=1e-8)
    assert (tmp_path / "log.csv").read_text().splitlines()[1] == (
        "hour,cost,load_shed_gwh,wind_curt_gwh,solar_curt_gwh,inertia_gws,r_ev_sched_gw,mode")
    res.write_detail(tmp_path / "d.jsonl")
    header, recs = rolling_mod.read_detail(tmp_path / "d.jsonl")
    assert header["config_hash"] == cfg.config_hash() and recs[1].g == res.records[1].g


def test_zero_sigma_joint_equals_deterministic(small):
    cfg, fleets, net = small
    def run(mode):
        c = cfg.with_drcc(mode=mode).replace(sigma_multiplier=0.0)
        fl = [dataclasses.replace(f, sigma_multiplier=0.0) for f in fleets]
        return rolling_simulate(c, 3, fleets=fl, net=net)
    a, b = run("joint"), run("deterministic")
    for x, y in zip(a.records, b.records):
        assert x.r_ev_sched_gw == pytest.approx(y.r_ev_sched_gw, abs=1e-6)
        assert x.cost == pytest.approx(y.cost, rel=1e-6)


def test_fallback_to_disabled(small, monkeypatch):
    cfg, fleets, net = small
    real = rolling_mod.solve_horizon
    calls = []

    def flaky(asm, config, backend="clarabel"):
        calls.append(asm.drcc.mode)
        sol = real(asm, config, backend)
        if asm.drcc.mode is Mode.JOINT:
            sol.status = "infeasible"
        return sol

    monkeypatch.setattr(rolling_mod, "solve_horizon", flaky)
    res = rolling_simulate(cfg, 1, fleets=fleets, net=net)
    assert calls == [Mode.JOINT, Mode.DISABLED]
    assert res.records[0].mode == "disabled" and abs(res.records[0].r_ev_sched_gw) <= 1e-9


def test_model_failure_when_fallback_fails(small, monkeypatch):
    cfg, fleets, net = small
    real = rolling_mod.solve_horizon

    def broken(asm, config, backend="clarabel"):
        sol = real(asm, config, backend)
        sol.status = "infeasible"
        return sol

    monkeypatch.setattr(rolling_mod, "solve_horizon", broken)
    with pytest.raises(ModelFailure):
        rolling_simulate(cfg, 1, fleets=fleets, net=net)


def test_rebalance_surplus_and_deficit(small):
    cfg, fleets, net = small
    _, _, _, vals = solve_hour(cfg, fleets, net, 3)
    v = vals[0]
    st = initial_state(cfg, fleets).storage_energy
    node_d = v.p.sum() + v.s_dis.sum() - v.s_ch.sum() + v.ev_power
    for extra in (-1.5, 0.0, 2.0):
        # realised wind higher (extra > 0) or lower than planned
        wind = float(net.wind[3]) + extra
        p, dis, ch, wc, sc, ls = rolling_mod._rebalance(cfg, v, float(net.demand[3]), max(wind, 0),
                                                        float(net.solar[3]), st)
        supply = p.sum() + dis.sum() - ch.sum() + v.ev_power + (max(wind, 0) - wc) \
            + (float(net.solar[3]) - sc) + ls
        assert supply == pytest.approx(float(net.demand[3]), abs=1e-9)
        assert wc >= -1e-12 and ls >= -1e-12
    assert node_d > 0
