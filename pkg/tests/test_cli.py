import json

import pytest
from click.testing import CliRunner

from v2gfr.cli import main
from v2gfr.connectivity import write_events
from v2gfr.scheduler import default_config, load_config
from v2gfr.scheduler import rolling as rolling_mod
from v2gfr.synthetic import synthetic_events


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    cfg = default_config().replace(horizon=3, quantiles=(0.1, 0.5, 0.9), history_days=35)
    p = tmp_path_factory.mktemp("cfg") / "small.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return p


@pytest.fixture(scope="module")
def runs(small_config, tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    runner = CliRunner()
    out = {}
    for mode in ("joint", "disabled"):
        d = base / mode
        res = runner.invoke(main, ["simulate", "--config", str(small_config), "--hours", "3",
                                   "--mode", mode, "--out", str(d)])
        assert res.exit_code == 0, res.output
        out[mode] = d
    return out


def test_missing_config_is_usage_error(tmp_path):
    res = CliRunner().invoke(main, ["simulate", "--config", str(tmp_path / "nope.toml"),
                                    "--out", str(tmp_path / "r")])
    assert res.exit_code == 2
    assert not (tmp_path / "r").exists()


def test_invalid_config_is_usage_error(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[system]\nhorizon = 'x'\n")
    assert CliRunner().invoke(main, ["schedule", "--config", str(p)]).exit_code == 2


def test_bad_epsilon_is_usage_error(small_config, tmp_path):
    res = CliRunner().invoke(main, ["simulate", "--config", str(small_config), "--epsilon", "1.5",
                                    "--out", str(tmp_path / "r")])
    assert res.exit_code == 2


def test_simulate_manifest_records_dro_half(small_config, tmp_path):
    d = tmp_path / "dro"
    res = CliRunner().invoke(main, ["simulate", "--config", str(small_config), "--hours", "1",
                                    "--ambiguity", "dro", "--epsilon", "0.5", "--out", str(d)])
    assert res.exit_code == 0, res.output
    m = json.loads((d / "manifest.json").read_text())
    assert m["f_inv"] == 1.0 and m["format_version"] == 1
    assert m["ambiguity"] == "dro" and m["epsilon"] == 0.5
    assert {"config", "config_hash", "seed", "data", "output"} <= set(m)
    assert (d / "operation_log.csv").read_text().startswith("# format_version 1")


def test_overwrite_needs_force(runs, small_config):
    d = runs["joint"]
    args = ["simulate", "--config", str(small_config), "--hours", "1", "--out", str(d)]
    before = (d / "manifest.json").read_text()
    assert CliRunner().invoke(main, args).exit_code == 2
    assert (d / "manifest.json").read_text() == before
    res = CliRunner().invoke(main, args + ["--force"])
    assert res.exit_code == 0
    assert json.loads((d / "manifest.json").read_text())["hours"] == 1
    # restore the three-hour run for the tests below
    assert CliRunner().invoke(main, args[:4] + ["3"] + args[5:] + ["--force"]).exit_code == 0


def test_model_failure_exit_code(small_config, tmp_path, monkeypatch):
    real = rolling_mod.solve_horizon

    def broken(asm, config, backend="clarabel"):
        sol = real(asm, config, backend)
        sol.status = "infeasible"
        return sol

    monkeypatch.setattr(rolling_mod, "solve_horizon", broken)
    res = CliRunner().invoke(main, ["simulate", "--config", str(small_config), "--hours", "1",
                                    "--out", str(tmp_path / "f")])
    assert res.exit_code == 1


def test_schedule_prints_solution(small_config):
    res = CliRunner().invoke(main, ["schedule", "--config", str(small_config), "--hour", "2"])
    assert res.exit_code == 0, res.output
    keys = [line.split()[0] for line in res.output.strip().splitlines()]
    assert keys == ["objective_gbp", "r_ev_gw", "inertia_gws", "k", "nadir_dual"]


def test_validate_and_report(runs):
    runner = CliRunner()
    d = runs["joint"]
    args = ["validate", str(d), "--sampler", "gaussian", "--samples", "2000"]
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.output
    doc = json.loads((d / "validation.json").read_text())
    assert doc["format_version"] == 1 and 0.0 <= doc["worst_hns"] <= 1.0
    assert runner.invoke(main, args).exit_code == 2
    # parallel chunks give the same per-hour draws
    res = runner.invoke(main, args + ["--jobs", "2", "--force"])
    assert res.exit_code == 0, res.output
    assert json.loads((d / "validation.json").read_text())["summary"] == doc["summary"]

    res = runner.invoke(main, ["report", str(runs["joint"]), str(runs["disabled"])])
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    assert float(rows[1]["cost_delta_vs_disabled"]) == 0.0
    assert float(rows[0]["cost_delta_vs_disabled"]) <= 0.0


def test_validate_needs_a_run(tmp_path):
    assert CliRunner().invoke(main, ["validate", str(tmp_path)]).exit_code == 2


def test_validate_empirical_sampler(runs):
    res = CliRunner().invoke(main, ["validate", str(runs["disabled"]), "--samples", "500",
                                    "--force"])
    assert res.exit_code == 0, res.output
    assert json.loads((runs["disabled"] / "validation.json").read_text())["worst_hns"] == 1.0


def test_ingest(tmp_path):
    evs = synthetic_events("work", 30, 35, seed=4)
    src = tmp_path / "events.csv"
    write_events(evs, src)
    with open(src, "a") as fh:
        fh.write("zz,not-a-time,2030-01-01T00:00\n")
    out = tmp_path / "ing"
    res = CliRunner().invoke(main, ["ingest", str(src), str(out), "--resolution", "hourly",
                                    "--day-class", "weekday", "--n-boot", "50"])
    assert res.exit_code == 0, res.output
    assert "rejected 1" in res.output
    doc = json.loads((out / "distributions.json").read_text())
    assert doc["day_class"] == "weekday"
    assert {c["day_class"] for c in doc["cells"]} == {"weekday"}
    assert (out / "series.csv").exists()
    assert "malformed timestamp" in (out / "rejects.csv").read_text()


def test_ingest_usage_errors(tmp_path):
    assert CliRunner().invoke(main, ["ingest", str(tmp_path / "none.csv"), str(tmp_path)]).exit_code == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("who,when\n1,2\n")
    assert CliRunner().invoke(main, ["ingest", str(bad), str(tmp_path / "o")]).exit_code == 2


def test_fixture_writes_loadable_config(tmp_path):
    out = tmp_path / "fx"
    res = CliRunner().invoke(main, ["fixture", str(out), "--days", "10"])
    assert res.exit_code == 0, res.output
    doc = json.loads((out / "system.json").read_text())
    for f in doc["fleets"]:
        assert f["events"] == f"events_{f['name']}.csv" and (out / f["events"]).exists()
    cfg = load_config(out / "system.json")
    assert cfg.history_days == 7 and all(f.events for f in cfg.fleets)
