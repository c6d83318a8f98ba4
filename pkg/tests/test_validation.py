import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from v2gfr.drcc import inverse_cdf_bound
from v2gfr.freq import FrequencyCase, FrequencyParams, tight_inertia
from v2gfr.validation import (SAMPLERS, HnsRecord, MissingDistribution, binomial_band,
                              crosscheck_nadir, delivered_response, emit_report, get_sampler,
                              hns_summary, lower_quantile, nadir_for_delivery, read_hns_csv,
                              sample_hns)

C = [2e-5, 1.5e-5, 1e-5]
N0 = [20000.0, 12000.0, 30000.0]
MU = [-500.0, 200.0, -1200.0]
SIG = [900.0, 700.0, 1500.0]


def record(k, hour=5, c=C, n0=N0, mu=MU, sigma=SIG, **kw):
    c_, a = np.array(c), np.array(n0) + np.maximum(mu, -np.array(n0))
    r_bar = float(c_ @ a - k * np.linalg.norm(c_ * np.array(sigma)))
    base = dict(hour=hour, r_ev_sched_gw=r_bar, c=list(c), n0=list(n0), mu=list(mu),
                sigma=list(sigma), tight=True, mode="joint")
    base.update(kw)
    return SimpleNamespace(**base)


def test_zero_schedule_is_secure():
    rec = record(0.0, r_ev_sched_gw=0.0)
    assert sample_hns(rec, "gaussian", n=10).hns == 1.0


@pytest.mark.parametrize("name", ["gaussian", "shifted_exponential", "uniform", "two_point",
                                  "bimodal"])
def test_sampler_moments(name):
    rng = np.random.default_rng(11)
    n = 400_000
    x = get_sampler(name).draw(rng, 3.0, 2.0, n)
    assert abs(x.mean() - 3.0) < 5 * 2.0 / math.sqrt(n)
    assert x.std() == pytest.approx(2.0, rel=0.01)


def test_sampler_shapes():
    rng = np.random.default_rng(0)
    assert {k for k, f in SAMPLERS.items() if f().unimodal} == {"gaussian", "shifted_exponential",
                                                                 "uniform"}
    x = get_sampler("shifted_exponential").draw(rng, 0.0, 1.0, 10_000)
    assert x.min() >= -1.0 and stats.skew(x) > 1.5
    u = get_sampler("uniform").draw(rng, 0.0, 1.0, 10_000)
    assert np.abs(u).max() <= math.sqrt(3)
    tp = get_sampler("two_point").draw(rng, 0.0, 1.0, 10_000)
    assert len(np.unique(tp)) == 2
    assert np.mean(tp < 0) == pytest.approx(0.05, abs=0.01)
    with pytest.raises(ValueError):
        get_sampler("cauchy")
    with pytest.raises(ValueError):
        SAMPLERS["two_point"](p=1.0)


def test_empirical_sampler_needs_samples():
    rng = np.random.default_rng(0)
    with pytest.raises(MissingDistribution):
        get_sampler("empirical").draw(rng, 0.0, 1.0, 5)
    pool = np.array([-3.0, 1.0, 2.0])
    x = get_sampler("empirical").draw(rng, 0.0, 1.0, 1000, pool)
    assert set(np.unique(x)) <= set(pool)


def test_gaussian_tight_hour_matches_target():
    k = inverse_cdf_bound("gaussian", 0.01)
    for hour in range(5):
        h = sample_hns(record(k, hour=hour), "gaussian", n=100_000, seed=3).hns
        assert abs(h - 0.99) <= binomial_band(0.99, 100_000, 4.0)


def test_deterministic_hour_is_coin_flip():
    h = sample_hns(record(0.0), "gaussian", n=100_000).hns
    assert abs(h - 0.5) <= binomial_band(0.5, 100_000, 4.0)


@pytest.mark.parametrize("name", ["gaussian", "shifted_exponential", "two_point", "uniform",
                                  "bimodal"])
def test_dro_bound_holds_for_any_law(name):
    k = inverse_cdf_bound("dro", 0.01)
    assert sample_hns(record(k), name, n=50_000).hns >= 0.99


@pytest.mark.parametrize("name", ["gaussian", "shifted_exponential", "uniform"])
def test_unimodal_bound_holds_for_unimodal_laws(name):
    k = inverse_cdf_bound("unimodal", 0.01)
    assert sample_hns(record(k), name, n=50_000).hns >= 0.99


def test_hns_reproducible_per_hour():
    k = inverse_cdf_bound("gaussian", 0.01)
    a = sample_hns(record(k, hour=2), n=20_000, seed=1).hns
    assert a == sample_hns(record(k, hour=2), n=20_000, seed=1).hns
    assert a != sample_hns(record(k, hour=3), n=20_000, seed=1).hns


def test_zero_dispersion_within_tolerance_is_secure():
    rec = record(0.0, sigma=[0, 0, 0])
    rec.r_ev_sched_gw += 1e-9
    assert sample_hns(rec, "gaussian", n=100).hns == 1.0
    rec.r_ev_sched_gw += 1e-4
    assert sample_hns(rec, "gaussian", n=100).hns == 0.0


def test_idle_fleet_ignored():
    rng = np.random.default_rng(0)
    r = delivered_response([0.0, 1.0], [10.0, 5.0], [0.0, 0.0], [100.0, 0.0], "gaussian", 50, rng)
    np.testing.assert_array_equal(r, 5.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=300), st.floats(0.001, 1.0))
def test_lower_quantile_is_order_statistic(vals, p):
    q = lower_quantile(np.array(vals), p)
    v = np.sort(vals)
    assert np.sum(v <= q) >= math.ceil(p * len(v))
    assert np.sum(v < q) < max(math.ceil(p * len(v)), 1)


def test_lower_quantile_examples():
    v = np.arange(1, 101, dtype=float)
    assert lower_quantile(v, 0.01) == 1.0 and lower_quantile(v, 0.05) == 5.0
    with pytest.raises(ValueError):
        lower_quantile(v, 0.0)


def _tight_nadir_record(fp, r_ev=0.9):
    case = FrequencyCase(1.0, r_ev, 0.0, 1.2, 1.8)
    h = tight_inertia(case, fp)
    return SimpleNamespace(hour=0, inertia_gws=h, r_nd=0.0, r_g=1.2, pl=1.8, r_ev_sched_gw=r_ev,
                           c=[r_ev / 1000.0], n0=[1000.0], mu=[0.0], sigma=[0.0])


def test_nadir_at_scheduled_delivery_is_tight():
    fp = FrequencyParams(t_del=0.0)
    rec = _tight_nadir_record(fp)
    chk = nadir_for_delivery(rec, rec.r_ev_sched_gw, fp)
    assert chk.nadir_hz == pytest.approx(fp.f0 - fp.delta_f_max, abs=1e-3)
    assert chk.secure or abs(chk.margin_hz) < 1e-6
    worse = nadir_for_delivery(rec, 0.7 * rec.r_ev_sched_gw, fp)
    assert worse.margin_hz < -1e-3 and not worse.secure


def test_crosscheck_uses_lower_quantile():
    fp = FrequencyParams(t_del=0.0)
    rec = _tight_nadir_record(fp)
    rec.sigma = [30.0]
    rec.n0, rec.mu = [1000.0 + 2.33 * 30], [0.0]    # 1st percentile close to the scheduled 1000
    chk = crosscheck_nadir(rec, fp, percentile=0.01, sampler="gaussian", n=200_000)
    assert chk.delivery_gw == pytest.approx(0.9, rel=2e-3)
    assert abs(chk.margin_hz) < 5e-3


def test_reports_round_trip(tmp_path):
    recs = [HnsRecord(h, 0.1 * h, 0.99 + 0.001 * h, "gaussian", 1000, h % 2 == 0, "joint")
            for h in range(6)]
    files = emit_report(tmp_path, "abc", runs={"joint": {"total_cost": 1.0}}, hns=recs)
    assert {p.name for p in files} == {"hns.csv", "hns_summary.csv", "summary.json"}
    back = read_hns_csv(tmp_path / "hns.csv")
    assert back == recs
    summ = hns_summary(recs)
    assert summ[0]["hours"] == 5 and summ[0]["min"] == pytest.approx(0.991)
    assert (tmp_path / "hns.csv").read_text().startswith("# format_version 1 config_hash abc")
