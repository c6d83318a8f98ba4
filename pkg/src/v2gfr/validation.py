"""Monte Carlo checks of scheduled EV response and time-domain nadir cross-checks.

For a solved hour, the deliverable EV response of draw ``j`` is
``R_j = sum_i g_i (n0_i + dN_ij)`` and the hourly nadir security is the
fraction of draws with ``R_j >= R̄``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .freq import FrequencyCase, FrequencyParams, NoArrest, simulate_trajectory

FORMAT_VERSION = 1
DEFAULT_SAMPLES = 100_000
# delivery within the solver feasibility tolerance of R̄ (GW, relative above 1 GW) counts as secure
DELIVERY_TOL = 1e-7


class MissingDistribution(LookupError):
    """The empirical sampler needs the hour's ΔN samples."""


# --- samplers ------------------------------------------------------------------
# Each draws n values of ΔN with the requested mean and standard deviation.

@dataclass(frozen=True)
class Sampler:
    name: str
    unimodal: bool

    def draw(self, rng: np.random.Generator, mu: float, sigma: float, n: int,
             samples: Optional[np.ndarray] = None) -> np.ndarray:
        raise NotImplementedError


class Empirical(Sampler):
    def __init__(self):
        super().__init__("empirical", unimodal=False)

    def draw(self, rng, mu, sigma, n, samples=None):
        if samples is None or len(samples) == 0:
            raise MissingDistribution("empirical sampler needs the hour's ΔN samples")
        return rng.choice(np.asarray(samples, dtype=float), size=n, replace=True)


class Gaussian(Sampler):
    def __init__(self):
        super().__init__("gaussian", unimodal=True)

    def draw(self, rng, mu, sigma, n, samples=None):
        return mu + sigma * rng.standard_normal(n)


class ShiftedExponential(Sampler):
    """``mu - sigma + sigma * Exp(1)``: right-skewed with a hard lower edge."""

    def __init__(self):
        super().__init__("shifted_exponential", unimodal=True)

    def draw(self, rng, mu, sigma, n, samples=None):
        return mu - sigma + sigma * rng.standard_exponential(n)


class Uniform(Sampler):
    def __init__(self):
        super().__init__("uniform", unimodal=True)

    def draw(self, rng, mu, sigma, n, samples=None):
        half = math.sqrt(3.0) * sigma
        return rng.uniform(mu - half, mu + half, n)


class TwoPoint(Sampler):
    """Low value with probability ``p``, high value otherwise, moments matched."""

    def __init__(self, p: float = 0.05):
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        super().__init__("two_point", unimodal=False)
        object.__setattr__(self, "p", p)

    def draw(self, rng, mu, sigma, n, samples=None):
        p = self.p
        lo = mu - sigma * math.sqrt((1 - p) / p)
        hi = mu + sigma * math.sqrt(p / (1 - p))
        return np.where(rng.random(n) < p, lo, hi)


class Bimodal(Sampler):
    """Equal mixture of ``N(mu -/+ a sigma, (1 - a^2) sigma^2)``."""

    def __init__(self, a: float = 0.95):
        if not 0 <= a < 1:
            raise ValueError("a must lie in [0, 1)")
        super().__init__("bimodal", unimodal=False)
        object.__setattr__(self, "a", a)

    def draw(self, rng, mu, sigma, n, samples=None):
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        sd = sigma * math.sqrt(1 - self.a ** 2)
        return mu + sign * self.a * sigma + sd * rng.standard_normal(n)


SAMPLERS: Dict[str, Callable[[], Sampler]] = {
    "empirical": Empirical, "gaussian": Gaussian, "shifted_exponential": ShiftedExponential,
    "uniform": Uniform, "two_point": TwoPoint, "bimodal": Bimodal,
}


def get_sampler(name) -> Sampler:
    if isinstance(name, Sampler):
        return name
    try:
        return SAMPLERS[name]()
    except KeyError:
        raise ValueError(f"unknown sampler {name!r}; choose from {sorted(SAMPLERS)}") from None


# --- hourly nadir security -----------------------------------------------------------

@dataclass
class HnsRecord:
    hour: int
    r_bar: float
    hns: float
    sampler: str
    n_samples: int
    tight: bool = False
    mode: str = ""


def delivered_response(g: Sequence[float], n0: Sequence[float], mu: Sequence[float],
                       sigma: Sequence[float], sampler, n: int, rng: np.random.Generator,
                       samples: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """``n`` draws of ``sum_i g_i (n0_i + dN_i)`` with fleets drawn independently.

    The mean is clamped at ``-n0`` before sampling, as in the schedule.
    """
    sampler = get_sampler(sampler)
    total = np.zeros(n)
    for i, (gi, ni, mi, si) in enumerate(zip(g, n0, mu, sigma)):
        if gi == 0:
            continue
        mi = max(mi, -ni)
        s_i = None if samples is None else samples[i]
        if si == 0 and sampler.name != "empirical":
            dn = np.full(n, mi)
        else:
            dn = sampler.draw(rng, mi, si, n, s_i)
        total += gi * (ni + dn)
    return total


def sample_hns(record, sampler="gaussian", n: int = DEFAULT_SAMPLES, seed: int = 0,
               samples: Optional[Sequence[np.ndarray]] = None) -> HnsRecord:
    """Hourly nadir security of one solved hour.

    ``record`` needs ``hour, r_ev_sched_gw, c, n0, mu, sigma`` (an hour record
    from the rolling simulator). ``samples`` are the per-fleet empirical ΔN
    draws for the empirical sampler.
    """
    if n <= 0:
        raise ValueError("n must be > 0")
    sampler = get_sampler(sampler)
    r_bar = float(record.r_ev_sched_gw)
    tight, mode = bool(getattr(record, "tight", False)), str(getattr(record, "mode", ""))
    if r_bar <= 0:
        return HnsRecord(record.hour, r_bar, 1.0, sampler.name, n, tight, mode)
    rng = np.random.default_rng([seed, record.hour])
    r = delivered_response(record.c, record.n0, record.mu, record.sigma, sampler, n, rng, samples)
    secure = r >= r_bar - DELIVERY_TOL * max(1.0, r_bar)
    return HnsRecord(record.hour, r_bar, float(np.mean(secure)), sampler.name, n, tight, mode)


def binomial_band(p: float, n: int, width: float = 3.0) -> float:
    return width * math.sqrt(p * (1 - p) / n)


def hns_summary(records: Iterable[HnsRecord], only_positive: bool = True) -> List[dict]:
    """Quartiles, min, max and mean of hns per (mode, sampler)."""
    groups: Dict[tuple, List[float]] = {}
    for r in records:
        if only_positive and r.r_bar <= 0:
            continue
        groups.setdefault((r.mode, r.sampler), []).append(r.hns)
    rows = []
    for (mode, sampler), vals in sorted(groups.items()):
        v = np.array(vals)
        q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
        rows.append({"mode": mode, "sampler": sampler, "hours": len(v), "min": float(v.min()),
                     "q1": float(q1), "median": float(med), "q3": float(q3),
                     "max": float(v.max()), "mean": float(v.mean())})
    return rows


# --- time-domain cross-check -------------------------------------------------------------

def lower_quantile(values: np.ndarray, p: float) -> float:
    """Order statistic ``ceil(p n)`` (1-based) of ``values``."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    v = np.sort(np.asarray(values, dtype=float))
    idx = max(int(math.ceil(p * len(v))), 1) - 1
    return float(v[idx])


@dataclass
class NadirCheck:
    hour: int
    delivery_gw: float
    r_bar: float
    nadir_hz: float        # absolute frequency at the nadir
    nadir_time_s: float
    margin_hz: float       # nadir deviation above -Δf_max; negative is a breach
    secure: bool


def nadir_for_delivery(record, delivery: float, params: FrequencyParams,
                       horizon_s: Optional[float] = None) -> NadirCheck:
    case = FrequencyCase(h=float(record.inertia_gws), r_ev=max(float(delivery), 0.0),
                         r_nd=float(record.r_nd), r_g=float(record.r_g), pl_max=float(record.pl))
    horizon = horizon_s or 4.0 * params.t2
    traj = simulate_trajectory(case, params, horizon_s=horizon, sample_dt=horizon / 200)
    margin = traj.nadir_value + params.delta_f_max
    return NadirCheck(record.hour, case.r_ev, float(record.r_ev_sched_gw),
                      params.f0 + traj.nadir_value, traj.nadir_time, margin, margin >= -1e-9)


def crosscheck_nadir(record, params: FrequencyParams, percentile: float = 0.01,
                     sampler="empirical", n: int = DEFAULT_SAMPLES, seed: int = 0,
                     samples: Optional[Sequence[np.ndarray]] = None) -> NadirCheck:
    """Simulate the outage with the ``percentile`` lower quantile of EV delivery.

    Raises ``NoArrest`` when that delivery cannot arrest the frequency.
    """
    rng = np.random.default_rng([seed, record.hour, 1])
    r = delivered_response(record.c, record.n0, record.mu, record.sigma, sampler, n, rng, samples)
    return nadir_for_delivery(record, lower_quantile(r, percentile), params)


# --- reports -----------------------------------------------------------------------------

def write_hns_csv(path, records: Sequence[HnsRecord], config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version {FORMAT_VERSION} config_hash {config_hash}\n")
        fields = list(HnsRecord.__dataclass_fields__)
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in records:
            w.writerow(asdict(r))


def read_hns_csv(path) -> List[HnsRecord]:
    with open(path) as fh:
        if not fh.readline().startswith("# format_version"):
            raise ValueError(f"{path}: missing format_version header")
        out = []
        for row in csv.DictReader(fh):
            out.append(HnsRecord(int(row["hour"]), float(row["r_bar"]), float(row["hns"]),
                                 row["sampler"], int(row["n_samples"]), row["tight"] == "True",
                                 row["mode"]))
    return out


def run_summary(result) -> dict:
    """Totals of a rolling run (``SimulationResult``)."""
    col = result.column
    r_bar = col("r_ev_sched_gw")
    return {
        "hours": len(result.records),
        "mode": result.mode,
        "total_cost": result.total_cost,
        "load_shed_gwh": float(col("load_shed_gwh").sum()),
        "wind_curt_gwh": float(col("wind_curt_gwh").sum()),
        "solar_curt_gwh": float(col("solar_curt_gwh").sum()),
        "mean_inertia_gws": float(col("inertia_gws").mean()),
        "mean_r_ev_gw": float(r_bar.mean()),
        "ev_slack_gwh": float(col("ev_slack_gwh").sum()),
        "tight_hours": int(col("tight").sum()),
        "fallback_hours": int(sum(r.mode != result.mode for r in result.records)),
        "max_residual_gw": result.max_residual,
    }


def emit_report(out_dir, config_hash: str, runs: Optional[Dict[str, dict]] = None,
                hns: Optional[Sequence[HnsRecord]] = None,
                sweeps: Optional[Dict[str, List[dict]]] = None,
                nadir: Optional[Sequence[NadirCheck]] = None) -> List[Path]:
    """Write summary JSON plus CSV tables; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    doc = {"format_version": FORMAT_VERSION, "config_hash": config_hash,
           "runs": runs or {}, "sweeps": sweeps or {}}
    if hns:
        doc["hns_summary"] = hns_summary(hns)
        p = out / "hns.csv"
        write_hns_csv(p, hns, config_hash)
        written.append(p)
        p = out / "hns_summary.csv"
        _write_rows(p, doc["hns_summary"], config_hash)
        written.append(p)
    if nadir:
        doc["nadir"] = [asdict(c) for c in nadir]
    for name, rows in (sweeps or {}).items():
        p = out / f"sweep_{name}.csv"
        _write_rows(p, rows, config_hash)
        written.append(p)
    p = out / "summary.json"
    p.write_text(json.dumps(doc, indent=2, default=float))
    written.append(p)
    return written


def _write_rows(path, rows: Sequence[dict], config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format_version {FORMAT_VERSION} config_hash {config_hash}\n")
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


__all__ = [
    "Sampler", "SAMPLERS", "get_sampler", "HnsRecord", "MissingDistribution",
    "delivered_response", "sample_hns", "binomial_band", "hns_summary",
    "lower_quantile", "NadirCheck", "nadir_for_delivery", "crosscheck_nadir",
    "write_hns_csv", "read_hns_csv", "run_summary", "emit_report", "NoArrest",
]
