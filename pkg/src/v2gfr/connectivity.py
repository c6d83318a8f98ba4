"""Charging-event ingestion and connected-EV statistics.

Timestamps are handled as integer minutes (numpy ``datetime64[m]``). A series
always spans whole days starting at midnight, so step ``i`` of a 5-minute
series falls on day ``i // 288``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .stattests import DegenerateSample, dip_test, shapiro_wilk

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STEP_5MIN = 5
STEP_HOURLY = 60
MIN_HISTORY_DAYS = 30
DAY_CLASSES = ("weekday", "weekend")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class ChargingEvent:
    charger_id: str
    connect_time: np.datetime64     # minute resolution
    disconnect_time: np.datetime64

    def __post_init__(self):
        if not self.disconnect_time > self.connect_time:
            raise ValueError("non-positive duration")


@dataclass
class IngestReport:
    events: List[ChargingEvent]
    rejects: List[Tuple[int, str]] = field(default_factory=list)  # (csv line, reason)

    @property
    def n_rejected(self) -> int:
        return len(self.rejects)


def parse_timestamp(text: str) -> np.datetime64:
    """ISO-8601 to naive UTC minutes; seconds are truncated."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.replace(second=0, microsecond=0), "m")


def ingest_events(path) -> IngestReport:
    """Read and validate an events CSV, rejecting bad rows with a reason.

    A row overlapping an already-accepted session of the same charger is
    rejected; sessions that merely touch (disconnect == next connect) are fine.
    """
    accepted: Dict[str, List[Tuple[int, int]]] = defaultdict(list)
    events: List[ChargingEvent] = []
    rejects: List[Tuple[int, str]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"charger_id", "connect_time", "disconnect_time"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise IngestError(f"{path}: header must contain {sorted(need)}")
        for line, row in enumerate(reader, start=2):
            try:
                c = parse_timestamp(row["connect_time"])
                d = parse_timestamp(row["disconnect_time"])
            except (TypeError, ValueError):
                rejects.append((line, "malformed timestamp"))
                continue
            if not d > c:
                rejects.append((line, "non-positive duration"))
                continue
            cid = row["charger_id"].strip()
            ci, di = int(c.astype(np.int64)), int(d.astype(np.int64))
            if any(ci < e and s < di for s, e in accepted[cid]):
                rejects.append((line, "overlap"))
                continue
            accepted[cid].append((ci, di))
            events.append(ChargingEvent(cid, c, d))
    if rejects:
        log.warning("%s: rejected %d rows", path, len(rejects))
    return IngestReport(events, rejects)


def write_events(events: Iterable[ChargingEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["charger_id", "connect_time", "disconnect_time"])
        for ev in events:
            w.writerow([ev.charger_id, str(ev.connect_time), str(ev.disconnect_time)])


# --- fleet size -------------------------------------------------------------

def _month_key(t: np.datetime64) -> np.datetime64:
    return t.astype("datetime64[M]")


def _months_spanned(events: Sequence[ChargingEvent]):
    first = min(ev.connect_time for ev in events)
    last = max(ev.connect_time for ev in events)
    return first, last, np.arange(_month_key(first), _month_key(last) + 1)


def _covered_days(month: np.datetime64, first: np.datetime64, last: np.datetime64) -> int:
    """Days of ``month`` inside the data span [day(first), day(last)]."""
    m0 = month.astype("datetime64[D]")
    m1 = (month + 1).astype("datetime64[D]")
    lo = max(m0, first.astype("datetime64[D]"))
    hi = min(m1, last.astype("datetime64[D]") + 1)
    return int((hi - lo).astype(int))


def active_charger_filter(events: Sequence[ChargingEvent], month) -> set:
    """Chargers with at least two events per week in ``month``.

    Weeks are ``days / 7`` over the days of the month covered by the data, so
    a partial first or last month is not penalised.
    """
    if not events:
        raise IngestError("no events")
    month = np.datetime64(month, "M")
    first, last, _ = _months_spanned(events)
    days = _covered_days(month, first, last)
    counts: Dict[str, int] = defaultdict(int)
    for ev in events:
        if _month_key(ev.connect_time) == month:
            counts[ev.charger_id] += 1
    if days <= 0 or not counts:
        raise IngestError(f"empty month {month}")
    need = 2.0 * days / 7.0
    return {cid for cid, n in counts.items() if n >= need - 1e-12}


def fleet_size(events: Sequence[ChargingEvent]) -> int:
    """Mean over spanned months of the active-charger count, rounded half up."""
    _, _, months = _months_spanned(events)
    sizes = [len(active_charger_filter(events, m)) for m in months]
    return int(math.floor(float(np.mean(sizes)) + 0.5))


def filter_active(events: Sequence[ChargingEvent]) -> List[ChargingEvent]:
    """Keep events of chargers that are active in the event's month."""
    _, _, months = _months_spanned(events)
    active = {m: active_charger_filter(events, m) for m in months}
    return [ev for ev in events if ev.charger_id in active[_month_key(ev.connect_time)]]


# --- series -----------------------------------------------------------------

@dataclass
class ConnectivitySeries:
    start: np.datetime64      # midnight, minute resolution
    step_minutes: int
    counts: np.ndarray        # int64 per step
    n_in: Optional[np.ndarray] = None   # hourly only: connections in (t-1h, t]
    n_out: Optional[np.ndarray] = None  # hourly only: disconnections in (t-1h, t]

    @property
    def steps_per_day(self) -> int:
        return 1440 // self.step_minutes

    @property
    def n_days(self) -> int:
        return len(self.counts) // self.steps_per_day

    @property
    def resolution(self) -> str:
        return "5min" if self.step_minutes == STEP_5MIN else "hourly"

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + np.arange(len(self.counts)) * np.timedelta64(self.step_minutes, "m")

    @property
    def delta_n_hat(self) -> np.ndarray:
        """Net change at each step start; zero for the first step."""
        return np.diff(self.counts, prepend=self.counts[:1])

    def day_classes(self) -> np.ndarray:
        """Class of each day: 0 weekday, 1 weekend."""
        days = self.start.astype("datetime64[D]") + np.arange(self.n_days)
        # 1970-01-01 was a Thursday: weekday index 0 = Monday
        dow = (days.astype(np.int64) + 3) % 7
        return (dow >= 5).astype(np.int8)

    def step_day_class(self) -> np.ndarray:
        return np.repeat(self.day_classes(), self.steps_per_day)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# format_version {FORMAT_VERSION}\n")
            w = csv.writer(fh)
            hourly = self.n_in is not None
            w.writerow(["timestamp", "count"] + (["n_in", "n_out"] if hourly else []))
            for i, ts in enumerate(self.timestamps):
                row = [str(ts), int(self.counts[i])]
                if hourly:
                    row += [int(self.n_in[i]), int(self.n_out[i])]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "ConnectivitySeries":
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        rows = list(csv.DictReader(lines))
        if not rows:
            raise IngestError(f"{path}: empty series")
        ts = np.array([np.datetime64(r["timestamp"], "m") for r in rows])
        step = int((ts[1] - ts[0]).astype(int)) if len(ts) > 1 else STEP_HOURLY
        counts = np.array([int(r["count"]) for r in rows], dtype=np.int64)
        n_in = n_out = None
        if "n_in" in rows[0]:
            n_in = np.array([int(r["n_in"]) for r in rows], dtype=np.int64)
            n_out = np.array([int(r["n_out"]) for r in rows], dtype=np.int64)
        return cls(ts[0], step, counts, n_in, n_out)


def _span(events, start, days):
    if start is None:
        if not events:
            raise IngestError("need events or an explicit start to place the series")
        start = min(ev.connect_time for ev in events).astype("datetime64[D]")
    start = np.datetime64(start, "D")
    if days is None:
        end = max(ev.disconnect_time for ev in events).astype("datetime64[D]") + 1 if events else start + 1
        days = int((end - start).astype(int))
    return start.astype("datetime64[m]"), days


def build_series(events: Sequence[ChargingEvent], resolution: str = "5min",
                 start=None, days: Optional[int] = None) -> ConnectivitySeries:
    """Count events whose [connect, disconnect) covers each step start."""
    step = {"5min": STEP_5MIN, "hourly": STEP_HOURLY}[resolution]
    t0, days = _span(events, start, days)
    n = days * 1440 // step
    if events:
        c = np.array([ev.connect_time for ev in events]).astype(np.int64) - t0.astype(np.int64)
        d = np.array([ev.disconnect_time for ev in events]).astype(np.int64) - t0.astype(np.int64)
    else:
        c = d = np.zeros(0, dtype=np.int64)
    # first step start >= connect, first step start >= disconnect (exclusive end)
    i0 = np.clip(-(-c // step), 0, n)
    i1 = np.clip(-(-d // step), 0, n)
    diff = np.zeros(n + 1, dtype=np.int64)
    np.add.at(diff, i0, 1)
    np.add.at(diff, i1, -1)
    counts = np.cumsum(diff[:n])
    series = ConnectivitySeries(t0, step, counts)
    if resolution == "hourly":
        # flows in (T_{t-1}, T_t] land on the step whose start first reaches them
        inside_in = (c > 0) & (i0 < n)
        inside_out = (d > 0) & (i1 < n)
        series.n_in = np.bincount(i0[inside_in], minlength=n)[:n].astype(np.int64)
        series.n_out = np.bincount(i1[inside_out], minlength=n)[:n].astype(np.int64)
    return series


# --- empirical distributions ------------------------------------------------

@dataclass
class DeltaNDistribution:
    t_d: int                  # decision hour of day
    t_s: Tuple[int, int]      # scheduling window [start, end) in hours from decision-day midnight
    day_class: str
    samples: np.ndarray
    n_days: int
    insufficient_history: bool = False
    shapiro_p: Optional[float] = None
    dip: Optional[float] = None
    dip_p: Optional[float] = None

    @property
    def mu(self) -> float:
        return float(np.mean(self.samples)) if self.samples.size else 0.0

    @property
    def sigma(self) -> float:
        return float(np.std(self.samples)) if self.samples.size else 0.0

    def run_tests(self, n_boot: int = 10_000, seed: int = 0) -> "DeltaNDistribution":
        try:
            self.shapiro_p = shapiro_wilk(self.samples)
            self.dip, self.dip_p = dip_test(self.samples, n_boot=n_boot, seed=seed)
        except DegenerateSample as exc:
            log.info("tests skipped for t_d=%s t_s=%s %s: %s", self.t_d, self.t_s, self.day_class, exc)
        return self

    def to_dict(self, with_samples: bool = True) -> dict:
        out = {"t_d": self.t_d, "t_s": list(self.t_s), "day_class": self.day_class,
               "mu": self.mu, "sigma": self.sigma, "n_samples": int(self.samples.size),
               "n_days": self.n_days, "insufficient_history": self.insufficient_history,
               "shapiro_p": self.shapiro_p, "dip": self.dip, "dip_p": self.dip_p}
        if with_samples:
            out["samples"] = [int(v) for v in self.samples]
        return out


def _window_samples(series, t_d, t_s, day_class, max_day=None):
    if series.step_minutes != STEP_5MIN:
        raise ValueError("empirical distributions need the 5-minute series")
    a, b = t_s
    if not (0 <= t_d < 24 and t_d <= a < b):
        raise ValueError(f"need 0 <= t_d < 24 and t_d <= t_s start < end, got {t_d}, {t_s}")
    spd = series.steps_per_day
    cls = DAY_CLASSES.index(day_class)
    classes = series.day_classes()
    if max_day is not None:
        classes = classes[:max_day]
    days = np.flatnonzero(classes == cls)
    offs = np.arange(12 * a, 12 * b)
    last = days * spd + offs[-1]
    days = days[last < len(series.counts)]
    base = series.counts[days * spd + 12 * t_d]
    vals = series.counts[days[:, None] * spd + offs[None, :]] - base[:, None]
    return vals.ravel(), len(days)


def empirical_delta_n(series: ConnectivitySeries, t_d: int, t_s: Tuple[int, int],
                      day_class: str) -> DeltaNDistribution:
    """ΔN samples, one per 5-minute step of ``t_s`` on each history day of the class.

    ``t_s`` may run past midnight; days whose window leaves the series are
    dropped.
    """
    samples, n_days = _window_samples(series, t_d, tuple(t_s), day_class)
    return DeltaNDistribution(t_d, (int(t_s[0]), int(t_s[1])), day_class, samples, n_days,
                              insufficient_history=n_days < MIN_HISTORY_DAYS)


@dataclass
class DistributionTable:
    """Moments for every decision hour, look-ahead offset and day class.

    ``mu[c, t_d, k]`` / ``sigma[c, t_d, k]`` describe ΔN over the hour window
    ``[t_d + k, t_d + k + 1)``. Root cells (``k = 0``) also keep samples and
    test results.
    """
    mu: np.ndarray
    sigma: np.ndarray
    roots: Dict[Tuple[int, int], DeltaNDistribution]
    fleet_size: int

    @property
    def horizon(self) -> int:
        return self.mu.shape[2]

    def moments(self, day_class: int, t_d: int, k: int, scale: float = 1.0):
        k = min(k, self.horizon - 1)
        return self.mu[day_class, t_d, k] * scale, self.sigma[day_class, t_d, k] * scale

    def root_samples(self, day_class: int, t_d: int) -> np.ndarray:
        return self.roots[(day_class, t_d)].samples

    def to_json(self, path, with_samples: bool = True) -> None:
        cells = []
        for c, cls in enumerate(DAY_CLASSES):
            for t_d in range(24):
                for k in range(self.horizon):
                    if k == 0:
                        cells.append(self.roots[(c, t_d)].to_dict(with_samples))
                    else:
                        cells.append({"t_d": t_d, "t_s": [t_d + k, t_d + k + 1], "day_class": cls,
                                      "mu": float(self.mu[c, t_d, k]),
                                      "sigma": float(self.sigma[c, t_d, k])})
        with open(path, "w") as fh:
            json.dump({"format_version": FORMAT_VERSION, "fleet_size": self.fleet_size,
                       "horizon": self.horizon, "cells": cells}, fh)

    @classmethod
    def from_json(cls, path) -> "DistributionTable":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_version") != FORMAT_VERSION:
            raise IngestError(f"{path}: unsupported format_version {doc.get('format_version')}")
        H = int(doc["horizon"])
        mu = np.zeros((2, 24, H))
        sigma = np.zeros((2, 24, H))
        roots = {}
        for cell in doc["cells"]:
            c = DAY_CLASSES.index(cell["day_class"])
            t_d = int(cell["t_d"])
            k = int(cell["t_s"][0]) - t_d
            mu[c, t_d, k] = cell["mu"]
            sigma[c, t_d, k] = cell["sigma"]
            if k == 0:
                roots[(c, t_d)] = DeltaNDistribution(
                    t_d, tuple(cell["t_s"]), cell["day_class"],
                    np.asarray(cell.get("samples", []), dtype=np.int64), int(cell["n_days"]),
                    bool(cell["insufficient_history"]), cell["shapiro_p"], cell["dip"], cell["dip_p"])
        return cls(mu, sigma, roots, int(doc["fleet_size"]))


def build_distribution_table(series: ConnectivitySeries, horizon: int = 24,
                             fleet: Optional[int] = None, run_tests: bool = True,
                             n_boot: int = 10_000, day_range: Optional[Tuple[int, int]] = None
                             ) -> DistributionTable:
    """All (class, t_d, offset) cells from a 5-minute history series.

    ``day_range`` restricts the history to days ``[lo, hi)`` of the series,
    which keeps realisation days out of the statistics.
    """
    if day_range is not None:
        lo, hi = day_range
        spd = series.steps_per_day
        # keep one extra day so windows crossing midnight still resolve
        hi_ext = min(hi + 1, series.n_days)
        sub = ConnectivitySeries(series.start + np.timedelta64(lo * 1440, "m"), series.step_minutes,
                                 series.counts[lo * spd:hi_ext * spd])
        series = sub
        n_days_keep = hi - lo
    else:
        n_days_keep = series.n_days
    mu = np.zeros((2, 24, horizon))
    sigma = np.zeros((2, 24, horizon))
    roots = {}
    for c, cls in enumerate(DAY_CLASSES):
        for t_d in range(24):
            for k in range(horizon):
                a = t_d + k
                vals, n_days = _window_samples(series, t_d, (a, a + 1), cls, max_day=n_days_keep)
                if vals.size:
                    mu[c, t_d, k] = vals.mean()
                    sigma[c, t_d, k] = vals.std()
                if k == 0:
                    dist = DeltaNDistribution(t_d, (a, a + 1), cls, vals, n_days,
                                              insufficient_history=n_days < MIN_HISTORY_DAYS)
                    if run_tests:
                        dist.run_tests(n_boot=n_boot)
                    roots[(c, t_d)] = dist
    if fleet is None:
        fleet = int(series.counts.max()) if series.counts.size else 0
    return DistributionTable(mu, sigma, roots, fleet)
