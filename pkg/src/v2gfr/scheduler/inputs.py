"""Per-fleet connectivity inputs and net-demand series for a run.

History days ``[0, history_days)`` of each fleet's event data feed the ΔN
distributions; the following days are the realisation the rolling simulator
steps through. Counts are scaled by ``n_evs / fleet_size(data)``.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..connectivity import (ConnectivitySeries, DistributionTable, build_distribution_table,
                            build_series, filter_active, fleet_size, ingest_events)
from ..synthetic import NetDemandSeries, synthetic_events, synthetic_net_demand
from .config import FleetConfig, SystemConfig

log = logging.getLogger(__name__)


@dataclass
class FleetData:
    cfg: FleetConfig
    scale: float
    table: DistributionTable
    hourly: ConnectivitySeries
    day_class: np.ndarray        # per day of the hourly series
    flow_in_mean: np.ndarray     # [class, hour of day], unscaled
    flow_out_mean: np.ndarray
    offset_hours: int            # hourly index of simulation hour 0
    sigma_multiplier: float = 1.0

    def _abs(self, t: int) -> int:
        i = self.offset_hours + t
        if i >= len(self.hourly.counts):
            raise IndexError(f"fleet {self.cfg.name}: hour {t} beyond connectivity data")
        return i

    def n0(self, t: int) -> float:
        return float(self.hourly.counts[self._abs(t)]) * self.scale

    def flows(self, t: int) -> Tuple[float, float]:
        i = self._abs(t)
        return float(self.hourly.n_in[i]) * self.scale, float(self.hourly.n_out[i]) * self.scale

    def decision_class(self, t: int) -> int:
        return int(self.day_class[self._abs(t) // 24])

    def moments(self, t: int, k: int) -> Tuple[float, float]:
        """Scaled (mu, sigma) of ΔN over the window ``k`` hours after decision hour ``t``."""
        mu, sd = self.table.moments(self.decision_class(t), self._abs(t) % 24, k, scale=self.scale)
        return mu, sd * self.sigma_multiplier

    def forecast_flows(self, t: int, k: int) -> Tuple[float, float]:
        i = self._abs(t) + k
        c = int(self.day_class[min(i // 24, len(self.day_class) - 1)])
        h = i % 24
        return self.flow_in_mean[c, h] * self.scale, self.flow_out_mean[c, h] * self.scale

    def root_samples(self, t: int) -> np.ndarray:
        """Scaled empirical ΔN samples of the root window at hour ``t``."""
        return self.table.root_samples(self.decision_class(t), self._abs(t) % 24) * self.scale


def _flow_means(hourly: ConnectivitySeries, days: int):
    cls = hourly.day_classes()[:days]
    n_in = hourly.n_in[:days * 24].reshape(days, 24)
    n_out = hourly.n_out[:days * 24].reshape(days, 24)
    fin = np.zeros((2, 24))
    fout = np.zeros((2, 24))
    for c in (0, 1):
        sel = cls == c
        if sel.any():
            fin[c] = n_in[sel].mean(axis=0)
            fout[c] = n_out[sel].mean(axis=0)
    return fin, fout


@functools.lru_cache(maxsize=16)
def _fleet_data_cached(cfg: FleetConfig, history_days: int, total_days: int, start: str,
                       horizon: int) -> tuple:
    if cfg.events:
        events = ingest_events(cfg.events).events
    else:
        events = synthetic_events(cfg.kind, cfg.data_chargers, total_days, start=start, seed=cfg.seed)
    size = fleet_size(events)
    if size == 0:
        raise ValueError(f"fleet {cfg.name}: no active chargers in the data")
    active = filter_active(events)
    s5 = build_series(active, "5min", start=start, days=total_days)
    hourly = build_series(active, "hourly", start=start, days=total_days)
    table = build_distribution_table(s5, horizon=horizon + 1, fleet=size, run_tests=False,
                                     day_range=(0, history_days))
    fin, fout = _flow_means(hourly, history_days)
    return size, table, hourly, fin, fout


def load_fleet(cfg: FleetConfig, config: SystemConfig, sim_days: int) -> FleetData:
    total = config.history_days + sim_days + 2
    size, table, hourly, fin, fout = _fleet_data_cached(
        cfg, config.history_days, total, config.start, config.horizon)
    return FleetData(cfg, cfg.n_evs / size, table, hourly, hourly.day_classes(), fin, fout,
                     offset_hours=24 * config.history_days,
                     sigma_multiplier=config.sigma_multiplier)


def load_net_demand(config: SystemConfig, hours: int) -> NetDemandSeries:
    start = np.datetime64(config.start, "D") + config.history_days
    return synthetic_net_demand(config.seed, hours + config.horizon + 1, config.net_demand,
                                start=str(start))
