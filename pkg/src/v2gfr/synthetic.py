"""Seeded synthetic inputs: charging events and wind/solar/demand series.

These stand in for field charging data and a full statistical wind model.
Domestic chargers connect in the evening and leave in the morning; work
chargers see weekday office-hours sessions and little weekend use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import List, Sequence

import numpy as np
from scipy import special

from .connectivity import ChargingEvent


@dataclass(frozen=True)
class EventProfile:
    """Session timing for one charger kind; hours are relative to the connect day."""
    connect_mean: float
    connect_sd: float
    connect_range: tuple
    stay_end_mean: float      # disconnect hour (> 24 means next day)
    stay_end_sd: float
    stay_end_range: tuple
    p_weekday: float
    p_weekend: float
    weekend_shift: float = 0.0  # hours added to connect/disconnect on weekends


DOMESTIC = EventProfile(18.5, 1.75, (13.0, 23.5), 31.5, 1.0, (28.0, 36.0), 0.80, 0.60,
                        weekend_shift=1.5)
WORK = EventProfile(8.5, 0.75, (6.0, 11.0), 17.0, 1.25, (12.5, 21.0), 0.85, 0.05)
PROFILES = {"domestic": DOMESTIC, "work": WORK}


def _truncnorm(rng, mean, sd, lo, hi, size):
    x = rng.normal(mean, sd, size)
    return np.clip(x, lo, hi)


def synthetic_events(kind: str, n_chargers: int, days: int, start="2030-01-06",
                     seed: int = 0, inactive_fraction: float = 0.15,
                     inactive_rate: float = 0.1) -> List[ChargingEvent]:
    """One session at most per charger per day, never overlapping.

    ``inactive_fraction`` of chargers plug in only ``inactive_rate`` of days,
    so they fall below the two-sessions-per-week activity threshold.
    """
    prof = PROFILES[kind]
    rng = np.random.default_rng(seed)
    start = np.datetime64(start, "D")
    day_idx = np.arange(days)
    dow = ((start + day_idx).astype(np.int64) + 3) % 7
    weekend = dow >= 5
    inactive = rng.random(n_chargers) < inactive_fraction
    p_day = np.where(weekend, prof.p_weekend, prof.p_weekday)[None, :]
    p = np.where(inactive[:, None], inactive_rate, p_day)
    active = rng.random((n_chargers, days)) < p
    ci, di = np.nonzero(active)
    shift = np.where(weekend[di], prof.weekend_shift, 0.0)
    c_h = _truncnorm(rng, prof.connect_mean, prof.connect_sd, *prof.connect_range, ci.size) + shift
    e_h = _truncnorm(rng, prof.stay_end_mean, prof.stay_end_sd, *prof.stay_end_range, ci.size) + shift
    e_h = np.maximum(e_h, c_h + 0.25)
    base = (start.astype("datetime64[m]").astype(np.int64) + di * 1440)
    c_min = base + np.round(c_h * 60).astype(np.int64)
    d_min = base + np.round(e_h * 60).astype(np.int64)
    # overnight sessions must end before the same charger's next connection
    order = np.lexsort((c_min, ci))
    ci, c_min, d_min = ci[order], c_min[order], d_min[order]
    same = ci[1:] == ci[:-1]
    clash = same & (d_min[:-1] > c_min[1:])
    d_min[:-1][clash] = c_min[1:][clash]
    keep = d_min > c_min
    out = [ChargingEvent(f"{kind[0]}{int(c):05d}", np.datetime64(int(a), "m"), np.datetime64(int(b), "m"))
           for c, a, b in zip(ci[keep], c_min[keep], d_min[keep])]
    out.sort(key=lambda ev: (ev.connect_time, ev.charger_id))
    return out


# --- net demand --------------------------------------------------------------

@dataclass(frozen=True)
class NetDemandParams:
    wind_gw: float = 40.0
    solar_gw: float = 20.0
    demand_base_gw: float = 33.0
    demand_swing_gw: float = 9.0
    weekend_factor: float = 0.9
    rho: float = 0.97           # hourly autocorrelation of the latent wind state
    noise_scale: float = 1.0    # latent std; 1 gives the target mean load factor
    wind_load_factor: float = 0.35
    solar_load_factor: float = 0.11
    sunrise_h: float = 6.0
    sunset_h: float = 20.0

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if not 0 < self.wind_load_factor < 1 or not 0 < self.solar_load_factor < 1:
            raise ValueError("load factors must lie in (0, 1)")
        if self.wind_gw < 0 or self.solar_gw < 0 or self.demand_base_gw <= 0:
            raise ValueError("capacities must be >= 0 and base demand > 0")
        if not 0 <= self.sunrise_h < self.sunset_h <= 24:
            raise ValueError("need 0 <= sunrise < sunset <= 24")

    @property
    def wind_power(self) -> float:
        """Exponent p with E[U^p] = 1/(p+1) equal to the target load factor."""
        return 1.0 / self.wind_load_factor - 1.0


def demand_profile(hours: np.ndarray, weekend: np.ndarray, params: NetDemandParams) -> np.ndarray:
    """Diurnal demand (GW): morning and evening peaks over a night trough."""
    h = np.asarray(hours, dtype=float) % 24
    shape = (0.55 * np.exp(-0.5 * ((h - 8.5) / 2.0) ** 2)
             + 1.0 * np.exp(-0.5 * ((h - 18.0) / 2.5) ** 2)
             - 0.8 * np.exp(-0.5 * ((h - 3.5) / 2.5) ** 2))
    d = params.demand_base_gw + params.demand_swing_gw * shape
    return d * np.where(weekend, params.weekend_factor, 1.0)


def solar_profile(hours: np.ndarray, params: NetDemandParams) -> np.ndarray:
    """Clamped sinusoid scaled so the daily mean capacity factor is the target."""
    grid = np.arange(24)
    def raw(h):
        h = np.asarray(h) % 24
        day = (h > params.sunrise_h) & (h < params.sunset_h)
        return np.where(day, np.sin(math.pi * (h - params.sunrise_h)
                                    / (params.sunset_h - params.sunrise_h)), 0.0)
    scale = params.solar_load_factor / raw(grid).mean()
    return np.minimum(1.0, raw(hours) * scale) * params.solar_gw


def wind_factor(latent, params: NetDemandParams):
    """Map the latent Gaussian state to a capacity factor in [0, 1]."""
    return special.ndtr(np.asarray(latent, dtype=float)) ** params.wind_power


@dataclass
class NetDemandSeries:
    """Realised hourly series plus the latent wind state that generated them."""
    start: np.datetime64
    demand: np.ndarray
    wind: np.ndarray      # available wind (GW)
    solar: np.ndarray     # available solar (GW)
    latent: np.ndarray
    params: NetDemandParams

    def __len__(self):
        return len(self.demand)

    def weekend(self, hours: np.ndarray) -> np.ndarray:
        days = self.start.astype("datetime64[D]").astype(np.int64) + np.asarray(hours) // 24
        return ((days + 3) % 7) >= 5

    def forecast(self, t: int, horizon: int, quantiles: Sequence[float]):
        """Quantile forecasts for hours ``t .. t+horizon-1`` given the state at ``t-1``.

        Returns a dict of arrays shaped ``(len(quantiles), horizon)``. Quantile
        ``q`` of net demand uses the ``1 - q`` quantile of wind; demand and
        solar are treated as known.
        """
        p = self.params
        hours = np.arange(t, t + horizon)
        x_prev = self.latent[t - 1] if t > 0 else 0.0
        steps = np.arange(1, horizon + 1)
        mean = (p.rho ** steps) * x_prev
        sd = p.noise_scale * np.sqrt(1.0 - p.rho ** (2 * steps))
        z = np.array([NormalDist().inv_cdf(1.0 - q) for q in quantiles])
        wind = p.wind_gw * wind_factor(mean[None, :] + sd[None, :] * z[:, None], p)
        nq = len(quantiles)
        demand = np.broadcast_to(self._demand(hours), (nq, horizon)).copy()
        solar = np.broadcast_to(self._solar(hours), (nq, horizon)).copy()
        return {"demand": demand, "wind": wind, "solar": solar}

    def _demand(self, hours):
        return demand_profile(hours, self.weekend(hours), self.params)

    def _solar(self, hours):
        return solar_profile(hours, self.params)


def synthetic_net_demand(seed: int, hours: int, params: NetDemandParams = NetDemandParams(),
                         start="2030-01-06") -> NetDemandSeries:
    """Seeded AR(1) latent wind, diurnal demand and clamped-sine solar."""
    if hours <= 0:
        raise ValueError("hours must be > 0")
    rng = np.random.default_rng(seed)
    s, rho = params.noise_scale, params.rho
    x = np.empty(hours)
    x[0] = s * rng.standard_normal()
    innov = s * math.sqrt(1.0 - rho * rho) * rng.standard_normal(hours)
    for t in range(1, hours):
        x[t] = rho * x[t - 1] + innov[t]
    start = np.datetime64(start, "h")
    h = np.arange(hours)
    series = NetDemandSeries(start, None, params.wind_gw * wind_factor(x, params), None, x, params)
    series.demand = series._demand(h)
    series.solar = series._solar(h)
    return series
