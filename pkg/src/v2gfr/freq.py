"""Post-outage frequency dynamics of a single-bus system.

Frequency deviation follows the aggregate swing equation with zero load
damping::

    (2 H / f0) d(df)/dt = R_ev(t) + R_nd(t) + R_g(t) - PL_max

where every response is a linear ramp to its magnitude: fast response
(EVs and non-distributed devices) over ``t1`` seconds, slow thermal
response over ``t2``. EV response may start ``t_del`` seconds late.
Because every input is piecewise linear in time, df(t) is piecewise
quadratic and is integrated here in closed form.

Units: GW, GW*s, Hz, seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FrequencyModelError(ValueError):
    """Base class for cases the closed-form security model cannot handle."""


class NoArrest(FrequencyModelError):
    """Total response never covers the lost infeed; frequency keeps falling."""


class NadirBeforeT1(FrequencyModelError):
    """Fast response alone arrests the fall, so the nadir precedes ``t1``."""


@dataclass(frozen=True)
class FrequencyParams:
    f0: float = 50.0
    delta_f_max: float = 0.8
    rocof_max: float = 1.0
    t1: float = 1.0
    t2: float = 10.0
    t_del: float = 0.0

    def __post_init__(self):
        for name in ("f0", "delta_f_max", "rocof_max", "t1", "t2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if not (math.isfinite(self.t_del) and self.t_del >= 0):
            raise ValueError(f"t_del must be finite and >= 0, got {self.t_del}")
        if not self.t1 < self.t2:
            raise ValueError(f"t1 ({self.t1}) must be < t2 ({self.t2})")


@dataclass(frozen=True)
class FrequencyCase:
    """System snapshot at the outage instant."""

    h: float
    r_ev: float
    r_nd: float
    r_g: float
    pl_max: float

    def __post_init__(self):
        for name in ("h", "r_ev", "r_nd", "r_g", "pl_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    @property
    def r_fast(self) -> float:
        return self.r_ev + self.r_nd


@dataclass(frozen=True)
class FrequencyTrajectory:
    times: np.ndarray
    delta_f: np.ndarray
    nadir_value: float
    nadir_time: float

    def to_csv(self, path) -> None:
        data = np.column_stack([self.times, self.delta_f])
        np.savetxt(path, data, delimiter=",", header="time_s,delta_f_hz",
                   comments="", fmt="%.9g")


def min_inertia_for_rocof(pl_max: float, params: FrequencyParams) -> float:
    """Smallest inertia (GW*s) keeping the initial RoCoF within its limit."""
    if not math.isfinite(pl_max):
        raise ValueError(f"pl_max must be finite, got {pl_max}")
    if pl_max < 0:
        raise ValueError(f"pl_max must be >= 0, got {pl_max}")
    return pl_max * params.f0 / (2.0 * params.rocof_max)


def rocof_limit_ok(case: FrequencyCase, params: FrequencyParams) -> bool:
    return case.h >= min_inertia_for_rocof(case.pl_max, params)


def steady_state_ok(case: FrequencyCase) -> bool:
    return case.pl_max <= case.r_nd + case.r_ev + case.r_g


def nadir_time(case: FrequencyCase, params: FrequencyParams) -> float:
    """Instant of zero RoCoF, assuming the nadir falls in ``[t1, t2]``.

    Raises NoArrest when the loss is never covered, NadirBeforeT1 when fast
    response (alone, or with little slow response) stops the fall early.
    """
    if not steady_state_ok(case):
        raise NoArrest(
            f"total response {case.r_fast + case.r_g:.6g} GW < loss {case.pl_max:.6g} GW")
    deficit = case.pl_max - case.r_fast
    if deficit <= 0:
        raise NadirBeforeT1("fast response alone covers the largest loss")
    t_star = deficit * params.t2 / case.r_g
    if t_star < params.t1:
        raise NadirBeforeT1(f"zero-RoCoF instant {t_star:.6g} s precedes t1={params.t1} s")
    return t_star


def nadir_constraint_terms(case: FrequencyCase, params: FrequencyParams):
    """Return ``(z, x, y_squared)``; the nadir limit holds iff ``z * x >= y_squared``."""
    dfm = params.delta_f_max
    z = (case.h / params.f0
         - case.r_fast * params.t1 / (4.0 * dfm)
         - case.r_ev * 2.0 * params.t_del / (4.0 * dfm))
    x = case.r_g / params.t2
    y_sq = (case.pl_max - case.r_fast) ** 2 / (4.0 * dfm)
    return z, x, y_sq


def nadir_ok(case: FrequencyCase, params: FrequencyParams, tol: float = 0.0) -> bool:
    z, x, y_sq = nadir_constraint_terms(case, params)
    return z >= 0 and z * x >= y_sq - tol


def tight_inertia(case: FrequencyCase, params: FrequencyParams) -> float:
    """Inertia making the nadir constraint hold with equality (other terms fixed)."""
    dfm = params.delta_f_max
    if case.r_g <= 0:
        raise ValueError("r_g must be > 0")
    y_sq = (case.pl_max - case.r_fast) ** 2 / (4.0 * dfm)
    x = case.r_g / params.t2
    return params.f0 * (y_sq / x + case.r_fast * params.t1 / (4.0 * dfm)
                        + case.r_ev * 2.0 * params.t_del / (4.0 * dfm))


# --- trajectory -------------------------------------------------------------

def _ramps(case: FrequencyCase, params: FrequencyParams):
    """(start, duration, magnitude) of every response ramp."""
    return (
        (params.t_del, params.t1, case.r_ev),
        (0.0, params.t1, case.r_nd),
        (0.0, params.t2, case.r_g),
    )


def net_power(t, case: FrequencyCase, params: FrequencyParams):
    """Net power surplus (GW) at time(s) ``t``; negative during the deficit."""
    t = np.asarray(t, dtype=float)
    p = np.full_like(t, -case.pl_max)
    for start, dur, mag in _ramps(case, params):
        p = p + mag * np.clip((t - start) / dur, 0.0, 1.0)
    return p


def _segments(case, params):
    bps = {0.0}
    for start, dur, _ in _ramps(case, params):
        bps.add(start)
        bps.add(start + dur)
    return sorted(bps)


def _trajectory_pieces(case: FrequencyCase, params: FrequencyParams):
    """Per-segment (t_start, df_start, p_start, slope); last segment is unbounded."""
    k = params.f0 / (2.0 * case.h)
    bps = _segments(case, params)
    pieces = []
    df = 0.0
    for i, b in enumerate(bps):
        p0 = float(net_power(b, case, params))
        if i + 1 < len(bps):
            nxt = bps[i + 1]
            slope = (float(net_power(nxt, case, params)) - p0) / (nxt - b)
        else:
            slope = 0.0
        pieces.append((b, df, p0, slope))
        if i + 1 < len(bps):
            dt = bps[i + 1] - b
            df += k * (p0 * dt + 0.5 * slope * dt * dt)
    return pieces, k


def _analytic_nadir(pieces, k):
    """First zero of the (non-decreasing) net power and df there."""
    for i, (b, df, p0, slope) in enumerate(pieces):
        end = pieces[i + 1][0] if i + 1 < len(pieces) else math.inf
        if p0 >= 0:
            return b, df
        if slope > 0:
            tau = -p0 / slope
            if b + tau <= end:
                return b + tau, df + k * (p0 * tau + 0.5 * slope * tau * tau)
    return None


def _eval_pieces(t, pieces, k):
    starts = np.array([p[0] for p in pieces])
    idx = np.searchsorted(starts, t, side="right") - 1
    idx = np.clip(idx, 0, len(pieces) - 1)
    b = starts[idx]
    df0 = np.array([p[1] for p in pieces])[idx]
    p0 = np.array([p[2] for p in pieces])[idx]
    s = np.array([p[3] for p in pieces])[idx]
    tau = t - b
    return df0 + k * (p0 * tau + 0.5 * s * tau * tau)


def simulate_trajectory(case: FrequencyCase, params: FrequencyParams,
                        horizon_s: float = 20.0, sample_dt: float = 0.01) -> FrequencyTrajectory:
    """Exact piecewise-quadratic frequency trajectory sampled every ``sample_dt`` s.

    The nadir is located analytically (zero of the net power), not from samples.
    Segment boundaries belong to the later segment.
    """
    if sample_dt <= 0 or horizon_s <= 0:
        raise ValueError("horizon_s and sample_dt must be > 0")
    n = int(math.floor(horizon_s / sample_dt + 1e-9)) + 1
    times = np.arange(n) * sample_dt
    if case.pl_max == 0:
        return FrequencyTrajectory(times, np.zeros(n), 0.0, 0.0)
    if case.h <= 0:
        raise ValueError("h must be > 0 to simulate")
    if not steady_state_ok(case):
        raise NoArrest("steady-state response insufficient; frequency is never arrested")
    pieces, k = _trajectory_pieces(case, params)
    t_nadir, df_nadir = _analytic_nadir(pieces, k)
    if t_nadir > horizon_s:
        raise NoArrest(f"nadir at {t_nadir:.6g} s lies beyond the {horizon_s} s horizon")
    return FrequencyTrajectory(times, _eval_pieces(times, pieces, k), df_nadir, t_nadir)


def simulate_numeric(case: FrequencyCase, params: FrequencyParams,
                     horizon_s: float = 20.0, dt: float = 1e-3):
    """Fixed-step trapezoidal integration of the swing equation (test oracle).

    Returns ``(times, delta_f)``.
    """
    n = int(math.floor(horizon_s / dt + 1e-9)) + 1
    times = np.arange(n) * dt
    p = net_power(times, case, params)
    k = params.f0 / (2.0 * case.h)
    incr = 0.5 * (p[1:] + p[:-1]) * dt * k
    return times, np.concatenate([[0.0], np.cumsum(incr)])
