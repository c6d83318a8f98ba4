"""Virtual-battery model of a uniformly controlled EV fleet.

All EVs in a fleet share one charge rate ``c`` and one discharge rate ``d``
(GW per EV). The scheduling step is one hour, so GW x 1 h = GWh.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class SocBoundError(ValueError):
    """Aggregate state of charge left ``[0, n_connected * e_cap]``."""


@dataclass(frozen=True)
class FleetParams:
    charger_power_max: float  # D_max = C_max, GW per EV
    eta: float = 0.95
    e_in: float = 0.0         # GWh per EV at connection
    e_out: float = 0.0        # GWh per EV at disconnection
    e_cap: float = 1.0        # GWh per EV

    def __post_init__(self):
        if not self.charger_power_max > 0:
            raise ValueError("charger_power_max must be > 0")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0 <= self.e_in <= self.e_out <= self.e_cap:
            raise ValueError("need 0 <= e_in <= e_out <= e_cap")


@dataclass(frozen=True)
class FleetState:
    n_connected: float
    energy: float  # GWh aggregate

    def check(self, params: FleetParams, tol: float = 1e-9) -> None:
        cap = self.n_connected * params.e_cap
        if self.energy < -tol or self.energy > cap + tol * max(1.0, cap):
            raise SocBoundError(
                f"energy {self.energy:.6g} GWh outside [0, {cap:.6g}] GWh")


@dataclass(frozen=True)
class FleetDecision:
    d: float = 0.0  # discharge, GW per EV
    c: float = 0.0  # charge, GW per EV

    def check(self, params: FleetParams, tol: float = 1e-12) -> None:
        top = params.charger_power_max * (1 + tol)
        if not (-tol <= self.d <= top and -tol <= self.c <= top):
            raise ValueError(f"decision {self} outside [0, {params.charger_power_max}]")


def fr_capacity_per_ev(params: FleetParams, decision: FleetDecision) -> float:
    """Headroom to full discharge: stop charging plus discharge at rating."""
    return params.charger_power_max - decision.d + decision.c


def fleet_power(state: FleetState, decision: FleetDecision, delta_n_hat: float = 0.0) -> float:
    """Net injection to the grid (GW); negative while the fleet charges."""
    n = state.n_connected + delta_n_hat
    if n < 0:
        raise ValueError(f"effective connected count {n} is negative")
    return n * (decision.d - decision.c)


def soc_update(state: FleetState, decision: FleetDecision, delta_n_hat: float,
               n_in: float, n_out: float, params: FleetParams,
               hours: float = 1.0, check: bool = True) -> FleetState:
    """Advance one step.

    Charging applies to ``n_connected + delta_n_hat`` EVs, the count for the
    step. ``n_in`` / ``n_out`` EVs (dis)connect at the step start carrying
    ``e_in`` / ``e_out`` each, and the returned count moves by ``n_in - n_out``.
    """
    n = state.n_connected + delta_n_hat
    if n < 0:
        raise ValueError(f"effective connected count {n} is negative")
    energy = (state.energy
              + n * (params.eta * decision.c - decision.d / params.eta) * hours
              + n_in * params.e_in - n_out * params.e_out)
    n_next = state.n_connected + n_in - n_out
    if n_next < 0:
        raise ValueError(f"connected count would become {n_next}")
    out = replace(state, n_connected=n_next, energy=energy)
    if check:
        out.check(params)
    return out
