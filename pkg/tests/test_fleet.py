import numpy as np
import pytest
from hypothesis import given, strategies as st

from v2gfr.fleet import (FleetDecision, FleetParams, FleetState, SocBoundError,
                         fleet_power, fr_capacity_per_ev, soc_update)

PAR = FleetParams(charger_power_max=1e-5, eta=0.95, e_in=2e-5, e_out=3e-5, e_cap=6e-5)


def test_fr_capacity_examples():
    assert fr_capacity_per_ev(PAR, FleetDecision()) == pytest.approx(1e-5)
    assert fr_capacity_per_ev(PAR, FleetDecision(c=1e-5)) == pytest.approx(2e-5)
    assert fr_capacity_per_ev(PAR, FleetDecision(d=1e-5)) == 0.0


def test_fleet_power_examples():
    assert fleet_power(FleetState(1000, 0.0), FleetDecision(c=1e-5)) == pytest.approx(-0.01)
    assert fleet_power(FleetState(1000, 0.0), FleetDecision(d=3e-6, c=3e-6)) == 0.0
    assert fleet_power(FleetState(0, 0.0), FleetDecision(d=1e-5)) == 0.0
    assert fleet_power(FleetState(900, 0.0), FleetDecision(d=1e-5), delta_n_hat=100) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        fleet_power(FleetState(10, 0.0), FleetDecision(), delta_n_hat=-11)


def test_soc_update_example():
    out = soc_update(FleetState(1000, 10.0), FleetDecision(c=1e-5), 0, 100, 50, PAR, check=False)
    assert out.energy == pytest.approx(10.01, abs=1e-12)
    assert out.n_connected == 1050


def test_soc_update_idle_unchanged():
    out = soc_update(FleetState(0, 0.0), FleetDecision(), 0, 0, 0, PAR)
    assert out == FleetState(0, 0.0)


def test_soc_bound_violation():
    with pytest.raises(SocBoundError):
        soc_update(FleetState(1000, 0.0), FleetDecision(d=1e-5), 0, 0, 0, PAR)
    with pytest.raises(SocBoundError):
        soc_update(FleetState(10, 6e-4), FleetDecision(c=1e-5), 0, 0, 0, PAR)


def test_params_validation():
    with pytest.raises(ValueError):
        FleetParams(1e-5, e_in=3e-5, e_out=2e-5, e_cap=6e-5)
    with pytest.raises(ValueError):
        FleetParams(1e-5, eta=1.5)
    with pytest.raises(ValueError):
        FleetParams(0.0)


@given(st.lists(st.tuples(st.floats(0, 1e-5), st.floats(0, 1e-5), st.floats(0, 5000)),
                min_size=1, max_size=24))
def test_energy_conservation_without_flows(steps):
    par = FleetParams(1e-5, eta=0.9, e_cap=1.0)
    state = FleetState(steps[0][2], 1000.0)
    expected = state.energy
    for d, c, n in steps:
        dn = n - state.n_connected
        expected += n * (par.eta * c - d / par.eta)
        state = soc_update(state, FleetDecision(d, c), dn, 0, 0, par, check=False)
        state = FleetState(n, state.energy)
    assert state.energy == pytest.approx(expected, rel=1e-12, abs=1e-12)


@given(st.floats(0, 1e-5), st.floats(0, 1e-5))
def test_capacity_range(d, c):
    g = fr_capacity_per_ev(PAR, FleetDecision(d, c))
    assert 0 <= g <= 2 * PAR.charger_power_max + 1e-18


@given(st.integers(0, 500))
def test_round_trip_drains_trip_energy(n):
    # n EVs arrive then leave with no charging: net change n * (e_in - e_out)
    s0 = FleetState(100, 5e-3)
    s1 = soc_update(s0, FleetDecision(), 0, n, 0, PAR, check=False)
    assert s1.n_connected == 100 + n
    s2 = soc_update(s1, FleetDecision(), 0, 0, n, PAR, check=False)
    assert s2.n_connected == 100
    assert s2.energy - s0.energy == pytest.approx(n * (PAR.e_in - PAR.e_out), abs=1e-15)
