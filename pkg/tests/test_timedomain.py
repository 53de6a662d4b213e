from dataclasses import replace

import numpy as np
import pytest

from freqshape.components import GforParams, Load, LoadParams, SgParams, Unit
from freqshape.network import Branch, Bus, Network
from freqshape.scenarios import case1, case2, multimachine6
from freqshape.timedomain import CompiledModel, Event, EventError, Scenario, simulate


def short(sc, t_end=3.0, **kw):
    return replace(sc, t_end=t_end, **kw)


def test_equilibrium_hold_case2():
    r = simulate(short(case2(), 2.0, events=[]))
    assert np.abs(r.states - r.states[0]).max() < 1e-9
    np.testing.assert_allclose(r["f_sg"], 50.0, atol=1e-9)


def test_initial_derivatives_vanish():
    m = CompiledModel(case1())
    dx, _ = m.rhs(m.x0)
    assert np.abs(dx).max() < 1e-10


def test_state_names_and_channels():
    m = CompiledModel(case1())
    assert m.state_names[:6] == [f"sg.{s}" for s in ("delta", "dw", "pm", "e", "efd", "dw_f")]
    assert m.state_names[-1] == "load.v2"
    r = simulate(short(case1(), 1.5))
    for c in ("f_sg", "f_vsc", "P_sg_MW", "dP_vsc_MW", "dP_vsc_pu", "dtheta_vsc", "V_poc", "P_load_MW"):
        assert c in r.channels


def test_load_step_power_balance():
    r = simulate(short(case2(), 30.0))
    k = np.searchsorted(r.t, 0.999)
    assert r["P_load_MW"][k] == pytest.approx(400.0, abs=1e-6)
    total = r["dP_sg_MW"][-1] + r["dP_vsc_MW"][-1]
    assert total == pytest.approx(40.0, rel=2e-2)  # plus a little extra loss
    # sharing follows the ratings: both units at the same pu change
    assert r["dP_sg_pu"][-1] == pytest.approx(r["dP_vsc_pu"][-1], rel=2e-2)
    assert r["f_vsc"][-1] == pytest.approx(49.8, abs=0.01)


def test_load_step_creates_load_on_empty_bus():
    sc = case1()
    sc = replace(sc, t_end=1.5, events=[Event(1.0, "load_step", bus="sg", dP_mw=10.0)])
    r = simulate(sc)
    assert "P_step@sg_MW" in r.channels
    assert r["f_sg"][-1] < 50.0


def test_unit_trip_zeroes_power():
    sc = multimachine6(t_end=2.0)
    r = simulate(sc)
    tripped = r.meta["trips"]
    (name, t_trip), = tripped.items()
    assert name == "vsc1" and t_trip == pytest.approx(1.0)
    after = r.t >= 1.0
    assert np.all(r[f"P_{name}_MW"][after] == 0.0)
    assert r["f_vsc2"][-1] < 50.0


def test_setpoint_event_raises_power():
    sc = replace(case2(), t_end=6.0, events=[Event(1.0, "setpoint", target="vsc", field="P_star",
                                                   value=0.85)])
    r = simulate(sc)
    # droop sharing leaves the converter ~20 % of the 19 MW setpoint change once settled
    assert 1.0 < r["dP_vsc_MW"][-1] < 5.0
    assert r["f_sg"][-1] > 50.0


def test_event_errors():
    with pytest.raises(EventError, match="unknown event kind"):
        Event(1.0, "explode")
    with pytest.raises(EventError, match="sorted"):
        replace(case1(), events=[Event(2.0, "unit_trip", target="sg"), Event(1.0, "unit_trip", target="vsc")])
    with pytest.raises(EventError, match="outside"):
        simulate(replace(case1(), t_end=1.0, events=[Event(5.0, "unit_trip", target="sg")]))
    with pytest.raises(EventError, match="unknown unit"):
        simulate(replace(case1(), t_end=1.0, events=[Event(0.5, "unit_trip", target="nope")]))
    with pytest.raises(EventError, match="no voltage-source"):
        simulate(replace(case1(), t_end=1.0, events=[Event(0.2, "unit_trip", target="sg"),
                                                     Event(0.5, "unit_trip", target="vsc")]))
    with pytest.raises(EventError, match="not adjustable"):
        simulate(replace(case1(), t_end=1.0, events=[Event(0.5, "setpoint", target="vsc",
                                                           field="Cac", value=1.0)]))


def test_event_off_grid_warns():
    sc = replace(case2(), t_end=1.0, events=[Event(0.50005, "load_step", bus="poc", dP_mw=1.0)])
    with pytest.warns(UserWarning, match="moved"):
        simulate(sc)


def test_dt_warning():
    sc = replace(case2(), t_end=0.1, dt=5e-4, events=[])
    with pytest.warns(UserWarning, match="time constant"):
        simulate(sc)


def test_deterministic_and_csv_round_trip(tmp_path):
    sc = short(case2(), 1.2)
    a = simulate(sc).to_csv(header="x")
    b = simulate(sc).to_csv(header="x")
    assert a == b
    r = simulate(sc)
    path = tmp_path / "ts.csv"
    r.to_csv(path, columns=["f_sg", "dP_vsc_MW"])
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1], r["f_sg"])  # repr round-trips exactly


def test_record_subset():
    r = simulate(replace(case2(), t_end=0.5, events=[], record=["f_sg"]))
    assert list(r.channels) == ["f_sg"]
    with pytest.raises(KeyError):
        simulate(replace(case2(), t_end=0.5, events=[], record=["nope"]))


def test_constant_impedance_and_algebraic_loads():
    sc = case2()
    loads = [Load("z", "poc", LoadParams("constant_impedance", 200.0, 0.0)),
             Load("load", "poc", LoadParams("constant_power", 200.0, 0.0, tau_v=0.0))]
    r = simulate(replace(sc, loads=loads, t_end=4.0))
    assert r["P_z_MW"][0] == pytest.approx(200.0 * r["V_poc"][0] ** 2)
    assert r["f_sg"].min() < 50.0


def test_three_bus_meshed_scenario():
    net = Network([Bus("a"), Bus("b"), Bus("m")],
                  [Branch("a", "m", 0.002, 0.03), Branch("b", "m", 0.002, 0.03), Branch("a", "b", 0.004, 0.06)])
    units = [Unit("g", "a", SgParams(S_rated=300.0, D=20.0, T_w=0.5), 150.0),
             Unit("c", "b", GforParams(S_rated=200.0), 100.0)]
    loads = [Load("L", "m", LoadParams("constant_power", 250.0, 30.0))]
    sc = Scenario(net, units, loads, [Event(0.5, "load_step", bus="m", dP_mw=10.0)], t_end=3.0)
    r = simulate(sc)
    assert 49.9 < r["f_g"][-1] < 50.0
