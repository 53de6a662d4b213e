"""Built-in scenarios: the two-unit SG + GFOR system and a six-unit multi-machine system."""
from __future__ import annotations

from .components import GforParams, Load, LoadParams, SgParams, Unit
from .network import Branch, Bus, Network
from .timedomain import Event, Scenario

S_BASE = 100.0
F0 = 50.0
X_TR = 0.1
R_TR = 0.0025
# damper-winding equivalent used by every built-in SG (acts on slip, no steady-state effect)
SG_DAMPING = {"D": 20.0, "T_w": 0.5}


def two_unit(s_sg: float, s_vsc: float, p_sg: float, p_vsc: float, p_load: float = 400.0,
             tau_p_gfor: float = 0.1, load_step: float | None = 40.0, t_step: float = 1.0,
             t_end: float = 20.0, dt: float = 1e-4, sg: dict | None = None, gfor: dict | None = None,
             name: str = "two_unit") -> Scenario:
    """SG behind its step-up transformer and a GFOR converter feeding a common load bus."""
    net = Network(
        buses=[Bus("sg"), Bus("poc")],
        branches=[Branch("sg", "poc", R_TR * S_BASE / s_sg, X_TR * S_BASE / s_sg)],
        s_base=S_BASE, f0=F0,
    )
    units = [
        Unit("sg", "sg", SgParams(S_rated=s_sg, f0_ref=F0, **{**SG_DAMPING, **(sg or {})}), P_mw=p_sg),
        Unit("vsc", "poc", GforParams(S_rated=s_vsc, tau_p_gfor=tau_p_gfor, R_tr=R_TR, X_tr=X_TR,
                                      f0=F0, **(gfor or {})), P_mw=p_vsc),
    ]
    loads = [Load("load", "poc", LoadParams("constant_power", p_load, 0.0))]
    events = [Event(t_step, "load_step", bus="poc", dP_mw=load_step)] if load_step else []
    return Scenario(net, units, loads, events, t_end=t_end, dt=dt, name=name)


def case1(tau_p_gfor: float = 0.1, **kw) -> Scenario:
    """20 % converter penetration: 400 MVA SG, 100 MVA GFOR, 400 MW load."""
    kw.setdefault("name", "case1")
    return two_unit(400.0, 100.0, 320.0, 80.0, tau_p_gfor=tau_p_gfor, **kw)


def case2(tau_p_gfor: float = 0.1, **kw) -> Scenario:
    """80 % converter penetration: 100 MVA SG, 400 MVA GFOR, 400 MW load."""
    kw.setdefault("name", "case2")
    return two_unit(100.0, 400.0, 80.0, 320.0, tau_p_gfor=tau_p_gfor, **kw)


MM6_RATINGS = (610.0, 560.0, 480.0, 400.0, 250.0, 40.0)
# ring lines between neighbouring plant buses plus two chords, pu on S_BASE
MM6_LINES = ((0, 1, 0.004, 0.04), (1, 2, 0.005, 0.05), (2, 3, 0.004, 0.04), (3, 4, 0.006, 0.06),
             (4, 5, 0.005, 0.05), (5, 0, 0.006, 0.06), (0, 3, 0.008, 0.08), (1, 4, 0.008, 0.08))


def multimachine6(alpha: float = 0.8, tau_p_gfor: float = 0.1, loading: float = 0.3,
                  trip: str | None = "largest", t_trip: float = 1.0, t_end: float = 20.0,
                  dt: float = 1e-4, ratings=MM6_RATINGS, sg: dict | None = None,
                  gfor: dict | None = None, name: str = "multimachine6") -> Scenario:
    """Six plants on a meshed ring, each split into an SG share (1-alpha) and a GFOR share alpha.

    Every unit runs at ``loading`` of its rating with a 5 % droop and every plant
    bus carries a constant-power load equal to its dispatch. ``trip="largest"``
    disconnects the largest-rated unit at ``t_trip``; pass ``None`` for no event.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if len(ratings) < 2:
        raise ValueError("need at least two plants")
    buses, branches, units, loads = [], [], [], []
    for i, s in enumerate(ratings):
        poc = f"p{i + 1}"
        buses.append(Bus(poc))
        s_sg, s_vsc = (1.0 - alpha) * s, alpha * s
        if s_sg > 0:
            buses.append(Bus(f"g{i + 1}"))
            branches.append(Branch(f"g{i + 1}", poc, R_TR * S_BASE / s_sg, X_TR * S_BASE / s_sg))
            units.append(Unit(f"sg{i + 1}", f"g{i + 1}",
                              SgParams(S_rated=s_sg, f0_ref=F0, **{**SG_DAMPING, **(sg or {})}),
                              P_mw=loading * s_sg))
        if s_vsc > 0:
            units.append(Unit(f"vsc{i + 1}", poc,
                              GforParams(S_rated=s_vsc, tau_p_gfor=tau_p_gfor, R_tr=R_TR, X_tr=X_TR,
                                         f0=F0, **(gfor or {})), P_mw=loading * s_vsc))
        loads.append(Load(f"load{i + 1}", poc, LoadParams("constant_power", loading * s, 0.0)))
    n = len(ratings)
    for i, j, r, x in MM6_LINES:
        if i < n and j < n:
            branches.append(Branch(f"p{i + 1}", f"p{j + 1}", r, x))
    net = Network(buses=buses, branches=branches, s_base=S_BASE, f0=F0)
    events = []
    if trip == "largest":
        target = max(units, key=lambda u: u.params.S_rated).name
        events.append(Event(t_trip, "unit_trip", target=target))
    elif trip:
        events.append(Event(t_trip, "unit_trip", target=trip))
    return Scenario(net, units, loads, events, t_end=t_end, dt=dt, name=name)
