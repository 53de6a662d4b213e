"""Nonlinear time-domain simulation of SG / grid-forming converter systems.

Differential states are integrated with the fixed-step implicit trapezoidal
rule. The network is algebraic: at every derivative evaluation the bus
voltages are re-solved (Newton, warm-started) against the Norton sources of
the machines and converters and the loads.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numba as nb
import numpy as np

from . import components as cm
from .components import Load, LoadParams, Unit
from .network import Network, assemble_ybus, init_scenario

log = logging.getLogger(__name__)

NET_TOL = 1e-10
NEWTON_TOL = 1e-10
BLOWUP = 1e6


class SimulationError(RuntimeError):
    def __init__(self, msg, t=None):
        super().__init__(msg if t is None else f"t={t:.6f} s: {msg}")
        self.t = t


class EventError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    """Timed disturbance.

    kinds: ``load_step`` (``bus``, ``dP_mw``, ``dQ_mvar``), ``unit_trip``
    (``target`` unit name) and ``setpoint`` (``target``, ``field``, ``value``).
    """

    t: float
    kind: str
    bus: object = None
    dP_mw: float = 0.0
    dQ_mvar: float = 0.0
    target: str | None = None
    field: str | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("load_step", "unit_trip", "setpoint"):
            raise EventError(f"unknown event kind {self.kind!r}")


@dataclass
class Scenario:
    network: Network
    units: list
    loads: list = field(default_factory=list)
    events: list = field(default_factory=list)
    t_end: float = 10.0
    dt: float = 1e-4
    record: list | None = None
    record_every: int = 10
    name: str = "scenario"

    def __post_init__(self):
        ts = [ev.t for ev in self.events]
        if ts != sorted(ts):
            raise EventError("events must be sorted by time")

    def smallest_time_constant(self) -> float:
        taus = []
        for u in self.units:
            taus.extend(u.params.time_constants)
        taus.extend(ld.params.tau_v for ld in self.loads if ld.params.dynamic)
        return min(taus)

    def unit(self, name) -> Unit:
        for u in self.units:
            if u.name == name:
                return u
        raise KeyError(name)

    def replace_unit_params(self, name, **changes) -> "Scenario":
        units = [replace(u, params=replace(u.params, **changes)) if u.name == name else u
                 for u in self.units]
        return replace(self, units=units)


@dataclass
class SimResult:
    t: np.ndarray
    channels: dict
    states: np.ndarray
    state_names: list
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name) -> np.ndarray:
        return self.channels[name]

    def to_csv(self, path=None, header: str | None = None, columns=None) -> str:
        cols = list(self.channels) if columns is None else list(columns)
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + cols)
        data = [self.t] + [self.channels[c] for c in cols]
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


# --------------------------------------------------------------------------- kernels

@nb.njit(cache=True)
def solve_network(V, Y, isrc, scp, tol, max_iter):
    """Newton solve of Y V - isrc + conj(scp / V) = 0, in place on ``V``.

    Returns the iteration count, or -1 on failure.
    """
    n = V.shape[0]
    J = np.empty((2 * n, 2 * n))
    F = np.empty(2 * n)
    for it in range(max_iter + 1):
        r = Y @ V - isrc
        for k in range(n):
            if scp[k] != 0:
                r[k] += (scp[k] / V[k]).conjugate()
        err = 0.0
        for k in range(n):
            F[k] = r[k].real
            F[n + k] = r[k].imag
            err = max(err, abs(r[k]))
        if err < tol:
            return it
        if it == max_iter:
            break
        for i in range(n):
            for j in range(n):
                g = Y[i, j]
                J[i, j] = g.real
                J[i, n + j] = -g.imag
                J[n + i, j] = g.imag
                J[n + i, n + j] = g.real
            if scp[i] != 0:
                b = -(scp[i] / (V[i] * V[i])).conjugate()
                J[i, i] += b.real
                J[i, n + i] += b.imag
                J[n + i, i] += b.imag
                J[n + i, n + i] -= b.real
        d = np.linalg.solve(J, F)
        for k in range(n):
            V[k] -= complex(d[k], d[n + k])
    return -1


@nb.njit(cache=True)
def model_rhs(x, V, Y, scp, sg_bus, sg_p, sg_off, sg_on, gf_bus, gf_p, gf_off, gf_on,
              ld_bus, ld_s, ld_off, ld_tau, wb, dx):
    n = V.shape[0]
    isrc = np.zeros(n, dtype=np.complex128)
    for k in range(sg_bus.shape[0]):
        if sg_on[k]:
            o = sg_off[k]
            isrc[sg_bus[k]] += cm.sg_norton(x[o:o + 6], sg_p[k])
    for k in range(gf_bus.shape[0]):
        if gf_on[k]:
            o = gf_off[k]
            isrc[gf_bus[k]] += cm.gfor_norton(x[o:o + 9], gf_p[k])
    if ld_bus.shape[0] > 0:
        Y = Y.copy()
        for k in range(ld_bus.shape[0]):
            v2 = x[ld_off[k]]
            if v2 < 1e-4:
                return -1
            b = ld_bus[k]
            Y[b, b] += ld_s[k].conjugate() / v2
    it = solve_network(V, Y, isrc, scp, NET_TOL, 30)
    if it < 0:
        return it
    for k in range(ld_bus.shape[0]):
        o = ld_off[k]
        vb = V[ld_bus[k]]
        dx[o] = (vb.real * vb.real + vb.imag * vb.imag - x[o]) / ld_tau[k]
    for k in range(sg_bus.shape[0]):
        o = sg_off[k]
        if sg_on[k]:
            cm.sg_rhs(x[o:o + 6], V[sg_bus[k]], sg_p[k], wb, dx[o:o + 6])
        else:
            dx[o:o + 6] = 0.0
    for k in range(gf_bus.shape[0]):
        o = gf_off[k]
        if gf_on[k]:
            cm.gfor_rhs(x[o:o + 9], V[gf_bus[k]], gf_p[k], wb, dx[o:o + 9])
        else:
            dx[o:o + 9] = 0.0
    return it


@nb.njit(cache=True)
def integrate(x, fx, V, n_steps, dt, Minv, tol, max_newton, rec_every, step0, rec_x, rec_V,
              rec_pos, Y, scp, sg_bus, sg_p, sg_off, sg_on, gf_bus, gf_p, gf_off, gf_on,
              ld_bus, ld_s, ld_off, ld_tau, wb):
    """Trapezoidal steps with a frozen iteration matrix (chord Newton).

    Returns ``(status, steps_done, rec_pos)``; status 0 ok, 1 Newton stall,
    2 network failure, 3 state blow-up.
    """
    n = x.shape[0]
    z = np.empty(n)
    fz = np.empty(n)
    G = np.empty(n)
    Vw = V.copy()
    h2 = 0.5 * dt
    for s in range(n_steps):
        for i in range(n):
            z[i] = x[i] + dt * fx[i]
        Vw[:] = V
        conv = False
        for it in range(max_newton):
            if model_rhs(z, Vw, Y, scp, sg_bus, sg_p, sg_off, sg_on, gf_bus, gf_p, gf_off, gf_on,
                         ld_bus, ld_s, ld_off, ld_tau, wb, fz) < 0:
                return 2, s, rec_pos
            err = 0.0
            for i in range(n):
                G[i] = z[i] - x[i] - h2 * (fx[i] + fz[i])
                err = max(err, abs(G[i]))
            if err < tol:
                conv = True
                break
            z -= Minv @ G
        if not conv:
            return 1, s, rec_pos
        big = 0.0
        for i in range(n):
            x[i] = z[i]
            fx[i] = fz[i]
            big = max(big, abs(z[i]))
        V[:] = Vw
        if not big < BLOWUP:
            return 3, s + 1, rec_pos
        if (step0 + s + 1) % rec_every == 0:
            rec_x[rec_pos] = x
            rec_V[rec_pos] = V
            rec_pos += 1
    return 0, n_steps, rec_pos


# --------------------------------------------------------------------------- model assembly

SG_FIELDS = {"P0_ref": cm.SG_P0, "V_ref": cm.SG_VREF, "R_f_sg": cm.SG_R, "H": cm.SG_H, "D": cm.SG_D}
GF_FIELDS = {"P_star": cm.GF_PSTAR, "Q_star": cm.GF_QSTAR, "V_star": cm.GF_VSTAR,
             "R_f_gfor": cm.GF_R, "tau_p_gfor": cm.GF_TP, "k_qv": cm.GF_KQV}


class CompiledModel:
    """Array form of an initialized scenario, shared by the simulator and the linearizer."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        net = scenario.network
        self.net = net
        self.wb = 2 * math.pi * net.f0
        loads = [Load(ld.name, ld.bus, ld.params) for ld in scenario.loads]
        # load steps land on a constant-power load; create an empty one where none exists
        for ev in scenario.events:
            if ev.kind == "load_step" and not any(
                    ld.bus == ev.bus and ld.params.kind == "constant_power" for ld in loads):
                net.index(ev.bus)
                loads.append(Load(f"step@{ev.bus}", ev.bus, LoadParams("constant_power", 0.0, 0.0)))
        x0, units, pf = init_scenario(net, scenario.units, loads)
        self.units = units
        self.pf = pf
        sgs = [u for u in units if u.kind == "sg"]
        gfs = [u for u in units if u.kind == "gfor"]
        offsets, names, o = {}, [], 0
        for u in units:
            offsets[u.name] = o
            names.extend(u.state_names)
            o += len(u.state_names)
        dyn = [ld for ld in loads if ld.params.dynamic]
        ld_off = []
        for ld in dyn:
            offsets[ld.name] = o
            ld_off.append(o)
            names.append(f"{ld.name}.v2")
            o += 1
        self.x0 = np.concatenate([x0, [abs(pf.v[net.index(ld.bus)]) ** 2 for ld in dyn]])
        self.offsets = offsets
        self.state_names = names
        self.sg_units, self.gf_units = sgs, gfs
        self.sg_bus = np.array([net.index(u.bus) for u in sgs], dtype=np.int64)
        self.sg_p = np.array([u.params.to_array(net.s_base, net.f0) for u in sgs]).reshape(len(sgs), cm.SG_NPAR)
        self.sg_off = np.array([offsets[u.name] for u in sgs], dtype=np.int64)
        self.sg_on = np.ones(len(sgs), dtype=np.bool_)
        self.gf_bus = np.array([net.index(u.bus) for u in gfs], dtype=np.int64)
        self.gf_p = np.array([u.params.to_array(net.s_base, net.f0) for u in gfs]).reshape(len(gfs), cm.GF_NPAR)
        self.gf_off = np.array([offsets[u.name] for u in gfs], dtype=np.int64)
        self.gf_on = np.ones(len(gfs), dtype=np.bool_)
        self.loads = loads
        self.pf_loads = list(loads)
        self.ld_bus = np.array([net.index(ld.bus) for ld in dyn], dtype=np.int64)
        self.ld_s = np.zeros(len(dyn), dtype=complex)
        self.ld_off = np.array(ld_off, dtype=np.int64)
        self.ld_tau = np.array([ld.params.tau_v for ld in dyn], dtype=float)
        self.ld_names = [ld.name for ld in dyn]
        self.bus_active = np.ones(net.n, dtype=np.bool_)
        self.rebuild()
        self.V = pf.v.astype(complex).copy()

    # -- network
    def rebuild(self):
        net = self.net
        n = net.n
        Y = np.zeros((n, n), dtype=complex)
        Yb = assemble_ybus(Network(net.buses, [b for b in net.branches
                                                if self.bus_active[net.index(b.from_bus)]
                                                and self.bus_active[net.index(b.to_bus)]],
                                   net.s_base, net.f0))
        Y += Yb
        scp = np.zeros(n, dtype=complex)
        for ld in self.loads:
            k = net.index(ld.bus)
            s = complex(ld.params.P, ld.params.Q) / net.s_base
            if ld.params.kind == "constant_impedance":
                Y[k, k] += np.conj(s)
            elif ld.params.dynamic:
                self.ld_s[self.ld_names.index(ld.name)] = s
            else:
                scp[k] += s
        for k, u in enumerate(self.sg_units):
            if self.sg_on[k]:
                p = u.params
                Y[self.sg_bus[k], self.sg_bus[k]] += (p.S_rated / net.s_base) / complex(p.Ra, p.Xd_transient)
        for k, u in enumerate(self.gf_units):
            if self.gf_on[k]:
                p = u.params
                Y[self.gf_bus[k], self.gf_bus[k]] += (p.S_rated / net.s_base) / complex(p.R_tr, p.X_tr)
        for k in range(n):
            if not self.bus_active[k]:
                Y[k, :] = 0
                Y[:, k] = 0
                Y[k, k] = 1.0
        self.Y = Y
        self.scp = scp

    def n_active_buses(self) -> int:
        return int(self.bus_active.sum())

    @property
    def args(self):
        return (self.Y, self.scp, self.sg_bus, self.sg_p, self.sg_off, self.sg_on,
                self.gf_bus, self.gf_p, self.gf_off, self.gf_on,
                self.ld_bus, self.ld_s, self.ld_off, self.ld_tau, self.wb)

    def rhs(self, x, V=None):
        """State derivative with the network solved at ``x``; returns ``(dx, V)``."""
        V = self.V.copy() if V is None else V.copy()
        dx = np.zeros_like(x, dtype=float)
        if model_rhs(np.asarray(x, dtype=float), V, *self.args, dx) < 0:
            raise SimulationError("network solution failed")
        return dx, V

    def jacobian(self, x, h=1e-6):
        n = x.size
        J = np.empty((n, n))
        for j in range(n):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (self.rhs(xp)[0] - self.rhs(xm)[0]) / (2 * h)
        return J

    # -- events
    def apply_event(self, ev: Event):
        net = self.net
        if ev.kind == "load_step":
            if ev.dP_mw == 0 and ev.dQ_mvar == 0:
                return
            net.index(ev.bus)
            for i, ld in enumerate(self.loads):
                if ld.bus == ev.bus and ld.params.kind == "constant_power":
                    p = ld.params
                    self.loads[i] = Load(ld.name, ld.bus, replace(p, P=p.P + ev.dP_mw, Q=p.Q + ev.dQ_mvar))
                    break
            else:
                raise EventError(f"no constant-power load at bus {ev.bus!r} to step")
        elif ev.kind == "unit_trip":
            kind, k = self._locate(ev.target)
            on = self.sg_on if kind == "sg" else self.gf_on
            if not on[k]:
                raise EventError(f"unit {ev.target} already tripped")
            if self.sg_on.sum() + self.gf_on.sum() <= 1:
                raise EventError(f"tripping {ev.target} would leave no voltage-source unit")
            on[k] = False
            self._prune()
        elif ev.kind == "setpoint":
            kind, k = self._locate(ev.target)
            table = SG_FIELDS if kind == "sg" else GF_FIELDS
            if ev.field not in table:
                raise EventError(f"field {ev.field!r} not adjustable on {kind} units")
            arr = self.sg_p if kind == "sg" else self.gf_p
            arr[k, table[ev.field]] = ev.value
        self.rebuild()

    def _locate(self, name):
        for k, u in enumerate(self.sg_units):
            if u.name == name:
                return "sg", k
        for k, u in enumerate(self.gf_units):
            if u.name == name:
                return "gfor", k
        raise EventError(f"unknown unit {name!r}")

    def _prune(self):
        """Drop buses left dangling (one branch, no unit, no load) after a trip."""
        net = self.net
        used = set()
        for k, u in enumerate(self.sg_units):
            if self.sg_on[k]:
                used.add(self.sg_bus[k])
        for k, u in enumerate(self.gf_units):
            if self.gf_on[k]:
                used.add(self.gf_bus[k])
        for ld in self.loads:
            used.add(net.index(ld.bus))
        changed = True
        while changed:
            changed = False
            deg = np.zeros(net.n, dtype=int)
            for br in net.branches:
                i, j = net.index(br.from_bus), net.index(br.to_bus)
                if self.bus_active[i] and self.bus_active[j]:
                    deg[i] += 1
                    deg[j] += 1
            for k in range(net.n):
                if self.bus_active[k] and k not in used and deg[k] <= 1:
                    self.bus_active[k] = False
                    changed = True

    # -- outputs
    def channels(self, xs, Vs, x_init, t=None, load_hist=None):
        """Named output channels for recorded states ``xs`` and bus voltages ``Vs``.

        ``load_hist`` is a list of ``(t_from, {load: S_MVA})`` setpoint records;
        without it load powers use the current setpoints throughout.
        """
        net = self.net
        f0, sb = net.f0, net.s_base
        ch = {}
        ref_delta = None
        for k, u in enumerate(self.sg_units):
            o = self.offsets[u.name]
            p = u.params
            e = xs[:, o + 3] * np.exp(1j * xs[:, o])
            v = Vs[:, self.sg_bus[k]]
            i = (e - v) / complex(p.Ra, p.Xd_transient) * (p.S_rated / sb)
            pw = (v * np.conj(i)).real * sb
            alive = np.abs(Vs[:, self.sg_bus[k]]) > 0
            pw = pw * alive
            p_init = self._p_init(u)
            ch[f"f_{u.name}"] = f0 * (1 + xs[:, o + 1])
            ch[f"P_{u.name}_MW"] = pw
            ch[f"dP_{u.name}_MW"] = pw - p_init
            ch[f"dP_{u.name}_pu"] = (pw - p_init) / p.S_rated
            if ref_delta is None:
                ref_delta = xs[:, o]
        for k, u in enumerate(self.gf_units):
            o = self.offsets[u.name]
            p = u.params
            v = Vs[:, self.gf_bus[k]]
            vc = (xs[:, o + 6] + 1j * xs[:, o + 7]) * np.exp(1j * xs[:, o + 1])
            ig = (vc - v) / complex(p.R_tr, p.X_tr) * (p.S_rated / sb)
            pw = (v * np.conj(ig)).real * sb
            p_init = self._p_init(u)
            ch[f"f_{u.name}"] = f0 * xs[:, o]
            ch[f"P_{u.name}_MW"] = pw
            ch[f"dP_{u.name}_MW"] = pw - p_init
            ch[f"dP_{u.name}_pu"] = (pw - p_init) / p.S_rated
            if ref_delta is not None:
                ch[f"dtheta_{u.name}"] = xs[:, o + 1] - ref_delta
        for k, b in enumerate(net.buses):
            ch[f"V_{b.id}"] = np.abs(Vs[:, k])
        for ld in self.loads:
            s = complex(ld.params.P, ld.params.Q)
            if load_hist is not None and t is not None:
                starts = np.array([h[0] for h in load_hist])
                vals = np.array([h[1].get(ld.name, s) for h in load_hist])
                s = vals[np.searchsorted(starts, t + 1e-12, side="right") - 1]
            v2 = np.abs(Vs[:, net.index(ld.bus)]) ** 2
            if ld.params.kind == "constant_impedance":
                ch[f"P_{ld.name}_MW"] = np.real(s) * v2
            elif ld.params.dynamic:
                ch[f"P_{ld.name}_MW"] = np.real(s) * v2 / xs[:, self.offsets[ld.name]]
        return ch

    def _p_init(self, u):
        k = self.net.index(u.bus)
        p_bus = self.pf.p[k] * self.net.s_base
        for ld in self.pf_loads:
            if ld.bus == u.bus and ld.params.kind == "constant_power":
                p_bus += ld.params.P
        return p_bus


def simulate(sc: Scenario, model: CompiledModel | None = None, max_newton: int = 8) -> SimResult:
    """Integrate ``sc`` from its power-flow equilibrium, applying events at step boundaries."""
    m = CompiledModel(sc) if model is None else model
    dt = sc.dt
    tau_min = sc.smallest_time_constant()
    if dt > tau_min / 10 * (1 + 1e-9):
        warnings.warn(f"dt={dt} s exceeds a tenth of the smallest time constant {tau_min} s")
    n_total = int(round(sc.t_end / dt))
    rec_every = max(1, int(sc.record_every))
    n_rec = n_total // rec_every + 1
    nx = m.x0.size
    rec_x = np.empty((n_rec, nx))
    rec_V = np.empty((n_rec, m.net.n), dtype=complex)
    x = m.x0.copy()
    fx, V = m.rhs(x)
    m.V = V
    rec_x[0] = x
    rec_V[0] = V
    rec_pos = 1
    meta = {"events": [], "warnings": [], "bus_count": [m.n_active_buses()], "trips": {}}

    def load_setpoints():
        return {ld.name: complex(ld.params.P, ld.params.Q) for ld in m.loads}

    load_hist = [(0.0, load_setpoints())]

    ev_steps = []
    for ev in sc.events:
        if not 0 < ev.t < sc.t_end:
            raise EventError(f"event time {ev.t} outside (0, {sc.t_end})")
        k = int(round(ev.t / dt))
        if abs(k * dt - ev.t) > 1e-9:
            msg = f"event at t={ev.t} s moved to step boundary {k * dt} s"
            warnings.warn(msg)
            meta["warnings"].append(msg)
        ev_steps.append((k, ev))

    def factor(x):
        J = m.jacobian(x)
        return np.linalg.inv(np.eye(nx) - 0.5 * dt * J)

    Minv = factor(x)
    step = 0
    ev_i = 0
    refreshed = False
    while step < n_total:
        while ev_i < len(ev_steps) and ev_steps[ev_i][0] <= step:
            ev = ev_steps[ev_i][1]
            m.apply_event(ev)
            if ev.kind == "unit_trip":
                meta["trips"][ev.target] = step * dt
            meta["events"].append((step * dt, ev.kind))
            if ev.kind == "load_step":
                load_hist.append((step * dt, load_setpoints()))
            meta["bus_count"].append(m.n_active_buses())
            fx, V = m.rhs(x, V)
            Minv = factor(x)
            ev_i += 1
        stop = ev_steps[ev_i][0] if ev_i < len(ev_steps) else n_total
        stop = min(stop, n_total)
        status, done, rec_pos = integrate(x, fx, V, stop - step, dt, Minv, NEWTON_TOL, max_newton,
                                          rec_every, step, rec_x, rec_V, rec_pos, *m.args)
        step += done
        if status == 0:
            refreshed = False
            continue
        t_now = step * dt
        if status == 1 and not refreshed:
            Minv = factor(x)
            refreshed = True
            continue
        if status == 3:
            raise SimulationError("state magnitude exceeded 1e6: unstable trajectory", t_now)
        if status == 2:
            raise SimulationError("network iteration diverged", t_now)
        raise SimulationError("trapezoidal corrector failed to converge", t_now)

    xs, Vs = rec_x[:rec_pos], rec_V[:rec_pos]
    t = np.arange(rec_pos) * rec_every * dt
    ch = m.channels(xs, Vs, m.x0, t=t, load_hist=load_hist)
    for name, t_trip in meta["trips"].items():
        for key in (f"P_{name}_MW",):
            ch[key] = np.where(t >= t_trip, 0.0, ch[key])
        u = next(u for u in m.units if u.name == name)
        p0 = m._p_init(u)
        ch[f"dP_{name}_MW"] = ch[f"P_{name}_MW"] - p0
        ch[f"dP_{name}_pu"] = ch[f"dP_{name}_MW"] / u.params.S_rated
    if sc.record is not None:
        missing = [c for c in sc.record if c not in ch]
        if missing:
            raise KeyError(f"unknown channels requested: {missing}")
        ch = {c: ch[c] for c in sc.record}
    meta["final_state"] = x.copy()
    meta["model"] = m
    return SimResult(t, ch, xs, m.state_names, meta)


def apply_event(model: CompiledModel, x, ev: Event):
    """Apply ``ev`` to ``model``; differential states pass through unchanged."""
    model.apply_event(ev)
    return x
