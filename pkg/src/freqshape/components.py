"""Dynamic component models: synchronous generator, grid-forming converter, static loads.

Each dynamic model is an immutable parameter record plus a pure derivative
kernel. Kernels are numba-compiled so the simulation engine can call them
from its inner loop; the ``*_derivatives`` wrappers accept the records
directly for interactive use and tests.

Conventions
-----------
* Phasors are complex numbers in a frame rotating at nominal frequency.
* Machine and converter quantities are per unit on their own rating; the
  ``scale = S_rated / S_base`` factor converts currents to system base.
* Converter-internal qd quantities are stored as ``q + j d`` in the frame
  defined by the droop angle ``theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba as nb
import numpy as np

SG_STATES = ("delta", "dw", "pm", "e", "efd", "dw_f")
GFOR_STATES = ("w", "theta", "xi_q", "xi_d", "is_q", "is_d", "v_q", "v_d", "q_f")

# parameter-vector layouts shared with the engine
(SG_SCALE, SG_H, SG_D, SG_XDP, SG_RA, SG_R, SG_TT, SG_TE, SG_KA, SG_TA, SG_P0, SG_VREF, SG_WREF,
 SG_TW) = range(14)
SG_NPAR = 14
(GF_SCALE, GF_RT, GF_XT, GF_BC, GF_TCC, GF_KPV, GF_KIV, GF_R, GF_TP, GF_KQV,
 GF_PSTAR, GF_QSTAR, GF_VSTAR, GF_WSET, GF_KFF, GF_TQ, GF_RV, GF_XV) = range(18)
GF_NPAR = 18


class InfeasibleOperatingPoint(ValueError):
    pass


class VoltageCollapse(ValueError):
    pass


@dataclass(frozen=True)
class SgParams:
    """Synchronous generator with governor/turbine and first-order excitation.

    ``P0_ref`` and ``V_ref`` left as ``None`` are back-solved from the power flow.
    """

    S_rated: float = 400.0
    H: float = 5.0
    D: float = 0.0
    Xd_transient: float = 0.3
    Ra: float = 0.003
    R_f_sg: float = 0.05
    tau_turb: float = 5.0
    T_emf: float = 5.0
    T_w: float = 1.0
    Kavr: float = 50.0
    tau_avr: float = 0.05
    P0_ref: float | None = None
    f0_ref: float = 50.0
    V_ref: float | None = None

    def __post_init__(self):
        for name in ("S_rated", "H", "tau_turb", "R_f_sg", "Xd_transient", "T_emf", "tau_avr", "T_w"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SgParams.{name} must be positive")
        if self.Kavr < 0 or self.Ra < 0 or self.D < 0:
            raise ValueError("SgParams.Kavr, Ra and D must be non-negative")

    @property
    def time_constants(self):
        return (self.tau_turb, self.T_emf, self.tau_avr)

    def to_array(self, s_base: float, f0: float) -> np.ndarray:
        if self.P0_ref is None or self.V_ref is None:
            raise ValueError("SG setpoints unresolved; initialize from a power flow first")
        p = np.empty(SG_NPAR)
        p[SG_SCALE] = self.S_rated / s_base
        p[SG_H] = self.H
        p[SG_D] = self.D
        p[SG_XDP] = self.Xd_transient
        p[SG_RA] = self.Ra
        p[SG_R] = self.R_f_sg
        p[SG_TT] = self.tau_turb
        p[SG_TE] = self.T_emf
        p[SG_KA] = self.Kavr
        p[SG_TA] = self.tau_avr
        p[SG_P0] = self.P0_ref
        p[SG_VREF] = self.V_ref
        p[SG_WREF] = self.f0_ref / f0
        p[SG_TW] = self.T_w
        return p


def voltage_pi_gains(Cac: float, f_bw: float = 50.0, zeta: float = 0.7, f0: float = 50.0):
    """PI gains placing the capacitor-voltage loop poles at ``f_bw`` with damping ``zeta``.

    With ideal current feed-forward the loop is ``(Cac/wb) s^2 + kpv s + kiv``.
    """
    wn = 2 * math.pi * f_bw
    c = Cac / (2 * math.pi * f0)
    return 2 * zeta * wn * c, wn * wn * c


@dataclass(frozen=True)
class GforParams:
    """Droop-based grid-forming converter with cascaded voltage/current control.

    The LC filter capacitor connects to the point of connection through the
    coupling transformer ``R_tr + j X_tr``. ``Rc``/``Lc`` (converter-side
    filter) only enter the modulated-voltage output because the current loop
    is represented by its closed-loop lag ``tau_cc``.
    """

    S_rated: float = 100.0
    Rc: float = 0.005
    Lc: float = 0.15
    Cac: float = 0.05
    R_tr: float = 0.0025
    X_tr: float = 0.1
    tau_cc: float = 1e-3
    kpv: float | None = None
    kiv: float | None = None
    R_f_gfor: float = 0.05
    tau_p_gfor: float = 0.1
    k_qv: float = 0.02
    tau_q: float = 0.02
    r_v: float = 0.0
    x_v: float = 0.0
    k_ff: float = 1.0
    P_star: float | None = None
    Q_star: float | None = None
    V_star: float | None = None
    f0: float = 50.0
    f_ref: float | None = None

    def __post_init__(self):
        for name in ("S_rated", "Lc", "Cac", "tau_cc", "tau_p_gfor", "tau_q", "X_tr"):
            if not getattr(self, name) > 0:
                raise ValueError(f"GforParams.{name} must be positive")
        if self.R_f_gfor < 0:
            raise ValueError("GforParams.R_f_gfor must be non-negative")
        if self.kpv is None or self.kiv is None:
            kpv, kiv = voltage_pi_gains(self.Cac, f0=self.f0)
            object.__setattr__(self, "kpv", kpv if self.kpv is None else self.kpv)
            object.__setattr__(self, "kiv", kiv if self.kiv is None else self.kiv)

    @property
    def time_constants(self):
        return (self.tau_cc, self.tau_p_gfor, self.tau_q)

    def to_array(self, s_base: float, f0: float) -> np.ndarray:
        if None in (self.P_star, self.Q_star, self.V_star, self.f_ref):
            raise ValueError("GFOR setpoints unresolved; initialize from a power flow first")
        p = np.empty(GF_NPAR)
        p[GF_SCALE] = self.S_rated / s_base
        p[GF_RT] = self.R_tr
        p[GF_XT] = self.X_tr
        p[GF_BC] = self.Cac
        p[GF_TCC] = self.tau_cc
        p[GF_KPV] = self.kpv
        p[GF_KIV] = self.kiv
        p[GF_R] = self.R_f_gfor
        p[GF_TP] = self.tau_p_gfor
        p[GF_KQV] = self.k_qv
        p[GF_PSTAR] = self.P_star
        p[GF_QSTAR] = self.Q_star
        p[GF_VSTAR] = self.V_star
        p[GF_WSET] = self.f_ref / f0
        p[GF_KFF] = self.k_ff
        p[GF_TQ] = self.tau_q
        p[GF_RV] = self.r_v
        p[GF_XV] = self.x_v
        return p


@dataclass(frozen=True)
class LoadParams:
    """Static load. A constant-power load with ``tau_v > 0`` draws
    ``conj(S) V / |V_f|^2`` where ``|V_f|^2`` follows ``|V|^2`` through a lag of
    ``tau_v``: constant power at steady state, constant admittance at the
    converter-control time scale. ``tau_v = 0`` gives the algebraic form.
    """

    kind: str = "constant_power"
    P: float = 0.0
    Q: float = 0.0
    v_min: float = 0.1
    tau_v: float = 0.02

    def __post_init__(self):
        if self.kind not in ("constant_power", "constant_impedance"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if self.tau_v < 0:
            raise ValueError("LoadParams.tau_v must be non-negative")

    @property
    def dynamic(self) -> bool:
        return self.kind == "constant_power" and self.tau_v > 0


# --------------------------------------------------------------------------- kernels

@nb.njit(cache=True)
def sg_current(x, v, p):
    """Stator current on machine base."""
    e = x[3] * complex(math.cos(x[0]), math.sin(x[0]))
    return (e - v) / complex(p[SG_RA], p[SG_XDP])


@nb.njit(cache=True)
def sg_norton(x, p):
    """Norton source current on system base (admittance handled by the network)."""
    e = x[3] * complex(math.cos(x[0]), math.sin(x[0]))
    return e / complex(p[SG_RA], p[SG_XDP]) * p[SG_SCALE]


@nb.njit(cache=True)
def sg_rhs(x, v, p, wb, dx):
    e = x[3] * complex(math.cos(x[0]), math.sin(x[0]))
    i = (e - v) / complex(p[SG_RA], p[SG_XDP])
    pe = (e * i.conjugate()).real
    dw = x[1]
    pref = p[SG_P0] + (p[SG_WREF] - 1.0 - dw) / p[SG_R]
    dx[0] = wb * dw
    dx[1] = (x[2] - pe - p[SG_D] * (dw - x[5])) / (2.0 * p[SG_H])
    dx[2] = (pref - x[2]) / p[SG_TT]
    dx[3] = (x[4] - x[3]) / p[SG_TE]
    dx[4] = (p[SG_KA] * (p[SG_VREF] - abs(v)) - x[4]) / p[SG_TA]
    dx[5] = (dw - x[5]) / p[SG_TW]


@nb.njit(cache=True)
def gfor_norton(x, p):
    """Capacitor voltage behind the coupling transformer as a Norton current (system base)."""
    v = complex(x[6], x[7]) * complex(math.cos(x[1]), math.sin(x[1]))
    return v / complex(p[GF_RT], p[GF_XT]) * p[GF_SCALE]


@nb.njit(cache=True)
def gfor_grid_current(x, v_poc, p):
    """Transformer current in the converter frame, machine base."""
    rot = complex(math.cos(x[1]), -math.sin(x[1]))
    return (complex(x[6], x[7]) - v_poc * rot) / complex(p[GF_RT], p[GF_XT])


@nb.njit(cache=True)
def gfor_rhs(x, v_poc, p, wb, dx):
    # is_q/is_d hold the lagged voltage-controller output; the grid-current and
    # capacitor feed-forward terms act directly on the filter current
    w = x[0]
    xi = complex(x[2], x[3])
    i_c = complex(x[4], x[5])
    v = complex(x[6], x[7])
    ig = gfor_grid_current(x, v_poc, p)
    s = v * ig.conjugate()
    vref = p[GF_VSTAR] + p[GF_KQV] * (p[GF_QSTAR] - x[8])
    err = vref - complex(p[GF_RV], p[GF_XV]) * ig - v
    dic = (p[GF_KPV] * err + p[GF_KIV] * xi - i_c) / p[GF_TCC]
    dv = wb / p[GF_BC] * (i_c - (1.0 - p[GF_KFF]) * ig)
    dx[0] = (p[GF_WSET] - p[GF_R] * (s.real - p[GF_PSTAR]) - w) / p[GF_TP]
    dx[1] = wb * (w - 1.0)
    dx[2] = err.real
    dx[3] = err.imag
    dx[4] = dic.real
    dx[5] = dic.imag
    dx[6] = dv.real
    dx[7] = dv.imag
    dx[8] = (s.imag - x[8]) / p[GF_TQ]


# --------------------------------------------------------------------------- python API

def sg_derivatives(x, v_bus: complex, p: SgParams, s_base: float = 100.0, f0: float = 50.0) -> np.ndarray:
    dx = np.zeros(len(SG_STATES))
    sg_rhs(np.asarray(x, dtype=float), complex(v_bus), p.to_array(s_base, f0), 2 * math.pi * f0, dx)
    return dx


def sg_power_reference(dw: float, p: SgParams, f0: float = 50.0) -> float:
    """Governor power reference (machine pu) at speed deviation ``dw`` (pu)."""
    return p.P0_ref + (p.f0_ref / f0 - 1.0 - dw) / p.R_f_sg


def sg_electrical_power(x, v_bus: complex, p: SgParams) -> tuple[float, float]:
    """Air-gap power (behind the transient reactance) and terminal power, machine pu."""
    e = x[3] * np.exp(1j * x[0])
    i = (e - v_bus) / complex(p.Ra, p.Xd_transient)
    p_internal = (e * np.conj(i)).real
    p_terminal = (v_bus * np.conj(i)).real
    return float(p_internal), float(p_terminal)


def gfor_derivatives(x, v_poc: complex, p: GforParams, s_base: float = 100.0) -> np.ndarray:
    dx = np.zeros(len(GFOR_STATES))
    gfor_rhs(np.asarray(x, dtype=float), complex(v_poc), p.to_array(s_base, p.f0),
             2 * math.pi * p.f0, dx)
    return dx


def gfor_frequency(x, p: GforParams) -> float:
    """Internal converter frequency in Hz."""
    return float(x[0] * p.f0)


def load_current(v_bus: complex, p: LoadParams, s_base: float = 100.0,
                 v2_filt: float | None = None) -> complex:
    """Current drawn by the load (system pu).

    ``v2_filt`` is the filtered squared voltage of a dynamic constant-power
    load; omitted, the steady-state value ``|v_bus|^2`` is used.
    """
    s = complex(p.P, p.Q) / s_base
    if p.kind == "constant_impedance":
        return np.conj(s) * v_bus
    if abs(v_bus) < p.v_min:
        raise VoltageCollapse(f"|V|={abs(v_bus):.4f} pu below the constant-power guard {p.v_min}")
    if v2_filt is not None:
        return np.conj(s) * v_bus / v2_filt
    return np.conj(s / v_bus)


def sg_init(p: SgParams, v_t: complex, s_inj: complex, s_base: float, f0: float):
    """Back-solve SG states and setpoints from terminal voltage and injected power (system pu).

    Returns ``(x0, resolved_params)``.
    """
    scale = p.S_rated / s_base
    s_m = s_inj / scale
    if abs(s_m) > 1.5:
        raise InfeasibleOperatingPoint(f"SG loading {abs(s_m):.2f} pu exceeds 1.5 x rating")
    i = np.conj(s_m / v_t)
    e = v_t + complex(p.Ra, p.Xd_transient) * i
    pe = (e * np.conj(i)).real
    x0 = np.array([np.angle(e), 0.0, pe, abs(e), abs(e), 0.0])
    p0 = pe - (p.f0_ref / f0 - 1.0) / p.R_f_sg
    v_ref = abs(v_t) + abs(e) / p.Kavr if p.Kavr > 0 else abs(v_t)
    q = replace(p, P0_ref=p0 if p.P0_ref is None else p.P0_ref, V_ref=v_ref)
    if p.P0_ref is not None and abs(p.P0_ref - p0) > 1e-12:
        # setpoint differs from dispatch: shift the governor reference so the start is stationary
        q = replace(q, f0_ref=f0 * (1.0 + (pe - p.P0_ref) * p.R_f_sg))
    return x0, q


def gfor_init(p: GforParams, v_poc: complex, s_inj: complex, s_base: float):
    """Back-solve converter states and setpoints from POC voltage and injected power (system pu)."""
    scale = p.S_rated / s_base
    s_m = s_inj / scale
    if abs(s_m) > 1.5:
        raise InfeasibleOperatingPoint(f"converter loading {abs(s_m):.2f} pu exceeds 1.5 x rating")
    ig_g = np.conj(s_m / v_poc)
    vc_g = v_poc + complex(p.R_tr, p.X_tr) * ig_g
    # the frame aligns with the voltage behind the virtual impedance
    theta = float(np.angle(vc_g + complex(p.r_v, p.x_v) * ig_g))
    rot = np.exp(-1j * theta)
    v = vc_g * rot
    ig = ig_g * rot
    i_c = (1.0 - p.k_ff) * ig
    xi0 = i_c / p.kiv
    s_meas = v * np.conj(ig)
    p_star = s_meas.real if p.P_star is None else p.P_star
    q_star = s_meas.imag if p.Q_star is None else p.Q_star
    e = (v + complex(p.r_v, p.x_v) * ig).real
    v_star = e - p.k_qv * (q_star - s_meas.imag)
    f_ref = p.f0 * (1.0 + p.R_f_gfor * (s_meas.real - p_star))
    x0 = np.array([1.0, theta, xi0.real, xi0.imag, i_c.real, i_c.imag, v.real, v.imag,
                   s_meas.imag])
    q = replace(p, P_star=p_star, Q_star=q_star, V_star=v_star, f_ref=f_ref)
    return x0, q


@dataclass(frozen=True)
class Unit:
    """A dynamic component attached to a bus with its power-flow dispatch."""

    name: str
    bus: object
    params: SgParams | GforParams
    P_mw: float = 0.0
    V_pu: float = 1.0

    @property
    def kind(self) -> str:
        return "sg" if isinstance(self.params, SgParams) else "gfor"

    @property
    def state_names(self):
        names = SG_STATES if self.kind == "sg" else GFOR_STATES
        return [f"{self.name}.{s}" for s in names]


@dataclass(frozen=True)
class Load:
    name: str
    bus: object
    params: LoadParams
