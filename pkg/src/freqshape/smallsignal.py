"""Linearization, eigenanalysis, participation factors and mode classification."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

P_MIN = 0.3
IN_PHASE_DEG = 60.0
COUNTER_PHASE_DEG = 120.0
SHAPE_MIN = 0.1   # frequency-state shape entries below this fraction of the largest are ignored
ZERO_TOL = 1e-6   # |lambda| below this is the angle-reference mode


class EquilibriumError(ValueError):
    pass


class DefectiveMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, condition):
        super().__init__(msg)
        self.condition = condition


class ClassificationError(ValueError):
    pass


@dataclass
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_names: list
    input_names: list = field(default_factory=list)
    output_names: list = field(default_factory=list)

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        m = self.B.shape[1] if self.B.ndim == 2 else 0
        p = self.C.shape[0] if self.C.ndim == 2 else 0
        if self.B.shape != (n, m) or self.C.shape != (p, n) or self.D.shape != (p, m):
            raise ValueError("inconsistent state-space dimensions")
        if len(self.state_names) != n:
            raise ValueError("state_names length does not match A")

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray
    right: np.ndarray   # columns phi_i
    left: np.ndarray    # rows psi_i, left @ right = I
    state_names: list
    condition: float = 1.0

    @property
    def frequencies(self) -> np.ndarray:
        return np.abs(self.eigenvalues) / (2 * np.pi)

    @property
    def damping(self) -> np.ndarray:
        return np.array([damping_ratio(l) for l in self.eigenvalues])


@dataclass
class PFMatrix:
    values: np.ndarray   # states x modes, column max 1
    raw: np.ndarray
    state_names: list
    eigenvalues: np.ndarray

    def column(self, i) -> np.ndarray:
        return self.values[:, i]

    def of(self, state: str, mode: int) -> float:
        return float(self.values[self.state_names.index(state), mode])

    def to_csv(self, path=None, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state"] + [f"mode{i}" for i in range(self.values.shape[1])])
        for k, name in enumerate(self.state_names):
            w.writerow([name] + [repr(float(v)) for v in self.values[k]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass
class ModeReport:
    mode: int
    eigenvalue: complex
    f_n: float
    damping: float
    participation: np.ndarray
    shape: dict
    classification: str
    frequency_pf: dict = field(default_factory=dict)
    dominant: bool = False

    @property
    def is_real(self) -> bool:
        return abs(self.eigenvalue.imag) < 1e-9 * max(1.0, abs(self.eigenvalue))


def damping_ratio(lam: complex) -> float:
    mag = abs(lam)
    if mag == 0:
        return 1.0
    return float(-lam.real / mag)


# --------------------------------------------------------------------------- linearization

def _as_system(sys):
    """Return ``(f, x0, names, model)`` for a scenario, compiled model or ``(f, x0)`` pair."""
    from .timedomain import CompiledModel, Scenario

    if isinstance(sys, Scenario):
        sys = CompiledModel(sys)
    if isinstance(sys, CompiledModel):
        m = sys
        return (lambda x: m.rhs(x)[0]), m.x0.copy(), list(m.state_names), m
    f, x0 = sys
    x0 = np.asarray(x0, dtype=float)
    return f, x0, [f"x{k}" for k in range(x0.size)], None


def jacobian(f: Callable, x0, h: float = 1e-6) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    J = np.empty((n, n))
    for j in range(n):
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return J


def _model_inputs(m):
    """Perturbable inputs of a compiled model: constant-power load P and unit power setpoints."""
    from . import components as cm

    inputs = []
    for k, name in enumerate(m.ld_names):
        def set_ld(v, k=k):
            m.ld_s[k] = complex(v, m.ld_s[k].imag)
        inputs.append((f"{name}.P", float(m.ld_s[k].real), set_ld))
    for k, u in enumerate(m.sg_units):
        def set_sg(v, k=k):
            m.sg_p[k, cm.SG_P0] = v
        inputs.append((f"{u.name}.P0_ref", float(m.sg_p[k, cm.SG_P0]), set_sg))
    for k, u in enumerate(m.gf_units):
        def set_gf(v, k=k):
            m.gf_p[k, cm.GF_PSTAR] = v
        inputs.append((f"{u.name}.P_star", float(m.gf_p[k, cm.GF_PSTAR]), set_gf))
    return inputs


def frequency_states(state_names: Sequence[str]) -> dict:
    """Unit name -> index of its frequency state (``.dw`` for SGs, ``.w`` for GFORs)."""
    out = {}
    for k, s in enumerate(state_names):
        unit, _, var = s.rpartition(".")
        if var in ("dw", "w"):
            out[unit] = k
    return out


def linearize(sys, x0=None, h: float = 1e-6, eq_tol: float = 1e-8) -> StateSpace:
    """Central-difference state-space model at an equilibrium.

    ``sys`` is a :class:`Scenario`, a :class:`CompiledModel` or a pair
    ``(f, x0)`` with ``f(x) -> dx``. For scenarios B spans load power and unit
    power setpoints (pu) and C picks the unit frequency states.
    """
    f, x_eq, names, m = _as_system(sys)
    if x0 is not None:
        x_eq = np.asarray(x0, dtype=float)
    r = float(np.max(np.abs(f(x_eq)), initial=0.0))
    if not r < eq_tol:
        raise EquilibriumError(f"not an equilibrium: |f(x0)|_inf = {r:.3e}")
    A = jacobian(f, x_eq, h)
    n = x_eq.size
    if m is None:
        return StateSpace(A, np.zeros((n, 0)), np.eye(n), np.zeros((n, 0)), names,
                          [], list(names))
    inputs = _model_inputs(m)
    B = np.zeros((n, len(inputs)))
    for j, (_, u0, setter) in enumerate(inputs):
        setter(u0 + h)
        fp = f(x_eq)
        setter(u0 - h)
        fm = f(x_eq)
        setter(u0)
        B[:, j] = (fp - fm) / (2 * h)
    fs = frequency_states(names)
    C = np.zeros((len(fs), n))
    for i, k in enumerate(fs.values()):
        C[i, k] = 1.0
    return StateSpace(A, B, C, np.zeros((len(fs), len(inputs))), names,
                      [u[0] for u in inputs], [f"{u}.freq" for u in fs])


# --------------------------------------------------------------------------- eigen / PF

def _ordered(lam):
    # slowest-decaying first; positive imaginary part before its conjugate
    return sorted(range(lam.size), key=lambda i: (-round(lam[i].real, 9), -round(lam[i].imag, 9)))


def eigen(ss: StateSpace | np.ndarray, max_condition: float = 1e12, state_names=None) -> EigenDecomposition:
    A = ss.A if isinstance(ss, StateSpace) else np.asarray(ss, dtype=float)
    names = ss.state_names if isinstance(ss, StateSpace) else (
        state_names or [f"x{k}" for k in range(A.shape[0])])
    if not np.all(np.isfinite(A)):
        raise ValueError("A contains non-finite entries")
    lam, phi = np.linalg.eig(A)
    order = _ordered(lam)
    lam, phi = lam[order], phi[:, order]
    cond = float(np.linalg.cond(phi))
    if not cond < max_condition:
        raise DefectiveMatrixError(
            f"eigenvector matrix is numerically singular (condition {cond:.3e}); A may be defective", cond)
    psi = np.linalg.inv(phi)
    scale = max(np.linalg.norm(A, 2), 1.0)
    res = np.linalg.norm(A @ phi - phi * lam, axis=0).max(initial=0.0)
    if res > 1e-8 * scale:
        raise DefectiveMatrixError(f"eigen residual {res:.3e} exceeds tolerance", cond)
    return EigenDecomposition(lam, phi, psi, list(names), cond)


def participation_matrix(ed: EigenDecomposition) -> PFMatrix:
    raw = np.abs(ed.right * ed.left.T)
    peak = raw.max(axis=0)
    peak[peak == 0] = 1.0
    return PFMatrix(raw / peak, raw, ed.state_names, ed.eigenvalues)


def mode_shape(ed: EigenDecomposition, mode: int, states: Sequence[int]) -> np.ndarray:
    return ed.right[list(states), mode]


# --------------------------------------------------------------------------- classification

def classify_shape(entries: Sequence[complex], in_phase: float = IN_PHASE_DEG,
                   counter_phase: float = COUNTER_PHASE_DEG, shape_min: float = SHAPE_MIN) -> str:
    """Global / Synchronisation / Other from the frequency-state entries of one mode shape."""
    z = np.asarray(entries, dtype=complex)
    if z.size == 0 or np.max(np.abs(z)) == 0:
        return "Other"
    z = z[np.abs(z) >= shape_min * np.max(np.abs(z))]
    if z.size == 1:
        return "Synchronisation"
    ang = []
    for i in range(z.size):
        for j in range(i + 1, z.size):
            ang.append(abs(np.degrees(np.angle(z[i] * np.conj(z[j])))))
    if max(ang) > counter_phase:
        return "Synchronisation"
    if max(ang) < in_phase:
        return "Global"
    return "Other"


def classify_modes(ed: EigenDecomposition, pf: PFMatrix | None = None, freq_states: dict | None = None,
                   p_min: float = P_MIN, in_phase: float = IN_PHASE_DEG,
                   counter_phase: float = COUNTER_PHASE_DEG, shape_min: float = SHAPE_MIN) -> list:
    """Reports for every mode with a frequency participation of at least ``p_min``.

    ``freq_states`` maps unit names to state indices and defaults to the
    ``.dw``/``.w`` states. One member of each conjugate pair is reported (the
    one with positive imaginary part). The slowest Global mode and the
    Synchronisation mode with the largest frequency participation carry
    ``dominant=True``. Reports are sorted by ``|Re(lambda)|``.
    """
    pf = participation_matrix(ed) if pf is None else pf
    fs = frequency_states(ed.state_names) if freq_states is None else dict(freq_states)
    if not fs:
        raise ClassificationError("no frequency states found; every unit needs a .dw or .w state")
    idx = list(fs.values())
    reports = []
    for i, lam in enumerate(ed.eigenvalues):
        if abs(lam) < ZERO_TOL or lam.imag < -1e-12:
            continue
        fpf = {u: float(pf.values[k, i]) for u, k in fs.items()}
        if max(fpf.values()) < p_min:
            continue
        shape = dict(zip(fs, mode_shape(ed, i, idx)))
        kind = classify_shape(list(shape.values()), in_phase, counter_phase, shape_min)
        reports.append(ModeReport(i, complex(lam), float(abs(lam) / (2 * np.pi)), damping_ratio(lam),
                                  pf.values[:, i].copy(), shape, kind, fpf))
    if not reports:
        raise ClassificationError("no mode has frequency-state participation above p_min")
    reports.sort(key=lambda r: (abs(r.eigenvalue.real), r.mode))
    glob = [r for r in reports if r.classification == "Global"]
    if glob:
        min(glob, key=lambda r: abs(r.eigenvalue.real)).dominant = True
    sync = [r for r in reports if r.classification == "Synchronisation"]
    if sync:
        max(sync, key=lambda r: (max(r.frequency_pf.values()), -abs(r.eigenvalue.real))).dominant = True
    return reports


def dominant(reports, kind: str) -> ModeReport | None:
    for r in reports:
        if r.dominant and r.classification == kind:
            return r
    return None


def modal_analysis(sys, h: float = 1e-6, **kw):
    """Linearize, decompose and classify in one call; returns ``(ss, ed, pf, reports)``."""
    ss = linearize(sys, h=h)
    ed = eigen(ss)
    pf = participation_matrix(ed)
    return ss, ed, pf, classify_modes(ed, pf, **kw)


def modes_to_csv(reports, path=None, header: str | None = None, include_all: EigenDecomposition | None = None) -> str:
    """One row per reported mode (or per eigenvalue when ``include_all`` is given)."""
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "real", "imag", "f_n_hz", "damping", "class", "dominant"])
    by_mode = {r.mode: r for r in reports}
    if include_all is not None:
        rows = range(include_all.eigenvalues.size)
        for i in rows:
            lam = include_all.eigenvalues[i]
            r = by_mode.get(i)
            w.writerow([i, repr(float(lam.real)), repr(float(lam.imag)), repr(float(abs(lam) / (2 * np.pi))),
                        repr(damping_ratio(lam)), r.classification if r else "Other",
                        int(bool(r and r.dominant))])
    else:
        for r in reports:
            w.writerow([r.mode, repr(r.eigenvalue.real), repr(r.eigenvalue.imag), repr(r.f_n),
                        repr(r.damping), r.classification, int(r.dominant)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
