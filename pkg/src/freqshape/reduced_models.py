"""Reduced-order frequency models for SG, SG + grid-following and SG + grid-forming systems.

All transfer functions map a load increase (pu) to the frequency deviation (pu).
Step responses are returned with the physical sign, i.e. a positive load step
produces a negative frequency deviation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class SgReducedParams:
    H: float = 5.0
    R_f_sg: float = 0.05
    tau_turb: float = 5.0
    f0: float = 50.0
    S_base: float = 100.0

    def __post_init__(self):
        for name in ("H", "R_f_sg", "tau_turb", "f0", "S_base"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class GfolReducedParams:
    base: SgReducedParams = field(default_factory=SgReducedParams)
    alpha: float = 0.0
    beta: float = 1.0
    R_f_gfol: float = 0.05
    tau_p_gfol: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (self.R_f_gfol > 0 and self.tau_p_gfol > 0):
            raise ValueError("R_f_gfol and tau_p_gfol must be positive")


@dataclass(frozen=True)
class GforReducedParams:
    base: SgReducedParams = field(default_factory=SgReducedParams)
    alpha: float = 0.0
    R_f_gfor: float = 0.05
    tau_p_gfor: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.R_f_gfor > 0 and self.tau_p_gfor > 0):
            raise ValueError("R_f_gfor and tau_p_gfor must be positive")


@dataclass(frozen=True)
class RationalTransfer:
    """Polynomial ratio num(s)/den(s), coefficients in descending powers of s."""

    num: tuple
    den: tuple

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("denominator is identically zero")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise ValueError("transfer function is improper")
        object.__setattr__(self, "num", tuple(num))
        object.__setattr__(self, "den", tuple(den))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def dc_gain(self) -> float:
        return self.num[-1] / self.den[-1]

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num) if len(self.num) > 1 else np.array([])

    def is_stable(self) -> bool:
        return bool(np.all(self.poles().real < 0))

    def monic(self) -> "RationalTransfer":
        lead = self.den[0]
        return RationalTransfer(np.asarray(self.num) / lead, np.asarray(self.den) / lead)

    def smallest_time_constant(self) -> float:
        roots = np.concatenate([self.poles(), self.zeros()])
        roots = roots[np.abs(roots) > 0]
        if roots.size == 0:
            return np.inf
        return float(1.0 / np.max(np.abs(roots)))

    def state_space(self):
        """Controllable canonical realization (A, B, C, D)."""
        tf = self.monic()
        den = np.asarray(tf.den)
        n = len(den) - 1
        num = np.zeros(n + 1)
        num[n + 1 - len(tf.num):] = tf.num
        d = num[0]
        # strictly proper remainder of num/den
        rem = num[1:] - d * den[1:]
        A = np.zeros((n, n))
        if n > 0:
            A[0, :] = -den[1:]
            A[1:, :-1] = np.eye(n - 1)
        B = np.zeros((n, 1))
        if n > 0:
            B[0, 0] = 1.0
        C = rem.reshape(1, n)
        D = np.array([[d]])
        return A, B, C, D


@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray
    y: np.ndarray
    dt: float
    unstable: bool = False

    def __post_init__(self):
        if len(self.t) != len(self.y):
            raise ValueError("t and y lengths differ")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def initial_slope(self) -> float:
        return float((self.y[1] - self.y[0]) / self.dt)

    def final_value(self) -> float:
        return float(self.y[-1])


def sg_transfer(p: SgReducedParams) -> RationalTransfer:
    """Second-order SG frequency model: (tau s + 1)/(2H tau s^2 + 2H s + 1/R)."""
    return RationalTransfer(
        (p.tau_turb, 1.0),
        (2.0 * p.H * p.tau_turb, 2.0 * p.H, 1.0 / p.R_f_sg),
    )


def gfol_transfer(p: GfolReducedParams, form: str = "expanded") -> RationalTransfer:
    """Third-order model of an SG system with a share ``alpha`` of grid-following converters.

    ``form="expanded"`` uses the denominator obtained by closing the swing,
    turbine and converter-support loops exactly; it collapses onto
    :func:`sg_transfer` times ``(tau_p s + 1)`` when ``alpha == 0`` and keeps
    the converter droop out of the DC gain when ``beta == 0``.

    ``form="legacy"`` gives the alternative coefficient set
    ``a1 = (2H + 1/R_sg)(1 - alpha) + tau_turb alpha beta / R_gfol`` and
    ``a0 = (1 - alpha)/R_sg + alpha/R_gfol``. It does not reduce to the SG
    model at ``alpha = 0`` and is kept only for comparison.
    """
    b = p.base
    a = p.alpha
    n = 1.0 - a
    two_h = 2.0 * b.H
    tt, tp = b.tau_turb, p.tau_p_gfol
    a3 = two_h * n * tt * tp
    a2 = two_h * n * (tt + tp)
    if form == "expanded":
        a1 = two_h * n + n * tp / b.R_f_sg + tt * a * p.beta / p.R_f_gfol
        a0 = n / b.R_f_sg + a * p.beta / p.R_f_gfol
    elif form == "legacy":
        a1 = (two_h + 1.0 / b.R_f_sg) * n + tt * a * p.beta / p.R_f_gfol
        a0 = n / b.R_f_sg + a / p.R_f_gfol
    else:
        raise ValueError(f"unknown form {form!r}")
    num = np.polymul([tt, 1.0], [tp, 1.0])
    return RationalTransfer(num, (a3, a2, a1, a0))


def gfor_transfer(p: GforReducedParams) -> RationalTransfer:
    b = p.base
    a = p.alpha
    two_h_sg = 2.0 * b.H * (1.0 - a)
    k = a / p.R_f_gfor
    b2 = (two_h_sg + p.tau_p_gfor * k) * b.tau_turb
    b1 = two_h_sg + (b.tau_turb + p.tau_p_gfor) * k
    b0 = (1.0 - a) / b.R_f_sg + k
    return RationalTransfer((b.tau_turb, 1.0), (b2, b1, b0))


def standalone_gfor_transfer(R_f_gfor: float, tau_p_gfor: float) -> RationalTransfer:
    if not (R_f_gfor > 0 and tau_p_gfor > 0):
        raise ValueError("R_f_gfor and tau_p_gfor must be positive")
    return RationalTransfer((R_f_gfor,), (tau_p_gfor, 1.0))


def initial_rocof(tf: RationalTransfer, deltaP: float) -> float:
    """Analytic slope of the frequency response at t = 0+ (pu/s).

    Only defined for relative degree one; for higher relative degree the slope is zero.
    """
    rel = len(tf.den) - len(tf.num)
    if rel > 1:
        return 0.0
    if rel == 0:
        raise ValueError("biproper transfer function has a jump, not a slope, at t = 0")
    return -deltaP * tf.num[0] / tf.den[0]


def step_response(tf: RationalTransfer, deltaP: float, t_end: float, dt: float) -> StepResponse:
    """Frequency deviation after a load step of ``deltaP`` applied at t = 0.

    Uses the exact zero-order-hold update of the controllable canonical
    realization, so accuracy is independent of ``dt`` apart from sampling.
    The first sample is the pre-step value (zero).
    """
    if not (0 < dt < t_end):
        raise ValueError("require 0 < dt < t_end")
    tau_min = tf.smallest_time_constant()
    if dt > tau_min / 10.0:
        warnings.warn(f"dt={dt} exceeds a tenth of the smallest time constant ({tau_min:.3g} s)")
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt
    y = np.zeros(n_steps + 1)
    unstable = not tf.is_stable()
    if deltaP == 0.0:
        return StepResponse(t, y, dt, unstable)

    A, B, C, D = tf.state_space()
    n = A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * dt)
    Ad, Bd = E[:n, :n], E[:n, n]
    u = -deltaP
    x = np.zeros(n)
    c = C[0]
    d = D[0, 0]
    for k in range(1, n_steps + 1):
        x = Ad @ x + Bd * u
        y[k] = c @ x + d * u
    return StepResponse(t, y, dt, unstable)


@dataclass
class SweepCell:
    alpha: float
    beta: float
    nadir: float
    rocof: float
    nadir_ratio: float
    rocof_ratio: float


def _cell_metrics(tf, deltaP, t_end, dt, f0, window):
    from .metrics import rocof_moving_avg

    resp = step_response(tf, deltaP, t_end, dt)
    f_hz = f0 * (1.0 + resp.y)
    nadir_dev = float(-np.min(resp.y))
    roc = rocof_moving_avg(f_hz, dt, window=window).max_abs
    return nadir_dev, roc


def penetration_sweep(alphas, betas, p, deltaP: float = 0.1, t_end: float = 60.0,
                      dt: float = 0.005, window: float = 0.5):
    """Nadir and moving-average RoCoF, relative to the all-SG case, over an alpha/beta grid.

    ``p`` is a :class:`GfolReducedParams` or :class:`GforReducedParams` supplying
    every field except the swept ones; for grid-forming sweeps ``beta`` has no
    effect and every row of a given alpha is identical.

    Returns a list of :class:`SweepCell` in row-major (alpha, beta) order.
    """
    if not isinstance(p, (GfolReducedParams, GforReducedParams)):
        raise TypeError(f"unsupported parameter type {type(p).__name__}")
    base_tf = sg_transfer(p.base)
    f0 = p.base.f0
    base_nadir, base_rocof = _cell_metrics(base_tf, deltaP, t_end, dt, f0, window)
    cells = []
    for a in alphas:
        for b in betas:
            if isinstance(p, GfolReducedParams):
                tf = gfol_transfer(GfolReducedParams(p.base, a, b, p.R_f_gfol, p.tau_p_gfol))
            else:
                tf = gfor_transfer(GforReducedParams(p.base, a, p.R_f_gfor, p.tau_p_gfor))
            if a == 0.0:
                nad, roc = base_nadir, base_rocof
            else:
                nad, roc = _cell_metrics(tf, deltaP, t_end, dt, f0, window)
            cells.append(SweepCell(a, b, nad, roc, nad / base_nadir, roc / base_rocof))
    return cells
