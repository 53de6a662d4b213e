"""Frequency-response metrics: nadir, moving-average RoCoF, windowed average power, ringdown fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares

DEFAULT_WINDOWS = (0.5, 1.0, 2.0, 10.0)


class Rocof(NamedTuple):
    max_abs: float
    time: float
    slope: float


@dataclass
class FrequencyMetrics:
    nadir: float
    max_abs_rocof: float
    rocof_time: float
    f_steady: float
    avg_power: dict = field(default_factory=dict)


@dataclass
class RingdownFit:
    frequency: float
    damping: float
    amplitude: float
    residual: float
    sigma: float
    offset: float
    accepted: bool

    @property
    def time_constant(self) -> float:
        return -1.0 / self.sigma if self.sigma != 0 else np.inf

    @property
    def eigenvalue(self) -> complex:
        return complex(self.sigma, 2 * np.pi * self.frequency)


def _window_samples(dt: float, window: float) -> int:
    m = int(round(window / dt))
    if m < 1:
        raise ValueError("window must span at least two samples")
    return m


def moving_slope(f, dt: float, window: float = 0.5) -> np.ndarray:
    """Trailing-window slope (f[k] - f[k-m]) / window, defined from sample m onward."""
    f = np.asarray(f, dtype=float)
    m = _window_samples(dt, window)
    if f.size <= m:
        raise ValueError(f"series of {f.size} samples is shorter than the {window} s window")
    return (f[m:] - f[:-m]) / (m * dt)


def rocof_moving_avg(f, dt: float, window: float = 0.5, t0: float = 0.0,
                     t_dist: float | None = None) -> Rocof:
    """Largest magnitude of the trailing moving-average RoCoF.

    ``f`` is sampled uniformly with step ``dt`` starting at ``t0``. When
    ``t_dist`` is given only windows ending after the disturbance are scanned.
    """
    s = moving_slope(f, dt, window)
    m = len(f) - len(s)
    t_end = t0 + dt * np.arange(m, len(f))
    if t_dist is not None:
        mask = t_end > t_dist
        s, t_end = s[mask], t_end[mask]
        if s.size == 0:
            raise ValueError("no complete window after the disturbance")
    k = int(np.argmax(np.abs(s)))
    return Rocof(float(abs(s[k])), float(t_end[k]), float(s[k]))


def nadir(f, t=None, t_dist: float | None = None) -> float:
    f = np.asarray(f, dtype=float)
    if t is not None and t_dist is not None:
        f = f[np.asarray(t) >= t_dist]
    return float(np.min(f))


def avg_power(p, t, t_dist: float, windows: Sequence[float] = DEFAULT_WINDOWS) -> dict:
    """Mean of ``p`` over ``[t_dist, t_dist + w]`` for each window ``w`` (trapezoidal rule)."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    out = {}
    for w in windows:
        if t[-1] < t_dist + w - 1e-9:
            raise ValueError(f"series ends before the {w} s window closes")
        tq = np.linspace(t_dist, t_dist + w, max(int(round(w / np.min(np.diff(t)))) + 1, 2))
        pq = np.interp(tq, t, p)
        out[w] = float(np.trapezoid(pq, tq) / w)
    return out


def frequency_metrics(t, f, p_conv, t_dist: float, windows=DEFAULT_WINDOWS,
                      rocof_window: float = 0.5, steady_span: float = 1.0) -> FrequencyMetrics:
    """Summary row for one frequency channel and one converter power-increase channel (MW)."""
    t = np.asarray(t, dtype=float)
    dt = float(t[1] - t[0])
    roc = rocof_moving_avg(f, dt, rocof_window, t0=float(t[0]), t_dist=t_dist)
    tail = t >= t[-1] - steady_span
    return FrequencyMetrics(
        nadir=nadir(f, t, t_dist),
        max_abs_rocof=roc.max_abs,
        rocof_time=roc.time,
        f_steady=float(np.mean(np.asarray(f)[tail])),
        avg_power=avg_power(p_conv, t, t_dist, windows) if p_conv is not None else {},
    )


# --------------------------------------------------------------------------- ringdown

def _prony_roots(y, order):
    # linear prediction y[k] = sum a_i y[k-i]
    rows = np.column_stack([y[order - i - 1: len(y) - i - 1] for i in range(order)])
    coef, *_ = np.linalg.lstsq(rows, y[order:], rcond=None)
    return np.roots(np.concatenate([[1.0], -coef]))


def _osc_model(p, t):
    a, sigma, omega, phi, c = p
    return a * np.exp(sigma * t) * np.cos(omega * t + phi) + c


def _exp_model(p, t):
    a, sigma, c = p
    return a * np.exp(sigma * t) + c


def ringdown_fit(y, t, t_range: tuple | None = None, max_residual: float = 0.05,
                 n_fit: int = 600) -> RingdownFit:
    """Fit ``A exp(sigma t) cos(omega t + phi) + c`` (or ``A exp(sigma t) + c``).

    A Prony estimate seeds a nonlinear least-squares refinement. ``residual``
    is the RMS misfit relative to the RMS of the demeaned signal; fits above
    ``max_residual`` come back with ``accepted=False``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t_range is not None:
        mask = (t >= t_range[0]) & (t <= t_range[1])
        t, y = t[mask], y[mask]
    if t.size < 8:
        raise ValueError("too few samples for a ringdown fit")
    tt = t - t[0]
    step = max(1, t.size // n_fit)
    ts, ys = tt[::step], y[::step]
    h = ts[1] - ts[0]
    scale = float(np.std(ys)) or 1.0
    yn = (ys - ys.mean()) / scale

    candidates = []
    roots = _prony_roots(yn, 3)
    osc = [z for z in roots if abs(z.imag) > 1e-9 and z.imag > 0]
    if osc:
        z = osc[0]
        s = np.log(z) / h
        sigma0, omega0 = s.real, abs(s.imag)
        basis = np.column_stack([np.exp(sigma0 * ts) * np.cos(omega0 * ts),
                                 -np.exp(sigma0 * ts) * np.sin(omega0 * ts), np.ones_like(ts)])
        (cr, ci, c0), *_ = np.linalg.lstsq(basis, yn, rcond=None)
        p0 = [np.hypot(cr, ci), sigma0, omega0, np.arctan2(ci, cr), c0]
        res = least_squares(lambda p: _osc_model(p, ts) - yn, p0, method="lm")
        candidates.append(("osc", res))
    roots2 = _prony_roots(yn, 2)
    real = [z.real for z in roots2 if abs(z.imag) < 1e-12 and 0 < z.real < 1 - 1e-12]
    if real:
        sigma0 = np.log(min(real)) / h
        basis = np.column_stack([np.exp(sigma0 * ts), np.ones_like(ts)])
        (a0, c0), *_ = np.linalg.lstsq(basis, yn, rcond=None)
        res = least_squares(lambda p: _exp_model(p, ts) - yn, [a0, sigma0, c0], method="lm")
        candidates.append(("exp", res))
    if not candidates:
        raise ValueError("no decaying component found in the series")

    def rel_resid(res):
        return float(np.sqrt(np.mean(res.fun ** 2)) / (np.std(yn) or 1.0))

    # prefer the simpler exponential unless the oscillator is clearly better
    kind, best = min(candidates, key=lambda kc: rel_resid(kc[1]) * (1.0 if kc[0] == "exp" else 1.02))
    resid = rel_resid(best)
    if kind == "osc":
        a, sigma, omega, phi, c = best.x
        omega = abs(omega)
    else:
        a, sigma, c = best.x
        omega = 0.0
    mag = np.hypot(sigma, omega)
    damping = float(-sigma / mag) if mag > 0 else 1.0
    return RingdownFit(
        frequency=float(omega / (2 * np.pi)),
        damping=damping,
        amplitude=float(abs(a) * scale),
        residual=resid,
        sigma=float(sigma),
        offset=float(c * scale + ys.mean()),
        accepted=resid <= max_residual,
    )
