"""Explicit Dormand-Prince 5(4) integration with PI step control and events.

The fast-slow systems handled here are mildly stiff at small eps; the explicit
pair works down to eps ~ 1e-3 by taking small steps, but step counts grow like
1/eps over slow-time horizons.  Use an implicit solver elsewhere if you need
much smaller eps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegrationError",
    "NoCrossingError",
    "ODEOptions",
    "Trajectory",
    "EventSpec",
    "integrate",
    "integrate_to_event",
    "reverse",
    "write_trajectory_csv",
]

Field = Callable[[np.ndarray], np.ndarray]

BLOWUP = 1e8

# Dormand & Prince (1980) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B4


class IntegrationError(RuntimeError):
    """Step size underflow; ``state``/``time`` hold the last accepted point."""

    def __init__(self, message: str, time: float, state: np.ndarray):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time
        self.state = state


class NoCrossingError(RuntimeError):
    pass


@dataclass
class ODEOptions:
    atol: float = 1e-10
    rtol: float = 1e-8
    max_step: float | None = None  # default t_end / 100
    first_step: float | None = None
    min_step: float = 1e-14
    # times the integrator must land on exactly (e.g. uniform orbit samples)
    sample_times: Sequence[float] | None = None
    # called after each accepted step as stop(t, z); True ends the run
    stop: Callable[[float, np.ndarray], bool] | None = None


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray  # shape (len(t), dim)
    reason: str  # "time-limit" | "event" | "blow-up" | "stopped"
    names: tuple[str, ...] | None = None

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]

    def at(self, times) -> np.ndarray:
        """Linear interpolation of the recorded samples."""
        times = np.atleast_1d(times)
        return np.column_stack([np.interp(times, self.t, self.z[:, j]) for j in range(self.z.shape[1])])


@dataclass
class EventSpec:
    """Scalar event g(z) = 0.  ``direction`` +1 counts only upward crossings,
    -1 only downward, 0 both."""

    function: Callable[[np.ndarray], float]
    direction: int = 0
    terminal: bool = True

    @classmethod
    def from_expr(cls, expr, names: Sequence[str], direction: int = 0, terminal: bool = True, constants=None):
        from .expr import compile_expressions

        fn = compile_expressions([expr], [tuple(names)], constants)
        return cls(lambda z: float(fn(z)[0]), direction, terminal)


def reverse(field: Field) -> Field:
    """The time-reversed field."""
    return lambda z: -field(z)


def _step(field: Field, z: np.ndarray, k1: np.ndarray, h: float):
    k = [k1]
    for i in range(1, 7):
        zi = z + h * sum(a * kj for a, kj in zip(_A[i], k))
        k.append(np.asarray(field(zi), dtype=float))
    z5 = z + h * sum(b * kj for b, kj in zip(_B, k) if b != 0.0)
    err = h * sum(e * kj for e, kj in zip(_E, k))
    return z5, err, k[6]


def _initial_step(field, z, f0, atol, rtol, max_step) -> float:
    sc = atol + rtol * np.abs(z)
    d0 = np.max(np.abs(z) / sc)
    d1 = np.max(np.abs(f0) / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = np.asarray(field(z + h0 * f0), dtype=float)
    d2 = np.max(np.abs(f1 - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def _run(field, z0, t_end, opts: ODEOptions, event: EventSpec | None):
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    z = np.array(z0, dtype=float)
    atol, rtol = opts.atol, opts.rtol
    max_step = opts.max_step if opts.max_step is not None else t_end / 100.0
    samples = sorted(float(s) for s in opts.sample_times if 0 < s <= t_end) if opts.sample_times is not None else []
    si = 0
    f0 = np.asarray(field(z), dtype=float)
    h = opts.first_step or _initial_step(field, z, f0, atol, rtol, max_step)
    ts, zs = [0.0], [z.copy()]
    t = 0.0
    facold = 1e-4
    beta, expo = 0.04, 0.2 - 0.04 * 0.75
    reason = "time-limit"
    g_prev = event.function(z) if event else None
    g_sign = np.sign(g_prev) if event else 0.0
    crossing = None
    while t < t_end:
        target = samples[si] if si < len(samples) else t_end
        h_try = min(h, max_step)
        land = t + h_try >= target - 1e-12 * max(1.0, abs(target))
        if land:
            h_try = target - t
        if h_try < opts.min_step:
            raise IntegrationError("step size underflow", t, z)
        z_new, err_vec, f_new = _step(field, z, f0, h_try)
        sc = atol + rtol * np.maximum(np.abs(z), np.abs(z_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err = float(np.max(np.abs(err_vec) / sc))
        if not math.isfinite(err):
            h = 0.25 * h_try
            continue
        if err > 1.0:
            h = h_try / min(10.0, max(1.0, (err ** expo) / 0.9))
            continue
        t_new = target if land else t + h_try
        if event is not None:
            g_new = event.function(z_new)
            if g_sign == 0.0:
                g_sign = np.sign(g_new)
            elif g_new == 0.0 or np.sign(g_new) != g_sign:
                upward = g_sign < 0
                if event.direction == 0 or (event.direction > 0) == upward:
                    tc, zc = _locate(field, event, t, z, f0, h_try, g_sign)
                    crossing = (tc, zc)
                    if tc > ts[-1]:
                        ts.append(tc)
                        zs.append(zc)
                    if event.terminal:
                        reason = "event"
                        break
                if g_new != 0.0:
                    g_sign = np.sign(g_new)
        t, z, f0 = t_new, z_new, f_new
        if land and si < len(samples) and target == samples[si]:
            si += 1
        if t > ts[-1]:
            ts.append(t)
            zs.append(z.copy())
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > BLOWUP:
            reason = "blow-up"
            break
        if opts.stop is not None and opts.stop(t, z):
            reason = "stopped"
            break
        fac = max(0.1, min(5.0, (err ** expo) / (facold ** beta) / 0.9))
        facold = max(err, 1e-4)
        h = max(h_try / fac, h) if land else h_try / fac
    ts_arr = np.array(ts)
    keep = np.concatenate([[True], np.diff(ts_arr) > 0])
    return Trajectory(ts_arr[keep], np.array(zs)[keep], reason), crossing


def _locate(field, event: EventSpec, t0, z0, f0, h, sign0, tol: float = 1e-10):
    """Find the crossing inside [t0, t0+h] by re-taking sub-steps of the accepted
    step from its start (Illinois regula falsi, every third iterate a bisection)."""
    a, ga = 0.0, float(sign0)  # only the sign at the left end matters
    b = h
    zb = _step(field, z0, f0, b)[0]
    gb = event.function(zb)
    best = (b, zb, gb)
    last = 0
    for it in range(200):
        if abs(best[2]) < tol or b - a < 1e-16 * max(1.0, abs(t0) + h):
            break
        if it % 3 == 2 or ga == gb:
            s = 0.5 * (a + b)
        else:
            s = b - gb * (b - a) / (gb - ga)
            if not a < s < b:
                s = 0.5 * (a + b)
        zs = _step(field, z0, f0, s)[0]
        gs = event.function(zs)
        if abs(gs) < abs(best[2]):
            best = (s, zs, gs)
        if gs == 0.0:
            break
        if np.sign(gs) == np.sign(ga):
            a, ga = s, gs
            if last == -1:
                gb *= 0.5
            last = -1
        else:
            b, gb = s, gs
            if last == 1:
                ga *= 0.5
            last = 1
    s, zc, _ = best
    return t0 + s, zc


def integrate(field: Field, z0, t_end: float, opts: ODEOptions | None = None) -> Trajectory:
    """Integrate ``z' = field(z)`` on [0, t_end], recording every accepted step.

    Local error per step is kept below ``atol + rtol*|z|`` componentwise.  The run
    ends early with reason ``"blow-up"`` once ``|z| > 1e8``.
    """
    return _run(field, z0, t_end, opts or ODEOptions(), None)[0]


def integrate_to_event(
    field: Field, z0, event: EventSpec, t_max: float, opts: ODEOptions | None = None
) -> tuple[Trajectory, np.ndarray, float]:
    """Integrate until ``event`` fires; returns (trajectory, crossing state, time).

    A zero of the event function at ``z0`` itself is never reported.
    """
    ev = EventSpec(event.function, event.direction, True)
    traj, crossing = _run(field, z0, t_max, opts or ODEOptions(), ev)
    if crossing is None:
        raise NoCrossingError(f"no event crossing before t={t_max:g} (ended by {traj.reason})")
    return traj, crossing[1], crossing[0]


def write_trajectory_csv(path, traj: Trajectory, names: Sequence[str] | None = None) -> None:
    names = names or traj.names or tuple(f"z{i + 1}" for i in range(traj.z.shape[1]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for t, z in zip(traj.t, traj.z):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in z)])
