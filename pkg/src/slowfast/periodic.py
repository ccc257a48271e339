"""Periodic orbits of a planar fast subsystem, their Floquet multipliers, and
averages of slow right-hand sides over them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .expr import Expr, compile_expressions, free_variables
from .ode import EventSpec, NoCrossingError, ODEOptions, integrate, integrate_to_event
from .system import FastSlowSystem

__all__ = [
    "OrbitError",
    "LineSection",
    "PeriodicOrbit",
    "AverageResult",
    "OrbitFamily",
    "find_periodic_orbit",
    "average_over_orbit",
    "averaged_slow_field",
    "check_averaging_accuracy",
    "write_orbit_csv",
    "write_averages_csv",
    "scan_periodic_orbits",
]

ORBIT_OPTS = dict(atol=1e-13, rtol=1e-12)


class OrbitError(RuntimeError):
    pass


@dataclass(frozen=True)
class LineSection:
    """Line ``normal . (x - point) = 0``; crossings counted in the ``+normal`` direction."""

    point: np.ndarray
    normal: np.ndarray

    @property
    def along(self) -> np.ndarray:
        return np.array([-self.normal[1], self.normal[0]])

    def event(self) -> EventSpec:
        p, nv = self.point, self.normal
        return EventSpec(lambda x: float(nv @ (x - p)), direction=+1)

    def coordinate(self, x) -> float:
        return float(self.along @ (np.asarray(x) - self.point))

    def at(self, s: float) -> np.ndarray:
        return self.point + s * self.along


@dataclass
class PeriodicOrbit:
    y: np.ndarray
    section: LineSection
    fixed_point: np.ndarray
    period: float
    times: np.ndarray
    samples: np.ndarray  # (len(times), 2); first and last rows close up
    multipliers: np.ndarray
    residual: float
    hyperbolic: bool = True

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.multipliers) < 1.0))

    @property
    def closure(self) -> float:
        return float(np.linalg.norm(self.samples[-1] - self.samples[0]))

    def distance(self, x) -> float:
        """Distance from a fast-plane point to the sampled orbit polyline."""
        P = self.samples
        a, b = P[:-1], P[1:]
        d = b - a
        L2 = np.einsum("ij,ij->i", d, d)
        s = np.clip(np.einsum("ij,ij->i", np.asarray(x) - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        proj = a + s[:, None] * d
        return float(np.min(np.linalg.norm(proj - x, axis=1)))


@dataclass(frozen=True)
class AverageResult:
    value: float
    period: float
    n_samples: int
    error_estimate: float


def _return_map(F, section: LineSection, s: float, t_max: float, opts: ODEOptions) -> tuple[float, float]:
    # The start lies on the section, so step off it before arming the event.
    x0 = section.at(s)
    speed = float(np.linalg.norm(F(x0)))
    if speed == 0.0:
        raise OrbitError("section point is an equilibrium")
    t0 = 1e-3 / speed
    x1 = integrate(F, x0, t0, opts).final
    _, xc, tc = integrate_to_event(F, x1, section.event(), t_max, opts)
    return section.coordinate(xc), t0 + tc


def find_periodic_orbit(
    sys: FastSlowSystem,
    y,
    section: LineSection | None,
    x_guess,
    *,
    n_samples: int = 512,
    t_max: float = 500.0,
    fd_step: float = 1e-6,
    tol: float = 1e-11,
    max_iter: int = 40,
) -> PeriodicOrbit:
    """Newton on the one-dimensional return map of a line section.

    When ``section`` is None, the line through ``x_guess`` normal to the fast
    field there is used.  The return-map derivative at the fixed point is the
    nontrivial Floquet multiplier.  Unstable orbits are found as readily as
    stable ones.
    """
    if sys.m != 2:
        raise ValueError("periodic orbits are supported for two fast variables only")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    F = sys.fast_field(y)
    x_guess = np.asarray(x_guess, dtype=float)
    if section is None:
        v = F(x_guess)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            raise OrbitError("guess is an equilibrium; cannot build a section")
        section = LineSection(x_guess.copy(), v / nv)
    opts = ODEOptions(max_step=1.0, **ORBIT_OPTS)
    s = section.coordinate(x_guess)
    try:
        for it in range(max_iter):
            p0, period = _return_map(F, section, s, t_max, opts)
            pp, _ = _return_map(F, section, s + fd_step, t_max, opts)
            pm, _ = _return_map(F, section, s - fd_step, t_max, opts)
            r = p0 - s
            mult = (pp - pm) / (2 * fd_step)
            if abs(r) < tol:
                break
            slope = mult - 1.0
            if slope == 0.0:
                raise OrbitError("return map derivative equals one; Newton cannot proceed")
            step = -r / slope
            limit = 0.25 * max(abs(r), 1e-3) * 10
            if abs(step) > limit:
                step = math.copysign(limit, step)
            s += step
        else:
            raise OrbitError(f"Newton on the return map did not converge (residual {r:.3g})")
    except NoCrossingError as exc:
        raise OrbitError(f"no return to the section: {exc}") from exc

    x_star = section.at(s)
    residual = abs(r)

    grid = np.linspace(0.0, period, n_samples + 1)
    traj = integrate(F, x_star, period, ODEOptions(max_step=period / 50, sample_times=grid[1:], **ORBIT_OPTS))
    idx = np.searchsorted(traj.t, grid)
    idx = np.clip(idx, 0, len(traj.t) - 1)
    if not np.allclose(traj.t[idx], grid, rtol=0, atol=1e-9 * period):
        raise OrbitError("internal error: sample grid not hit")
    samples = traj.z[idx]
    return PeriodicOrbit(
        y=y,
        section=section,
        fixed_point=x_star,
        period=float(period),
        times=grid,
        samples=samples,
        multipliers=np.array([mult]),
        residual=float(residual),
        hyperbolic=bool(abs(mult - 1.0) >= 1e-4),
    )


def _integrand(h, sys: FastSlowSystem | None, params) -> Callable[[np.ndarray, np.ndarray], float]:
    if callable(h):
        return h
    if sys is None:
        raise ValueError("an expression integrand needs the system for variable names")
    consts = dict(sys.params)
    consts.update(params or {})
    fn = compile_expressions([h], [sys.file.fast, sys.file.slow], consts)
    return lambda x, y: float(fn(x, y)[0])


def average_over_orbit(
    orbit: PeriodicOrbit,
    h: Expr | Callable[[np.ndarray, np.ndarray], float],
    sys: FastSlowSystem | None = None,
    params: dict | None = None,
) -> AverageResult:
    """Time average ``(1/T) * integral of h`` over one period.

    Samples are uniform in time, so the periodic trapezoid rule is used; the
    error estimate is the Richardson difference against every other sample.
    """
    fn = _integrand(h, sys, params)
    vals = np.array([fn(x, orbit.y) for x in orbit.samples[:-1]])
    full = float(np.mean(vals))
    half = float(np.mean(vals[::2]))
    return AverageResult(full, orbit.period, len(vals), abs(full - half) / 3.0)


class OrbitFamily:
    """Periodic orbits continued in ``y`` from a seed orbit.

    Moving to a new ``y`` walks there in steps of at most ``max_dy``,
    re-seeding Newton from the previous fixed point.  Results are cached, and
    a cached orbit within ``reuse_dy`` of the requested level is returned as is.
    When the fast equations do not involve the slow variables the seed's
    geometry is reused at every level.
    """

    def __init__(
        self,
        sys: FastSlowSystem,
        seed: PeriodicOrbit,
        max_dy: float = 1e-3,
        n_samples: int = 256,
        reuse_dy: float = 1e-10,
    ):
        self.sys = sys
        self.max_dy = max_dy
        self.reuse_dy = reuse_dy
        self.n_samples = n_samples
        self._known: dict[float, PeriodicOrbit] = {float(seed.y[0]): seed}
        slow = set(sys.file.slow)
        self._y_free = not any(slow & free_variables(e) for e in sys.file.fast_eqs)

    def __call__(self, Y) -> PeriodicOrbit:
        Y = float(np.atleast_1d(Y)[0])
        if Y in self._known:
            return self._known[Y]
        start = min(self._known, key=lambda k: abs(k - Y))
        orbit = self._known[start]
        if abs(Y - start) <= self.reuse_dy:
            return orbit
        if self._y_free:
            orbit = replace(orbit, y=np.array([Y]))
            self._known[Y] = orbit
            return orbit
        n = max(1, int(math.ceil(abs(Y - start) / self.max_dy)))
        for yk in np.linspace(start, Y, n + 1)[1:]:
            try:
                orbit = find_periodic_orbit(self.sys, [yk], None, orbit.fixed_point, n_samples=self.n_samples)
            except OrbitError as exc:
                raise OrbitError(f"lost the orbit family at y={yk:.6g}: {exc}") from exc
            self._known[float(yk)] = orbit
        return orbit


def averaged_slow_field(sys: FastSlowSystem, orbit_family_solver: Callable[[float], PeriodicOrbit], Y) -> np.ndarray:
    """``(1/T_Y) * integral of g(gamma_Y(t), Y) dt`` for each slow component."""
    orbit = orbit_family_solver(Y)
    vals = np.array([sys.g(x, orbit.y) for x in orbit.samples[:-1]])
    return vals.mean(axis=0)


def check_averaging_accuracy(
    sys: FastSlowSystem,
    Y0,
    x0,
    eps_list: Sequence[float],
    tau1: float,
    orbit_family_solver: Callable[[float], PeriodicOrbit],
    *,
    transient: float = 1.0,
) -> list[dict]:
    """Compare the full system with the averaged slow flow.

    For each eps returns ``max |y(tau) - Y(tau)|`` over
    ``tau in [transient * eps * |log eps|, tau1]`` (slow time).
    """
    Y0 = np.atleast_1d(np.asarray(Y0, dtype=float))
    avg = integrate(
        lambda Y: averaged_slow_field(sys, orbit_family_solver, Y),
        Y0,
        tau1,
        ODEOptions(atol=1e-10, rtol=1e-8, max_step=tau1 / 8),
    )
    if avg.reason != "time-limit":
        raise OrbitError(f"averaged flow ended early ({avg.reason})")
    spline = CubicSpline(avg.t, avg.z, axis=0)
    rows = []
    for eps in eps_list:
        z0 = np.concatenate([np.asarray(x0, dtype=float), Y0])
        t_end = tau1 / eps
        traj = integrate(sys.full_field(eps), z0, t_end, ODEOptions(atol=1e-11, rtol=1e-10, max_step=0.1))
        if traj.reason != "time-limit":
            raise OrbitError(f"full system ended early at eps={eps:g} ({traj.reason})")
        tau = traj.t * eps
        mask = tau >= transient * eps * abs(math.log(eps))
        err = np.abs(traj.z[mask, sys.m:] - spline(tau[mask]))
        rows.append({"eps": float(eps), "error": float(np.max(err))})
    return rows


def write_orbit_csv(path, orbit: PeriodicOrbit, names: Sequence[str] = ("x1", "x2")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names])
        for t, x in zip(orbit.times, orbit.samples):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in x)])


def write_averages_csv(path, rows: Sequence[tuple[float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "I_gamma1", "I_gamma2"])
        for k, a, b in rows:
            w.writerow([f"{k:.17g}", f"{a:.17g}", f"{b:.17g}"])


def scan_periodic_orbits(
    sys: FastSlowSystem,
    y,
    center,
    direction=(-1.0, 0.0),
    s_values: Sequence[float] | None = None,
    *,
    t_max: float = 200.0,
    n_samples: int = 512,
) -> list[PeriodicOrbit]:
    """Orbits winding around ``center`` that cut the ray ``center + s * direction``.

    The displacement ``P(s) - s`` of the ray's return map is tabulated;
    each sign change seeds Newton.  Orbits come back ordered from the
    outermost to the innermost.
    """
    if sys.m != 2:
        raise ValueError("periodic orbits are supported for two fast variables only")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    F = sys.fast_field(y)
    center = np.asarray(center, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if s_values is None:
        s_values = np.geomspace(1e-3, 2.0, 120)
    probe = F(center + float(np.median(s_values)) * d)
    normal = np.array([d[1], -d[0]])
    if normal @ probe < 0:
        normal = -normal
    section = LineSection(center, normal)
    # coordinate along the section must increase along the ray
    sgn = 1.0 if section.along @ d > 0 else -1.0
    opts = ODEOptions(atol=1e-10, rtol=1e-9, max_step=1.0)
    disp = []
    for s in s_values:
        try:
            p, _ = _return_map(F, section, sgn * s, t_max, opts)
            disp.append(sgn * p - s)
        except (NoCrossingError, OrbitError):
            disp.append(np.nan)
    orbits: list[PeriodicOrbit] = []
    for i in range(len(s_values) - 1):
        a, b = disp[i], disp[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or (a > 0) == (b > 0):
            continue
        s0 = s_values[i] + a / (a - b) * (s_values[i + 1] - s_values[i])
        try:
            orb = find_periodic_orbit(sys, y, section, section.at(sgn * s0), n_samples=n_samples, t_max=t_max)
        except OrbitError:
            continue
        if orb.closure > 1e-6:
            continue
        if all(np.linalg.norm(orb.fixed_point - o.fixed_point) > 1e-6 for o in orbits):
            orbits.append(orb)
    orbits.sort(key=lambda o: -np.linalg.norm(o.fixed_point - center))
    return orbits
