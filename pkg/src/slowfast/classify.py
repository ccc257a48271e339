"""Slow exit / entrance decisions for boundary candidates, the aggregate
isolating-neighbourhood verdict, and a simulation oracle for escape times.

A refusal means the point is not decidable by the sufficient criteria
implemented here; it is not a proof that the point is not a slow exit point.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__, linalg
from .manifold import ManifoldError, make_branch_point, solve_on_hyperplane
from .ode import ODEOptions, integrate, reverse
from .periodic import PeriodicOrbit, average_over_orbit
from .region import BoundaryCandidate, Face, Region, find_boundary_candidates
from .system import FastSlowSystem

__all__ = [
    "Thresholds",
    "Verdict",
    "NeighbourhoodReport",
    "EscapeRow",
    "EscapeReport",
    "slow_flow_vector",
    "classify_equilibrium",
    "classify_periodic",
    "classify_candidate",
    "verify_neighbourhood",
    "empirical_escape_check",
    "write_report_json",
]

EXIT, ENTRANCE, REFUSED = "slow-exit", "slow-entrance", "refused"
POSITIVE = "singular-isolating-neighbourhood"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Thresholds:
    transversality: float = 1e-8
    angle_floor: float = 0.1  # radians, attracting-angle path
    hyperbolicity_margin: float = 1e-8
    residual: float = 1e-8
    nearby_arclength: float = 1e-2
    zero_average: float = 1e-8

    @classmethod
    def from_json(cls, path) -> "Thresholds":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown threshold(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass
class Verdict:
    candidate: BoundaryCandidate
    result: str  # slow-exit | slow-entrance | refused
    criterion: str | None  # equilibrium-transversality | attracting-angle | periodic-average
    diagnostic: float | None
    reason: str | None = None
    details: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"refused({self.reason})" if self.result == REFUSED else self.result

    def to_dict(self) -> dict:
        c = self.candidate
        return {
            "point": c.point.tolist(),
            "carrier": c.kind,
            "face": c.face.label,
            "criterion": self.criterion,
            "result": self.label,
            "diagnostic": self.diagnostic,
            "details": self.details,
        }


@dataclass
class NeighbourhoodReport:
    region: Region
    verdicts: list[Verdict]
    aggregate: str
    reasons: list[str]
    notes: list[str]
    thresholds: Thresholds

    @property
    def positive(self) -> bool:
        return self.aggregate == POSITIVE

    @property
    def aggregate_label(self) -> str:
        return self.aggregate if self.positive else f"{INCONCLUSIVE}({', '.join(self.reasons)})"

    def to_dict(self) -> dict:
        return {
            "region": self.region.describe(),
            "candidates": [v.to_dict() for v in self.verdicts],
            "aggregate": self.aggregate_label,
            "notes": self.notes,
            "tool_version": __version__,
            "thresholds": asdict(self.thresholds),
        }


def write_report_json(path, report: NeighbourhoodReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# geometry on C


def _tangent_basis(sys: FastSlowSystem, x, y) -> np.ndarray:
    """Columns span the tangent space of C at (x, y): ``[-J^{-1} D_y f; I]``."""
    J = sys.jacobian_fast(x, y)
    Dy = sys.slow_y_derivative(x, y)
    top = np.column_stack([linalg.solve(J, -Dy[:, j]) for j in range(sys.n)])
    return np.vstack([top, np.eye(sys.n)])


def slow_flow_vector(sys: FastSlowSystem, x, y) -> np.ndarray:
    """Reduced flow on C lifted to ``(x', y')``; needs D_x f invertible."""
    gy = sys.g(x, y)
    return _tangent_basis(sys, x, y) @ gy


def _face_angle(sys: FastSlowSystem, x, y, face: Face) -> float:
    Q, _ = np.linalg.qr(_tangent_basis(sys, x, y))
    return float(math.asin(min(1.0, float(np.linalg.norm(Q.T @ face.normal)))))


def _nearby(sys: FastSlowSystem, cand: BoundaryCandidate, radius: float) -> list:
    """Points of the branch at arclength offsets within ``radius`` of the candidate."""
    br = cand.branch
    if br is None or cand.arclength is None or sys.n != 1:
        return []
    s, U = br.arclength, br.u
    out = []
    for off in (-radius, -radius / 2, radius / 2, radius):
        target = cand.arclength + off
        if target < s[0] or target > s[-1]:
            continue
        i = int(np.clip(np.searchsorted(s, target) - 1, 0, len(s) - 2))
        w = (target - s[i]) / (s[i + 1] - s[i])
        guess = U[i] + w * (U[i + 1] - U[i])
        t = U[i + 1] - U[i]
        t /= np.linalg.norm(t)
        try:
            u = solve_on_hyperplane(sys, guess, t, float(t @ guess))
        except ManifoldError:
            u = None
        out.append(u)
    return out


# ---------------------------------------------------------------------------
# classifiers


def classify_equilibrium(
    candidate: BoundaryCandidate, sys: FastSlowSystem, face: Face | None = None, thresholds: Thresholds | None = None
) -> Verdict:
    """Transversality test at a point of C on the boundary.

    Checks in order: the point is on C and on the face; D_x f is hyperbolic
    there and nearby on the branch; the face is parallel to the fast fibers;
    the slow flow crosses the face.  Outward slow flow gives an exit, inward
    an entrance.  When only the face condition fails, an attracting point
    whose face meets C at an angle above ``angle_floor`` is decided by the
    same sign rule.
    """
    th = thresholds or Thresholds()
    face = face or candidate.face
    x, y = sys.split(candidate.point)

    def refuse(reason, diag=None, **details):
        return Verdict(candidate, REFUSED, None, diag, reason, details)

    res_f = float(np.max(np.abs(sys.f(x, y))))
    res_face = abs(face.signed_distance(candidate.point))
    if res_f >= th.residual or res_face >= th.residual:
        return refuse("A1", residual_f=res_f, residual_face=res_face)

    bp = make_branch_point(sys, x, y, th.hyperbolicity_margin)
    if bp.label == "nonhyperbolic":
        return refuse("A2", label=bp.label)
    try:
        d_vec = slow_flow_vector(sys, x, y)
    except linalg.SingularMatrixError:
        return refuse("A2", label="singular")
    if candidate.tangential:
        return refuse("tangency")
    nearby = _nearby(sys, candidate, th.nearby_arclength)
    for u in nearby:
        if u is None:
            return refuse("A2", label="branch lost nearby")
        lab = make_branch_point(sys, u[: sys.m], u[sys.m:], th.hyperbolicity_margin).label
        if lab != bp.label:
            return refuse("A2", label=bp.label, nearby_label=lab)

    d = float(face.normal @ d_vec)
    details = {"label": bp.label, "slow_flow": d_vec.tolist()}
    if face.parallel_to_fast_fibers:
        criterion = "equilibrium-transversality"
    else:
        angle = _face_angle(sys, x, y, face)
        details["angle"] = angle
        if bp.label != "attracting" or angle <= th.angle_floor:
            return refuse("A3", d, **details)
        criterion = "attracting-angle"
    if abs(d) <= th.transversality:
        return Verdict(candidate, REFUSED, criterion, d, "tangency", details)
    for u in nearby:
        dn = float(face.normal @ slow_flow_vector(sys, u[: sys.m], u[sys.m:]))
        if abs(dn) <= th.transversality or (dn > 0) != (d > 0):
            details["nearby_diagnostic"] = dn
            return Verdict(candidate, REFUSED, criterion, d, "A4", details)
    return Verdict(candidate, EXIT if d > 0 else ENTRANCE, criterion, d, None, details)


def classify_periodic(
    candidate: BoundaryCandidate,
    sys: FastSlowSystem,
    face: Face | None = None,
    params: dict | None = None,
    thresholds: Thresholds | None = None,
    region: Region | None = None,
) -> Verdict:
    """Sign of the orbit average of the outward slow drift ``n . g``."""
    th = thresholds or Thresholds()
    face = face or candidate.face
    orbit = candidate.carrier
    if not isinstance(orbit, PeriodicOrbit):
        raise TypeError("candidate carrier is not a periodic orbit")
    if params:
        sys = sys.with_params(**params)

    def refuse(reason, diag=None, **details):
        return Verdict(candidate, REFUSED, "periodic-average", diag, reason, details)

    if not face.parallel_to_fast_fibers:
        return refuse("B2", note="face not parallel to the fast fibers")
    if region is not None:
        interior = all(region.contains(np.concatenate([x, orbit.y])) for x in orbit.samples)
        if not interior:
            return refuse("B2", note="orbit leaves the face")
    if not orbit.hyperbolic:
        return refuse("B1", multiplier=[float(abs(mu)) for mu in orbit.multipliers])
    nslow = face.normal[sys.m:]
    avg = average_over_orbit(orbit, lambda x, y: float(nslow @ sys.g(x, y)))
    details = {
        "period": orbit.period,
        "multiplier": [float(np.real(mu)) for mu in orbit.multipliers],
        "quadrature_error": avg.error_estimate,
    }
    if abs(avg.value) <= th.zero_average:
        return refuse("zero-average", avg.value, **details)
    return Verdict(candidate, EXIT if avg.value > 0 else ENTRANCE, "periodic-average", avg.value, None, details)


def classify_candidate(
    candidate: BoundaryCandidate,
    sys: FastSlowSystem,
    params: dict | None = None,
    thresholds: Thresholds | None = None,
    region: Region | None = None,
) -> Verdict:
    if isinstance(candidate.carrier, PeriodicOrbit):
        return classify_periodic(candidate, sys, None, params, thresholds, region)
    if params:
        sys = sys.with_params(**params)
    return classify_equilibrium(candidate, sys, None, thresholds)


def verify_neighbourhood(
    N: Region,
    sys: FastSlowSystem,
    branches,
    orbits: Sequence[PeriodicOrbit] = (),
    params: dict | None = None,
    thresholds: Thresholds | None = None,
) -> NeighbourhoodReport:
    """Classify every boundary candidate; positive aggregate iff none is refused."""
    th = thresholds or Thresholds()
    if N.m is None:
        N = N.for_system(sys)
    cands = find_boundary_candidates(N, branches, orbits, sys)
    verdicts = [classify_candidate(c, sys, params, th, N) for c in cands]
    reasons = sorted({v.reason for v in verdicts if v.result == REFUSED})
    aggregate = POSITIVE if not reasons else INCONCLUSIVE
    notes = []
    if aggregate == POSITIVE:
        notes.append("every boundary point of the invariant set is a slow exit or entrance point")
        if verdicts and all(v.result == EXIT for v in verdicts):
            notes.append("all candidates are slow exits, so (N, boundary of N) is a singular index pair")
    else:
        notes.append("refusals mean 'not decidable by these criteria', not 'not a slow exit point'")
    return NeighbourhoodReport(N, verdicts, aggregate, reasons, notes, th)


# ---------------------------------------------------------------------------
# simulation oracle


@dataclass(frozen=True)
class EscapeRow:
    eps: float
    escape_time: float | None  # time by which every sample has left U; None if not by t_max
    n_samples: int
    n_escaped: int
    n_stayed: int  # never left N nor U within the budget
    n_left_N: int  # left N before leaving U
    n_blowup: int

    @property
    def finite(self) -> bool:
        return self.escape_time is not None


@dataclass
class EscapeReport:
    z0: np.ndarray
    radius: float
    sign: str
    t_max: float
    rows: list[EscapeRow]

    def row(self, eps: float) -> EscapeRow:
        for r in self.rows:
            if r.eps == eps:
                return r
        raise KeyError(eps)

    def summary(self) -> str:
        parts = []
        for r in self.rows:
            t = f"T={r.escape_time:.4g}" if r.finite else f"not by t_max={self.t_max:g}"
            parts.append(f"eps={r.eps:g}: {t} ({r.n_escaped}/{r.n_samples} left U, {r.n_stayed} stayed in N and U)")
        verdict = "consistent with" if all(r.finite for r in self.rows) else "not consistent with"
        return f"{verdict} a slow {self.sign} point; " + "; ".join(parts)


def _sample_grid(z0, radius, n_per_dim, N: Region | None):
    d = len(z0)
    axis = np.linspace(-radius, radius, n_per_dim)
    out = []
    for off in itertools.product(axis, repeat=d):
        off = np.array(off)
        if np.linalg.norm(off) > radius * (1 + 1e-12):
            continue
        z = z0 + off
        if N is not None and not N.contains(z, 1e-12):
            continue
        out.append(z)
    return out


def empirical_escape_check(
    sys: FastSlowSystem,
    z0,
    U_radius: float,
    N: Region | None,
    eps_list: Sequence[float] = (1e-2, 5e-3, 1e-3),
    t_max: float = 1e3,
    sign: str = "exit",
    *,
    orbit: PeriodicOrbit | None = None,
    n_per_dim: int = 5,
    rtol: float = 1e-7,
    atol: float = 1e-9,
) -> EscapeReport:
    """Time until every sample of ``U ∩ N`` has left ``U`` under the full flow.

    ``U`` is the ball of radius ``U_radius`` about ``z0``, or, when an orbit is
    given, the tube of that radius around it.  Entrances use reversed time.
    Finite sampling can only be consistent with the escape property, never
    prove it.
    """
    if sign not in ("exit", "entrance"):
        raise ValueError("sign must be 'exit' or 'entrance'")
    z0 = np.asarray(z0, dtype=float)
    if N is not None and N.m is None:
        N = N.for_system(sys)
    m = sys.m
    if orbit is None:
        def in_U(z):
            return float(np.linalg.norm(z - z0)) <= U_radius
    else:
        y_orb = orbit.y

        def in_U(z):
            return max(orbit.distance(z[:m]), float(np.max(np.abs(z[m:] - y_orb)))) <= U_radius

    samples = _sample_grid(z0, U_radius, n_per_dim, N)
    rows = []
    for eps in eps_list:
        field_ = sys.full_field(eps)
        if sign == "entrance":
            field_ = reverse(field_)
        times, stayed, left_N, blow = [], 0, 0, 0
        for z in samples:
            flags = {"left_N": False}

            def stop(t, zz, flags=flags):
                if N is not None and not flags["left_N"] and not N.contains(zz, 1e-12):
                    flags["left_N"] = True
                return not in_U(zz)

            traj = integrate(field_, z, t_max, ODEOptions(atol=atol, rtol=rtol, max_step=0.5, stop=stop))
            if traj.reason == "stopped":
                times.append(float(traj.t[-1]))
            elif traj.reason == "blow-up":
                blow += 1
            else:
                times.append(None)
                if not flags["left_N"]:
                    stayed += 1
            if flags["left_N"]:
                left_N += 1
        escaped = [t for t in times if t is not None]
        finite = len(escaped) == len(samples) and samples
        rows.append(EscapeRow(float(eps), max(escaped) if finite else None, len(samples), len(escaped), stayed, left_N, blow))
    return EscapeReport(z0, U_radius, sign, t_max, rows)
