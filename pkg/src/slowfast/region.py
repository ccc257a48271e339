"""Compact candidate sets N built from boxes, their boundary faces, and the
points where invariant sets of the fast subsystem meet the boundary."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import ExprSyntaxError, evaluate, free_variables, parse_expression
from .manifold import BranchPoint, ManifoldBranch, ManifoldError, make_branch_point, solve_on_hyperplane
from .periodic import PeriodicOrbit
from .system import FastSlowSystem
from .systemfile import builtin_region_text

__all__ = [
    "RegionError",
    "Face",
    "Region",
    "BoundaryCandidate",
    "parse_region_file",
    "load_region",
    "contains",
    "on_boundary",
    "find_boundary_candidates",
]

BOUNDARY_TOL = 1e-8
KINDS = ("box", "box-minus-box", "annulus-prism", "wedge")


class RegionError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Face:
    """Piece of the hyperplane ``normal . z = offset`` with N on the ``<=`` side."""

    normal: np.ndarray
    offset: float
    lo: np.ndarray  # bounding box of the face
    hi: np.ndarray
    index: int
    label: str
    m: int = field(default=0, repr=False)

    @property
    def parallel_to_fast_fibers(self) -> bool:
        return bool(np.all(self.normal[: self.m] == 0.0))

    def signed_distance(self, z) -> float:
        return float(self.normal @ np.asarray(z, dtype=float) - self.offset)


@dataclass(frozen=True)
class Region:
    """Box, box with a rectangular hole, or box cut by one half-plane.

    ``inner`` gives the hole's intervals for a subset of variables; the hole
    spans the full outer interval in the others (so an annulus-prism is a
    hole in the fast variables only).
    """

    kind: str
    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray
    inner_lo: np.ndarray | None = None
    inner_hi: np.ndarray | None = None
    halfplane: tuple[np.ndarray, float] | None = None  # a . z <= b
    m: int | None = None
    source: str = ""

    @property
    def dim(self) -> int:
        return len(self.names)

    def for_system(self, sys: FastSlowSystem) -> "Region":
        """Reorder coordinates to the system's ``(fast, slow)`` order."""
        if set(self.names) != set(sys.names) or len(self.names) != len(sys.names):
            raise RegionError(f"region variables {self.names} do not match system variables {sys.names}")
        perm = [self.names.index(v) for v in sys.names]

        def p(a):
            return None if a is None else np.asarray(a)[perm]

        hp = None if self.halfplane is None else (self.halfplane[0][perm], self.halfplane[1])
        return Region(self.kind, tuple(sys.names), p(self.lo), p(self.hi), p(self.inner_lo), p(self.inner_hi), hp, sys.m, self.source)

    # ------------------------------------------------------------------
    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=float)
        if np.any(z < self.lo - tol) or np.any(z > self.hi + tol):
            return False
        if self.inner_lo is not None and np.all(z > self.inner_lo + tol) and np.all(z < self.inner_hi - tol):
            return False
        if self.halfplane is not None:
            a, b = self.halfplane
            if a @ z > b + tol:
                return False
        return True

    def faces(self) -> list[Face]:
        if self.m is None:
            raise RegionError("region is not bound to a system; call for_system first")
        out: list[Face] = []
        d = self.dim

        def add(normal, offset, lo, hi, label):
            out.append(Face(np.asarray(normal, float), float(offset), np.asarray(lo, float), np.asarray(hi, float), len(out), label, self.m))

        for i, name in enumerate(self.names):
            e = np.zeros(d)
            e[i] = 1.0
            lo, hi = self.lo.copy(), self.hi.copy()
            hi[i] = lo[i]
            add(-e, -self.lo[i], lo, hi, f"{name}={_fmt(self.lo[i])}")
            lo, hi = self.lo.copy(), self.hi.copy()
            lo[i] = hi[i]
            add(e, self.hi[i], lo, hi, f"{name}={_fmt(self.hi[i])}")
        if self.inner_lo is not None:
            for i, name in enumerate(self.names):
                if self.inner_lo[i] <= self.lo[i] and self.inner_hi[i] >= self.hi[i]:
                    continue  # hole spans this variable: no inner face
                e = np.zeros(d)
                e[i] = 1.0
                lo, hi = self.inner_lo.copy(), self.inner_hi.copy()
                hi[i] = lo[i]
                add(e, self.inner_lo[i], lo, hi, f"inner {name}={_fmt(self.inner_lo[i])}")
                lo, hi = self.inner_lo.copy(), self.inner_hi.copy()
                lo[i] = hi[i]
                add(-e, -self.inner_hi[i], lo, hi, f"inner {name}={_fmt(self.inner_hi[i])}")
        if self.halfplane is not None:
            a, b = self.halfplane
            s = float(np.linalg.norm(a))
            add(a / s, b / s, self.lo, self.hi, "halfplane")
        return out

    def on_face(self, face: Face, z, tol: float = BOUNDARY_TOL) -> bool:
        z = np.asarray(z, dtype=float)
        return (
            abs(face.signed_distance(z)) <= tol
            and bool(np.all(z >= face.lo - tol) and np.all(z <= face.hi + tol))
            and self.contains(z, tol)
        )

    def describe(self) -> dict:
        out = {"kind": self.kind, "variables": list(self.names), "lo": self.lo.tolist(), "hi": self.hi.tolist()}
        if self.inner_lo is not None:
            out["inner_lo"] = self.inner_lo.tolist()
            out["inner_hi"] = self.inner_hi.tolist()
        if self.halfplane is not None:
            out["halfplane"] = {"a": self.halfplane[0].tolist(), "b": self.halfplane[1]}
        if self.source:
            out["source"] = self.source
        return out


def _fmt(v: float) -> str:
    return f"{v:g}"


def contains(N: Region, z) -> bool:
    return N.contains(z)


def on_boundary(N: Region, z, tol: float = BOUNDARY_TOL) -> Face | None:
    """Face closest to ``z`` among those ``z`` lies on; ties go to the lowest index."""
    best, best_d = None, np.inf
    for face in N.faces():
        if N.on_face(face, z, tol):
            d = abs(face.signed_distance(z))
            if d < best_d:
                best, best_d = face, d
    return best


# ---------------------------------------------------------------------------
# region files

_INTERVAL = re.compile(r"^\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*$")


def _interval(value: str, line: int) -> tuple[float, float]:
    m = _INTERVAL.match(value)
    if not m:
        raise RegionError(f"expected 'lo : hi', got {value!r}", line)
    try:
        lo, hi = float(m.group(1)), float(m.group(2))
    except ValueError:
        raise RegionError(f"bad number in interval {value!r}", line) from None
    if not lo < hi:
        raise RegionError(f"empty interval {value!r}", line)
    return lo, hi


def _linear(side: str, names: Sequence[str], line: int) -> tuple[np.ndarray, float]:
    """Coefficients ``(a, c)`` with ``expr(z) = a . z + c``; rejects nonlinear input."""
    try:
        e = parse_expression(side, line=line)
    except ExprSyntaxError as exc:
        raise RegionError(str(exc), line) from None
    unknown = free_variables(e) - set(names)
    if unknown:
        raise RegionError(f"unknown variable(s) in half-plane: {', '.join(sorted(unknown))}", line)

    def ev(z):
        return evaluate(e, dict(zip(names, z)))

    d = len(names)
    c = ev(np.zeros(d))
    a = np.array([ev(np.eye(d)[i]) - c for i in range(d)])
    for probe in (np.full(d, 2.0), np.arange(1.0, d + 1.0), -np.linspace(0.5, 3.0, d)):
        if abs(ev(probe) - (a @ probe + c)) > 1e-9 * (1 + abs(c) + np.abs(a).sum()):
            raise RegionError("half-plane must be linear in the variables", line)
    return a, float(c)


def parse_region_file(text: str, *, source: str = "") -> Region:
    """Parse the ``[region]`` format: ``kind``, ``var = lo : hi``,
    ``inner.var = lo : hi`` and (wedge only) ``halfplane = lhs <= rhs``."""
    section = None
    kind = None
    outer: dict[str, tuple[float, float]] = {}
    inner: dict[str, tuple[float, float]] = {}
    halfplane_text: tuple[str, int] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[region]":
                raise RegionError(f"unknown section {line}", lineno)
            if section is not None:
                raise RegionError("duplicate [region] section", lineno)
            section = "region"
            continue
        if section is None:
            raise RegionError("content before [region] header", lineno)
        if "=" not in line:
            raise RegionError(f"expected 'key = value', got {line!r}", lineno)
        if line.startswith("halfplane"):
            key, value = "halfplane", line.split("=", 1)[1]
            if line.split("=", 1)[0].strip() != "halfplane":
                raise RegionError(f"bad key in {line!r}", lineno)
        else:
            key, value = (s.strip() for s in line.split("=", 1))
        if key == "kind":
            if value not in KINDS:
                raise RegionError(f"unknown region kind {value!r}; expected one of {', '.join(KINDS)}", lineno)
            kind = value
        elif key == "halfplane":
            if halfplane_text is not None:
                raise RegionError("duplicate halfplane", lineno)
            halfplane_text = (value.strip(), lineno)
        elif key.startswith("inner."):
            var = key[len("inner."):]
            if var in inner:
                raise RegionError(f"duplicate interval for inner.{var}", lineno)
            inner[var] = _interval(value, lineno)
        else:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
                raise RegionError(f"bad variable name {key!r}", lineno)
            if key in outer:
                raise RegionError(f"duplicate interval for {key}", lineno)
            outer[key] = _interval(value, lineno)
    if section is None:
        raise RegionError("missing [region] section")
    if kind is None:
        raise RegionError("missing 'kind'")
    if not outer:
        raise RegionError("no intervals given")
    names = tuple(outer)
    lo = np.array([outer[v][0] for v in names])
    hi = np.array([outer[v][1] for v in names])
    inner_lo = inner_hi = None
    if kind in ("box-minus-box", "annulus-prism"):
        if not inner:
            raise RegionError(f"kind {kind} needs inner.* intervals")
        extra = set(inner) - set(names)
        if extra:
            raise RegionError(f"inner interval for unknown variable(s) {', '.join(sorted(extra))}")
        inner_lo = np.array([inner.get(v, (outer[v][0], outer[v][1]))[0] for v in names])
        inner_hi = np.array([inner.get(v, (outer[v][0], outer[v][1]))[1] for v in names])
        for v in inner:
            if not (outer[v][0] < inner[v][0] and inner[v][1] < outer[v][1]):
                raise RegionError(f"inner interval for {v} must lie strictly inside the outer one")
    elif inner:
        raise RegionError(f"inner.* intervals are not allowed for kind {kind}")
    hp = None
    if kind == "wedge":
        if halfplane_text is None:
            raise RegionError("kind wedge needs a halfplane")
        text_hp, ln = halfplane_text
        if "<=" in text_hp:
            lhs, rhs = text_hp.split("<=", 1)
            sign = 1.0
        elif ">=" in text_hp:
            lhs, rhs = text_hp.split(">=", 1)
            sign = -1.0
        else:
            raise RegionError("half-plane needs '<=' or '>='", ln)
        a1, c1 = _linear(lhs, names, ln)
        a2, c2 = _linear(rhs, names, ln)
        a = sign * (a1 - a2)
        if not np.any(a):
            raise RegionError("half-plane is degenerate", ln)
        hp = (a, sign * (c2 - c1))
    elif halfplane_text is not None:
        raise RegionError("halfplane is only allowed for kind wedge", halfplane_text[1])
    region = Region(kind, names, lo, hi, inner_lo, inner_hi, hp, None, source)
    if hp is not None and not _has_interior(region):
        raise RegionError("half-plane leaves no interior")
    return region


def _has_interior(region: Region) -> bool:
    a, b = region.halfplane
    corner = np.where(a > 0, region.lo, region.hi)  # minimizes a . z over the box
    return float(a @ corner) < b


def load_region(source: str) -> Region:
    """Path to a region file or the name of a bundled one."""
    if os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            return parse_region_file(fh.read(), source=source)
    name = source[: -len(".region")] if source.endswith(".region") else source
    try:
        text = builtin_region_text(name)
    except (FileNotFoundError, OSError):
        raise RegionError(f"no region file or bundled region named {source!r}") from None
    return parse_region_file(text, source=name)


# ---------------------------------------------------------------------------
# boundary candidates


@dataclass
class BoundaryCandidate:
    point: np.ndarray
    carrier: BranchPoint | PeriodicOrbit
    face: Face
    tangential: bool = False
    branch: ManifoldBranch | None = field(default=None, repr=False)
    arclength: float | None = None

    @property
    def kind(self) -> str:
        return "periodic-orbit" if isinstance(self.carrier, PeriodicOrbit) else "equilibrium-branch"


def _polyline(branch: ManifoldBranch) -> tuple[np.ndarray, np.ndarray]:
    """Branch vertices with the located folds spliced in, so faces passing
    just beside a fold tip are still bracketed."""
    U, arc = branch.u, np.asarray(branch.arclength, dtype=float)
    for b in branch.folds():
        k = int(np.searchsorted(arc, b.arclength))
        if 0 < k < len(arc) and min(arc[k] - b.arclength, b.arclength - arc[k - 1]) > 1e-12:
            U = np.insert(U, k, b.point.z, axis=0)
            arc = np.insert(arc, k, b.arclength)
    return U, arc


def _branch_crossings(N: Region, sys: FastSlowSystem, branch: ManifoldBranch, face: Face, tol: float):
    U, arclength = _polyline(branch)
    phi = U @ face.normal - face.offset
    found = []
    for i in range(len(U) - 1):
        a, b = phi[i], phi[i + 1]
        if a == 0.0 or (a < 0) != (b < 0) and b != 0.0:
            s = 0.0 if a == 0.0 else a / (a - b)
        elif b == 0.0 and i == len(U) - 2:
            s = 1.0
        else:
            continue
        guess = U[i] + s * (U[i + 1] - U[i])
        try:
            u = solve_on_hyperplane(sys, guess, face.normal, face.offset)
        except ManifoldError:
            u = guess
        if np.linalg.norm(u - guess) > 10 * np.linalg.norm(U[i + 1] - U[i]) + 1e-9:
            u = guess  # Newton wandered to another piece of C
        if not N.on_face(face, u, tol):
            continue
        chord = U[i + 1] - U[i]
        tdir = chord / np.linalg.norm(chord)
        tangential = abs(float(tdir @ face.normal)) < 1e-6
        arc = float(arclength[i] + s * (arclength[i + 1] - arclength[i]))
        found.append((u, tangential, arc))
    return found


def find_boundary_candidates(
    N: Region,
    branches: Sequence[ManifoldBranch],
    orbits: Sequence[PeriodicOrbit] = (),
    sys: FastSlowSystem | None = None,
    *,
    tol: float = BOUNDARY_TOL,
) -> list[BoundaryCandidate]:
    """Points of ``S ∩ ∂N``: branch polylines cut with every face and polished
    onto both, plus whole orbits lying in a face parallel to the fast fibers."""
    if sys is None:
        if not branches or branches[0].system is None:
            raise ValueError("a system is needed to polish branch crossings")
        sys = branches[0].system
    if N.m is None:
        N = N.for_system(sys)
    faces = N.faces()
    out: list[BoundaryCandidate] = []
    for br in branches:
        for face in faces:
            for u, tangential, arc in _branch_crossings(N, sys, br, face, tol):
                if any(c.face.index == face.index and np.linalg.norm(c.point - u) < 1e-7 for c in out):
                    continue
                # attribute to the closest face, lowest index on ties
                owner = on_boundary(N, u, tol) or face
                if owner.index != face.index and any(
                    c.face.index == owner.index and np.linalg.norm(c.point - u) < 1e-7 for c in out
                ):
                    continue
                bp = make_branch_point(sys, u[: sys.m], u[sys.m:])
                out.append(BoundaryCandidate(u, bp, owner, tangential, br, arc))
    for orb in orbits:
        for face in faces:
            if not face.parallel_to_fast_fibers:
                continue
            z_fixed = np.concatenate([orb.fixed_point, orb.y])
            if abs(face.signed_distance(z_fixed)) > tol:
                continue
            if not all(N.on_face(face, np.concatenate([x, orb.y]), tol) for x in orb.samples):
                continue
            out.append(BoundaryCandidate(z_fixed, orb, face))
            break
    return out
