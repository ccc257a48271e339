"""End-to-end helpers: trace C over a region, find the fast periodic orbits
lying in its slow faces, and run the neighbourhood check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classify import NeighbourhoodReport, Thresholds, verify_neighbourhood
from .manifold import ContinuationOptions, ManifoldBranch, discover_branches, equilibria_at
from .periodic import PeriodicOrbit, scan_periodic_orbits
from .region import Region
from .system import FastSlowSystem

__all__ = ["slow_range", "branches_for_region", "orbits_at", "orbits_on_slow_faces", "Analysis", "analyse"]


def slow_range(region: Region, sys: FastSlowSystem, margin: float = 0.1) -> tuple[float, float]:
    """Slow interval of the region widened by ``margin`` of its length on each side."""
    N = region if region.m is not None else region.for_system(sys)
    lo, hi = float(N.lo[sys.m]), float(N.hi[sys.m])
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def branches_for_region(
    sys: FastSlowSystem, region: Region, opts: ContinuationOptions | None = None
) -> list[ManifoldBranch]:
    N = region if region.m is not None else region.for_system(sys)
    lo, hi = N.lo[: sys.m], N.hi[: sys.m]
    box = (float(min(lo.min(), -1.0)) - 1.0, float(max(hi.max(), 1.0)) + 1.0)
    return discover_branches(sys, slow_range(N, sys), box, opts)


def orbits_at(sys: FastSlowSystem, y, region: Region | None = None) -> list[PeriodicOrbit]:
    """Periodic orbits winding around the focus-type equilibria at level ``y``."""
    if sys.m != 2:
        return []
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out: list[PeriodicOrbit] = []
    for p in equilibria_at(sys, y):
        if region is not None and not region.contains(p.z, 1e-12):
            continue
        if np.all(p.eigenvalues.imag == 0):
            continue
        for orb in scan_periodic_orbits(sys, y, p.x):
            if all(np.linalg.norm(orb.fixed_point - o.fixed_point) > 1e-6 for o in out):
                out.append(orb)
    return out


def orbits_on_slow_faces(sys: FastSlowSystem, region: Region) -> list[PeriodicOrbit]:
    """Orbits at every face level ``y = const`` of the region (two fast variables, one slow)."""
    if sys.m != 2 or sys.n != 1:
        return []
    N = region if region.m is not None else region.for_system(sys)
    out: list[PeriodicOrbit] = []
    for face in N.faces():
        if face.parallel_to_fast_fibers:
            level = face.offset / face.normal[sys.m]
            out.extend(orbits_at(sys, [level], N))
    return out


@dataclass
class Analysis:
    system: FastSlowSystem
    region: Region
    branches: list[ManifoldBranch]
    orbits: list[PeriodicOrbit]
    report: NeighbourhoodReport


def analyse(
    sys: FastSlowSystem,
    region: Region,
    params: dict | None = None,
    thresholds: Thresholds | None = None,
) -> Analysis:
    if params:
        sys = sys.with_params(**params)
    N = region.for_system(sys)
    branches = branches_for_region(sys, N)
    orbits = orbits_on_slow_faces(sys, N)
    report = verify_neighbourhood(N, sys, branches, orbits, None, thresholds)
    return Analysis(sys, N, branches, orbits, report)
