"""A repelling critical manifold {x = 0} cut by a slanted boundary y <= x/2.
The classifier refuses the origin, and simulation shows why: points on the
slow manifold below the origin take time of order 1/eps to get anywhere.

    python3 demos/repelling_counterexample.py
"""

from __future__ import annotations

from slowfast.classify import empirical_escape_check
from slowfast.pipeline import analyse
from slowfast.region import load_region
from slowfast.system import FastSlowSystem


def main() -> None:
    sys = FastSlowSystem.load("repelling")
    a = analyse(sys, load_region("repelling"))
    for v in a.report.verdicts:
        print(f"{str(v.candidate.point.round(6)):<14} face {v.candidate.face.label:<10} {v.label}")
    print(f"aggregate: {a.report.aggregate_label}\n")
    for radius in (0.05, 0.5, 1.0):
        esc = empirical_escape_check(sys, [0.0, 0.0], radius, a.region, (1e-2, 1e-3), t_max=1e3)
        for r in esc.rows:
            state = f"all left U by t={r.escape_time:.4g}" if r.finite else f"{r.n_stayed} sample(s) still in N and U at t_max"
            print(f"U radius {radius:<4g} eps={r.eps:<6g} {state}")


if __name__ == "__main__":
    main()
