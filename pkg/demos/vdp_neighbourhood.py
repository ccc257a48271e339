"""Van der Pol: folds of the cubic critical manifold, the annulus region, the
four boundary verdicts and the escape-time oracle for each of them.

    python3 demos/vdp_neighbourhood.py
"""

from __future__ import annotations

from slowfast.classify import empirical_escape_check
from slowfast.pipeline import analyse
from slowfast.region import load_region
from slowfast.system import FastSlowSystem


def main() -> None:
    sys = FastSlowSystem.load("vdp")
    a = analyse(sys, load_region("vdp_annulus"))
    for br in a.branches:
        for b in br.folds():
            d = b.diagnostics
            print(f"fold at x={b.point.x[0]:+.10f} y={b.point.y[0]:+.10f}  q1={d.q1:+.4f} q2={float(d.q2[0]):+.4f}")
    print()
    for v in a.report.verdicts:
        c = v.candidate
        esc = empirical_escape_check(sys, c.point, 0.05, a.region, (1e-2, 5e-3),
                                     sign="exit" if v.result == "slow-exit" else "entrance")
        times = ", ".join(f"eps={r.eps:g}: T={r.escape_time:.3g}" if r.finite else f"eps={r.eps:g}: none"
                          for r in esc.rows)
        print(f"{c.face.label:<14} point ({c.point[0]:+.5f}, {c.point[1]:+.3f})  {v.label:<12} "
              f"n.slow flow={v.diagnostic:+.4f}   escape {times}")
    print(f"\naggregate: {a.report.aggregate_label}")
    for n in a.report.notes:
        print(f"note: {n}")


if __name__ == "__main__":
    main()
