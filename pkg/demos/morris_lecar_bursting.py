"""Morris-Lecar bursting model: S-shaped critical manifold with two folds and a
Hopf point, the pair of fast periodic orbits at y = 0.084, orbit averages of
the slow drift over the k range, and the neighbourhood check.

    python3 demos/morris_lecar_bursting.py [out_dir]
"""

from __future__ import annotations

import sys as _sys
from pathlib import Path

from slowfast.cli import average_table
from slowfast.manifold import split_by_folds
from slowfast.periodic import write_averages_csv, write_orbit_csv
from slowfast.pipeline import analyse
from slowfast.region import load_region
from slowfast.system import FastSlowSystem


def main(out: Path) -> None:
    ml = FastSlowSystem.load("morris-lecar")
    a = analyse(ml, load_region("morris-lecar"))
    br = a.branches[0]
    for b in br.bifurcations:
        p = b.point
        print(f"{b.kind:<5} x1={p.x[0]:+.6f} x2={p.x[1]:+.6f} y={p.y[0]:+.6f}")
    print("pieces:", ", ".join(f"{s.label} y in [{s.y_extent[0]:+.4f}, {s.y_extent[1]:+.4f}]" for s in split_by_folds(br)))

    orbits, rows = average_table(ml, 0.084, [-0.3, -0.25, -0.2, -0.15, -0.1])
    out.mkdir(parents=True, exist_ok=True)
    print()
    for j, o in enumerate(orbits, 1):
        write_orbit_csv(out / f"orbit_gamma{j}.csv", o)
        print(f"gamma{j}: period {o.period:.5f}, multiplier {o.multipliers[0]:.5f}, "
              f"x1 in [{o.samples[:, 0].min():+.4f}, {o.samples[:, 0].max():+.4f}]")
    write_averages_csv(out / "averages.csv", rows)
    print("\n     k   avg(k - x1) gamma1   gamma2")
    for k, a1, a2 in rows:
        print(f"{k:+6.2f}   {a1:+12.5f}   {a2:+9.5f}")

    print()
    for v in a.report.verdicts:
        print(f"{v.candidate.kind:<18} {v.candidate.face.label:<8} {v.label:<14} diagnostic {v.diagnostic:+.5f}")
    print(f"aggregate: {a.report.aggregate_label}")
    print(f"orbit and average tables written to {out}")


if __name__ == "__main__":
    main(Path(_sys.argv[1]) if len(_sys.argv) > 1 else Path("out/morris-lecar-demo"))
