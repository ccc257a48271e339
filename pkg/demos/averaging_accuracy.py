"""Averaged slow flow against the full system on the circle family: the
maximal slow-variable error halves when eps halves.

    python3 demos/averaging_accuracy.py
"""

from __future__ import annotations

from slowfast.periodic import OrbitFamily, check_averaging_accuracy, find_periodic_orbit
from slowfast.system import FastSlowSystem


def main() -> None:
    for k in (0.0, 0.3):
        sys = FastSlowSystem.load("circle", {"k": k})
        seed = find_periodic_orbit(sys, [0.0], None, [1.0, 0.0], n_samples=256)
        rows = check_averaging_accuracy(sys, [0.0], [1.0, 0.0], [0.04, 0.02, 0.01, 0.005], 1.0, OrbitFamily(sys, seed))
        print(f"k={k}: averaged drift {k}")
        prev = None
        for r in rows:
            ratio = "" if prev is None else f"   ratio {prev / r['error']:.3f}"
            print(f"  eps={r['eps']:<6g} max|y - Y| = {r['error']:.4e}{ratio}")
            prev = r["error"]


if __name__ == "__main__":
    main()
