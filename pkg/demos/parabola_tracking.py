"""Trajectory of the parabola system approaching the attracting sheet x = sqrt(y)
and following it toward the fold, plus the O(eps) scaling of the tracking distance.

    python3 demos/parabola_tracking.py
"""

from __future__ import annotations

import numpy as np

from slowfast.manifold import fiber_distance
from slowfast.ode import ODEOptions, integrate
from slowfast.system import FastSlowSystem


def main() -> None:
    sys = FastSlowSystem.load("parabola")
    eps = 0.05
    traj = integrate(sys.full_field(eps), [1.0, 0.4], 0.35 / eps, ODEOptions(atol=1e-12, rtol=1e-10, max_step=0.1))
    print(f"eps={eps}: from (1, 0.4) until tau=0.35 ({traj.reason})")
    print("   tau        x         y     dist to C")
    for tau in (0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.35):
        z = traj.at([tau / eps])[0]
        print(f"{tau:6.2f} {z[0]:9.5f} {z[1]:9.5f} {fiber_distance(sys, z[:1], z[1:]):11.2e}")

    print("\npost-transient distance to C against eps")
    eps_list = [0.1, 0.05, 0.025, 0.0125]
    dist = []
    for e in eps_list:
        tr = integrate(sys.full_field(e), [np.sqrt(2.0) + 0.2, 2.0], 1.5 / e,
                       ODEOptions(atol=1e-12, rtol=1e-10, max_step=0.01 / e))
        d = max(fiber_distance(sys, z[:1], z[1:]) for z in tr.z[tr.t * e >= 0.5])
        dist.append(d)
        print(f"  eps={e:<7g} max distance {d:.4e}   distance/eps {d / e:.4f}")
    slope = np.polyfit(np.log(eps_list), np.log(dist), 1)[0]
    print(f"log-log slope {slope:.3f}")


if __name__ == "__main__":
    main()
