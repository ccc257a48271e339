"""Command-line front end.

    slowfast simulate  --system parabola --from 1,0.4 --eps 0.05 --tau 1.2
    slowfast manifold  --system vdp --y-range -1.2:1.2
    slowfast average   --system morris-lecar --y 0.084 --k-range -0.3:-0.1:5
    slowfast verify    --system vdp --region vdp_annulus
    slowfast reproduce vdp
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys as _sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .classify import EXIT, ENTRANCE, Thresholds, empirical_escape_check
from .expr import free_variables
from .manifold import ContinuationOptions, ManifoldBranch, discover_branches, fiber_distance, write_branch_csv
from .ode import ODEOptions, integrate
from .periodic import PeriodicOrbit, average_over_orbit, write_averages_csv, write_orbit_csv
from .pipeline import analyse, orbits_at, slow_range
from .region import Region, load_region
from .system import FastSlowSystem

__all__ = ["RunConfig", "main", "build_parser", "reference_values"]

REPRODUCIBLE = ("vdp", "morris-lecar")
_REGIONS = {"vdp": "vdp_annulus", "morris-lecar": "morris-lecar"}


class CLIError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    system: str | None = None
    region: str | None = None
    params: dict[str, float] = field(default_factory=dict)
    eps: float | None = None
    start: list[float] | None = None
    tau: float = 1.0
    y: float | None = None
    y_range: tuple[float, float] | None = None
    k_range: tuple[float, float, int] = (-0.3, -0.1, 5)
    out: Path = Path(".")
    rtol: float = 1e-10
    atol: float = 1e-12
    thresholds: Thresholds = field(default_factory=Thresholds)
    oracle: float | None = None
    name: str | None = None

    def load_system(self) -> FastSlowSystem:
        if not self.system:
            raise CLIError("--system is required")
        sys = FastSlowSystem.load(self.system)
        unknown = set(self.params) - set(sys.params)
        if unknown:
            raise CLIError(f"--param names undeclared parameter(s): {', '.join(sorted(unknown))}")
        return sys.with_params(**self.params) if self.params else sys


def reference_values() -> dict:
    text = resources.files("slowfast").joinpath("data").joinpath("reference_values.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    if not a < b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def _k_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("sample count must be positive")
    return a, b, n


def _param(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value in {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="built-in name or path to a system file")
    common.add_argument("--region", help="bundled region name or path to a region file")
    common.add_argument("--param", action="append", type=_param, default=[], metavar="NAME=VALUE")
    common.add_argument("--eps", type=float)
    common.add_argument("--out", help="output directory (default: $SLOWFAST_OUT or .)")
    common.add_argument("--rtol", type=float, default=1e-10)
    common.add_argument("--atol", type=float, default=1e-12)
    common.add_argument("--thresholds", help="JSON file overriding classification thresholds")

    p = argparse.ArgumentParser(prog="slowfast", description="Fast-slow system analysis.")
    p.add_argument("--version", action="version", version=f"slowfast {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate the full system, write trajectory CSV")
    s.add_argument("--from", dest="start", type=_floats, required=True, metavar="Z0")
    s.add_argument("--tau", type=float, default=1.0, help="slow-time horizon (fast time when eps = 0)")

    m = sub.add_parser("manifold", parents=[common], help="continue the critical manifold; folds and Hopf points")
    m.add_argument("--y-range", type=_range)

    a = sub.add_parser("average", parents=[common], help="orbit averages of the slow drift over a k sweep")
    a.add_argument("--y", type=float, required=True, help="frozen slow value")
    a.add_argument("--k-range", type=_k_range, default=(-0.3, -0.1, 5))

    v = sub.add_parser("verify", parents=[common], help="classify boundary candidates of a region")
    v.add_argument("--oracle", type=float, metavar="RADIUS", help="also run the escape-time check with this radius")

    r = sub.add_parser("reproduce", parents=[common], help="run a worked example end to end")
    r.add_argument("name", choices=REPRODUCIBLE)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    out = ns.out or os.environ.get("SLOWFAST_OUT") or "."
    params = {}
    eps = ns.eps
    for k, v in ns.param:
        if k in params or (k == "eps" and eps is not None):
            raise CLIError(f"parameter {k} given twice")
        if k == "eps":
            eps = v
        else:
            params[k] = v
    th = Thresholds.from_json(ns.thresholds) if ns.thresholds else Thresholds()
    return RunConfig(
        command=ns.command,
        system=ns.system,
        region=ns.region,
        params=params,
        eps=eps,
        start=getattr(ns, "start", None),
        tau=getattr(ns, "tau", 1.0),
        y=getattr(ns, "y", None),
        y_range=getattr(ns, "y_range", None),
        k_range=getattr(ns, "k_range", (-0.3, -0.1, 5)),
        out=Path(out),
        rtol=ns.rtol,
        atol=ns.atol,
        thresholds=th,
        oracle=getattr(ns, "oracle", None),
        name=getattr(ns, "name", None),
    )


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, echo=print) -> Path:
    sys = cfg.load_system()
    eps = sys.eps if cfg.eps is None else cfg.eps
    if cfg.start is None or len(cfg.start) != len(sys.names):
        raise CLIError(f"--from needs {len(sys.names)} values ({', '.join(sys.names)})")
    z0 = np.array(cfg.start, dtype=float)
    t_end = cfg.tau / eps if eps > 0 else cfg.tau
    traj = integrate(sys.full_field(eps), z0, t_end, ODEOptions(atol=cfg.atol, rtol=cfg.rtol, max_step=t_end / 500))
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "trajectory.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "tau", *sys.names, "dist_C"])
        for t, z in zip(traj.t, traj.z):
            x, y = sys.split(z)
            w.writerow([f"{t:.17g}", f"{t * eps:.17g}", *(f"{v:.17g}" for v in z), f"{fiber_distance(sys, x, y):.17g}"])
    echo(f"{len(traj.t)} points, stopped by {traj.reason} at t={traj.t[-1]:.6g}; final state {traj.final.tolist()}")
    echo(f"wrote {path}")
    return path


def _bifurcation_json(branches: list[ManifoldBranch]) -> dict:
    folds, hopfs = [], []
    for i, br in enumerate(branches):
        for b in br.bifurcations:
            entry = {"branch": i, "x": b.point.x.tolist(), "y": b.point.y.tolist(), "arclength": b.arclength}
            if b.kind == "fold":
                d = b.diagnostics
                entry.update(q1=d.q1, q2=np.atleast_1d(d.q2).tolist(), degenerate=d.degenerate)
                folds.append(entry)
            else:
                hopfs.append(entry)
    return {"folds": folds, "hopf": hopfs}


def _manifold(cfg: RunConfig, sys: FastSlowSystem, region: Region | None):
    if cfg.y_range is not None:
        y_range = cfg.y_range
    elif region is not None:
        y_range = slow_range(region, sys)
    else:
        raise CLIError("--y-range is required without --region")
    branches = discover_branches(sys, y_range, opts=ContinuationOptions())
    if not branches:
        raise CLIError("no equilibria found in the y-range")
    return branches


def cmd_manifold(cfg: RunConfig, echo=print) -> dict:
    sys = cfg.load_system()
    region = load_region(cfg.region).for_system(sys) if cfg.region else None
    branches = _manifold(cfg, sys, region)
    cfg.out.mkdir(parents=True, exist_ok=True)
    for i, br in enumerate(branches):
        write_branch_csv(cfg.out / f"branch{i}.csv", br)
    data = _bifurcation_json(branches)
    with open(cfg.out / "bifurcations.json", "w") as fh:
        json.dump(data, fh, indent=2)
    for f in data["folds"]:
        echo(f"fold  x={f['x']} y={f['y']} q1={f['q1']:.6g} q2={f['q2']}")
    for h in data["hopf"]:
        echo(f"hopf  x={h['x']} y={h['y']}")
    echo(f"wrote {len(branches)} branch file(s) and bifurcations.json to {cfg.out}")
    return data


def _k_values(cfg: RunConfig) -> np.ndarray:
    a, b, n = cfg.k_range
    return np.array([a]) if n == 1 else np.linspace(a, b, n)


def average_table(sys: FastSlowSystem, y: float, ks, param: str = "k"):
    """Orbits at ``y`` (outermost first) and rows ``(k, I_1, I_2, ...)`` of
    normalised averages of the slow right-hand side."""
    if sys.n != 1:
        raise CLIError("averaging tables need one slow variable")
    if param not in sys.params:
        raise CLIError(f"system has no parameter {param!r}")
    fast_uses_param = any(param in free_variables(e) for e in sys.file.fast_eqs)
    orbits = None
    rows = []
    for k in ks:
        s = sys.with_params(**{param: float(k)})
        if orbits is None or fast_uses_param:
            orbits = orbits_at(s, [y])
        vals = [average_over_orbit(o, lambda x, yy, s=s: float(s.g(x, yy)[0])).value for o in orbits]
        rows.append((float(k), *vals))
    return orbits or [], rows


def cmd_average(cfg: RunConfig, echo=print):
    sys = cfg.load_system()
    orbits, rows = average_table(sys, cfg.y, _k_values(cfg))
    if not orbits:
        raise CLIError(f"no periodic orbits found at y={cfg.y}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    for j, o in enumerate(orbits, 1):
        write_orbit_csv(cfg.out / f"orbit_gamma{j}.csv", o, sys.file.fast)
        echo(f"gamma{j}: period {o.period:.6g}, multiplier {o.multipliers[0]:.6g} ({'stable' if o.stable else 'unstable'})")
    padded = [(r[0], r[1], r[2] if len(r) > 2 else float("nan")) for r in rows]
    write_averages_csv(cfg.out / "averages.csv", padded)
    for r in rows:
        echo("k=%-8.4g " % r[0] + " ".join(f"I_gamma{j}={v:+.6g}" for j, v in enumerate(r[1:], 1)))
    echo(f"wrote averages.csv to {cfg.out}")
    return orbits, rows


def _oracle(analysis, radius: float, eps_list=(1e-2, 5e-3)) -> list[dict]:
    out = []
    for v in analysis.report.verdicts:
        if v.result not in (EXIT, ENTRANCE):
            continue
        c = v.candidate
        orbit = c.carrier if isinstance(c.carrier, PeriodicOrbit) else None
        rep = empirical_escape_check(
            analysis.system, c.point, radius, analysis.region, eps_list,
            sign="exit" if v.result == EXIT else "entrance", orbit=orbit,
        )
        out.append({"point": c.point.tolist(), "result": v.label, "oracle": rep.summary(),
                    "escape_times": [r.escape_time for r in rep.rows]})
    return out


def cmd_verify(cfg: RunConfig, echo=print):
    sys = cfg.load_system()
    if not cfg.region:
        raise CLIError("--region is required")
    analysis = analyse(sys, load_region(cfg.region), None, cfg.thresholds)
    cfg.out.mkdir(parents=True, exist_ok=True)
    report = analysis.report
    data = report.to_dict()
    if cfg.oracle:
        data["oracle"] = _oracle(analysis, cfg.oracle)
    with open(cfg.out / "report.json", "w") as fh:
        json.dump(data, fh, indent=2)
    for v in report.verdicts:
        diag = "n/a" if v.diagnostic is None else f"{v.diagnostic:+.6g}"
        echo(f"{v.candidate.kind:<18} {np.array2string(v.candidate.point, precision=6):<40} "
             f"face {v.candidate.face.label:<12} {v.label:<16} diagnostic {diag}")
    echo(f"aggregate: {report.aggregate_label}")
    for n in report.notes:
        echo(f"note: {n}")
    echo(f"wrote {cfg.out / 'report.json'}")
    return analysis


def _close(a, b, tol) -> str:
    err = float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))
    return f"{'ok ' if err < tol else 'OFF'} (max deviation {err:.2e}, tolerance {tol:g})"


def cmd_reproduce(cfg: RunConfig, echo=print) -> list[str]:
    name = cfg.name
    if name not in REPRODUCIBLE:
        raise CLIError(f"unknown example {name!r}; choose from {', '.join(REPRODUCIBLE)}")
    ref = reference_values()[name]
    out = cfg.out / name
    sub = RunConfig(command="", system=name, region=_REGIONS[name], params=dict(cfg.params), out=out,
                    thresholds=cfg.thresholds, y_range=cfg.y_range)
    quiet = lambda *a, **k: None  # noqa: E731
    lines = [f"reproduce {name} (slowfast {__version__})"]
    bif = cmd_manifold(sub, quiet)
    folds = sorted(bif["folds"], key=lambda f: f["x"][0])
    if name == "vdp":
        got = sorted([[f["x"][0], f["y"][0]] for f in folds])
        want = sorted(ref["folds"]["value"])
        lines.append(f"folds: {len(folds)} found {got}; {_close(got, want, ref['folds']['tolerance'])}")
    else:
        pts = {"p_r": folds[0], "p_l": folds[-1]} if len(folds) >= 2 else {}
        for key in ("p_l", "p_r"):
            if key not in pts:
                lines.append(f"{key}: not found")
                continue
            f = pts[key]
            got = [f["x"][0], f["y"][0], f["x"][1]]
            lines.append(f"{key}: (x1, y, x2) = ({got[0]:.5f}, {got[1]:.5f}, {got[2]:.5f}); "
                         f"{_close(got, ref[key]['value'], ref[key]['tolerance'])}")
        for h in bif["hopf"]:
            lines.append(f"hopf: y = {h['y'][0]:.6f}; {_close(h['y'][0], ref['y_hopf']['value'], ref['y_hopf']['tolerance'])}")
        y_orb = ref["orbit_level"]["value"]
        sys = sub.load_system()
        orbits, rows = average_table(sys, y_orb, ref["k_values"]["value"])
        out.mkdir(parents=True, exist_ok=True)
        for j, o in enumerate(orbits, 1):
            write_orbit_csv(out / f"orbit_gamma{j}.csv", o, sys.file.fast)
            lines.append(f"gamma{j} at y={y_orb}: period {o.period:.5f}, multiplier {o.multipliers[0]:.5f} "
                         f"({'stable' if o.stable else 'unstable'})")
        lines.append(f"orbit count: {len(orbits)} (expected {ref['orbit_count']['value']})")
        if len(orbits) >= 2:
            write_averages_csv(out / "averages.csv", [(r[0], r[1], r[2]) for r in rows])
            want = ref["average_signs"]["value"]
            for r in rows:
                s1, s2 = int(np.sign(r[1])), int(np.sign(r[2]))
                flag = "ok " if (s1, s2) == (want["gamma1"], want["gamma2"]) else "OFF"
                lines.append(f"k={r[0]:+.3f}: I_gamma1={r[1]:+.5f} I_gamma2={r[2]:+.5f} sign pattern {flag}")
    analysis = cmd_verify(sub, quiet)
    rep = analysis.report
    lines.append(f"boundary candidates: {len(rep.verdicts)}")
    for v in rep.verdicts:
        lines.append(f"  {v.candidate.kind} at {np.array2string(v.candidate.point, precision=5)} "
                     f"({v.candidate.face.label}): {v.label}")
    want = ref["aggregate"]["value"]
    lines.append(f"aggregate: {rep.aggregate_label} ({'ok' if rep.aggregate == want else 'OFF'}; expected {want})")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    for ln in lines:
        echo(ln)
    echo(f"artifacts in {out}")
    return lines


COMMANDS = {
    "simulate": cmd_simulate,
    "manifold": cmd_manifold,
    "average": cmd_average,
    "verify": cmd_verify,
    "reproduce": cmd_reproduce,
}


_VALUE_FLAGS = ("--y-range", "--k-range", "--from", "--param", "--y", "--eps")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--y-range -1:1`` into ``--y-range=-1:1`` so argparse accepts it."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(_sys.argv[1:] if argv is None else argv)
    ns = parser.parse_args(_glue_negative_values(argv))
    try:
        cfg = config_from_args(ns)
        COMMANDS[cfg.command](cfg)
    except Exception as exc:  # every failure becomes a message and exit code 1
        print(f"slowfast {ns.command}: error: {exc}", file=_sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
