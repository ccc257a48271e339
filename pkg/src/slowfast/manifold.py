"""Critical manifold C = {f(x, y) = 0}: Newton solves, pseudo-arclength
continuation (one slow variable), stability labels, fold and Hopf detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg
from .system import FastSlowSystem

__all__ = [
    "ManifoldError",
    "BranchPoint",
    "FoldDiagnostics",
    "Bifurcation",
    "ManifoldBranch",
    "SubBranch",
    "ContinuationOptions",
    "stability_label",
    "make_branch_point",
    "solve_branch_point",
    "solve_on_hyperplane",
    "continue_branch",
    "detect_fold",
    "detect_hopf",
    "split_by_folds",
    "write_branch_csv",
    "equilibria_at",
    "discover_branches",
    "fiber_distance",
]

HYPERBOLICITY_MARGIN = 1e-8
RESIDUAL_BOUND = 1e-9


class ManifoldError(RuntimeError):
    pass


def stability_label(eigs, margin: float = HYPERBOLICITY_MARGIN) -> str:
    eigs = np.asarray(eigs, dtype=complex)
    thr = margin * (1.0 + float(np.max(np.abs(eigs))))
    re = eigs.real
    if np.any(np.abs(re) < thr):
        return "nonhyperbolic"
    if np.all(re < 0):
        return "attracting"
    if np.all(re > 0):
        return "repelling"
    return "saddle"


@dataclass(frozen=True)
class BranchPoint:
    x: np.ndarray
    y: np.ndarray
    eigenvalues: np.ndarray
    label: str
    residual: float

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


def make_branch_point(sys: FastSlowSystem, x, y, margin: float = HYPERBOLICITY_MARGIN) -> BranchPoint:
    x = np.array(x, dtype=float)
    y = np.atleast_1d(np.array(y, dtype=float))
    eigs = linalg.eigenvalues(sys.jacobian_fast(x, y))
    res = float(np.max(np.abs(sys.f(x, y))))
    return BranchPoint(x, y, eigs, stability_label(eigs, margin), res)


@dataclass(frozen=True)
class FoldDiagnostics:
    v: np.ndarray
    w: np.ndarray
    q1: float  # w . D_xx f(v, v)
    q2: np.ndarray  # w . D_y f
    degenerate: bool


@dataclass(frozen=True)
class Bifurcation:
    kind: str  # "fold" | "hopf"
    point: BranchPoint
    arclength: float
    diagnostics: FoldDiagnostics | None = None

    @property
    def degenerate(self) -> bool:
        return self.diagnostics is not None and self.diagnostics.degenerate


@dataclass
class ManifoldBranch:
    points: list[BranchPoint]
    arclength: np.ndarray
    bifurcations: list[Bifurcation] = field(default_factory=list)
    system: FastSlowSystem | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def u(self) -> np.ndarray:
        """Points as rows ``(x..., y...)``."""
        return np.array([p.z for p in self.points])

    def folds(self) -> list[Bifurcation]:
        return [b for b in self.bifurcations if b.kind == "fold"]

    def hopfs(self) -> list[Bifurcation]:
        return [b for b in self.bifurcations if b.kind == "hopf"]


@dataclass
class ContinuationOptions:
    ds: float = 0.01
    ds_min: float = 1e-5
    ds_max: float = 0.05
    max_points: int = 20000
    direction: int = 0  # +1 / -1: initial sign of dy; 0 continues both ways
    x_bound: float = 1e3
    detect: bool = True


# ---------------------------------------------------------------------------
# Newton solves


def solve_branch_point(
    sys: FastSlowSystem, y, x_guess, *, tol: float = 1e-12, max_iter: int = 50
) -> BranchPoint:
    """Damped Newton for ``f(x, y) = 0`` at fixed ``y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.array(np.atleast_1d(x_guess), dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite initial guess")
    r = sys.f(x, y)
    nr = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if nr <= tol:
            break
        try:
            dx = linalg.solve(sys.jacobian_fast(x, y), r)
        except linalg.SingularMatrixError:
            raise ManifoldError(f"Jacobian singular at non-solution x={x}, |f|={nr:.3g}") from None
        lam = 1.0
        while True:
            x_new = x - lam * dx
            r_new = sys.f(x_new, y)
            n_new = float(np.max(np.abs(r_new)))
            if n_new < nr or lam < 1e-3:
                break
            lam *= 0.5
        if not np.isfinite(n_new):
            break
        small_step = float(np.max(np.abs(x_new - x))) <= 1e-15 * (1 + float(np.max(np.abs(x))))
        x, r, nr = x_new, r_new, n_new
        if small_step:
            break
    if not nr <= RESIDUAL_BOUND:
        raise ManifoldError(f"Newton did not converge at y={y} (|f|={nr:.3g})")
    return make_branch_point(sys, x, y)


def _full_jacobian(sys: FastSlowSystem, u: np.ndarray) -> np.ndarray:
    x, y = u[: sys.m], u[sys.m:]
    return np.hstack([sys.jacobian_fast(x, y), sys.slow_y_derivative(x, y)])


def _H(sys: FastSlowSystem, u: np.ndarray) -> np.ndarray:
    return sys.f(u[: sys.m], u[sys.m:])


def solve_on_hyperplane(
    sys: FastSlowSystem, u0, normal, offset: float, *, tol: float = 1e-13, max_iter: int = 30
) -> np.ndarray:
    """Point of C (n = 1) on the hyperplane ``normal . u = offset``, Newton from ``u0``."""
    u = np.array(u0, dtype=float)
    normal = np.asarray(normal, dtype=float)
    for _ in range(max_iter):
        G = np.append(_H(sys, u), normal @ u - offset)
        if np.max(np.abs(G)) <= tol:
            break
        A = np.vstack([_full_jacobian(sys, u), normal])
        try:
            du = linalg.solve(A, G)
        except linalg.SingularMatrixError:
            raise ManifoldError("hyperplane is tangent to the critical manifold") from None
        u = u - du
        if np.max(np.abs(du)) <= 1e-15 * (1 + np.max(np.abs(u))):
            break
    G = np.append(_H(sys, u), normal @ u - offset)
    if not np.max(np.abs(G)) <= RESIDUAL_BOUND:
        raise ManifoldError(f"Newton on hyperplane did not converge (|G|={np.max(np.abs(G)):.3g})")
    return u


def _correct(sys: FastSlowSystem, u_pred: np.ndarray, t: np.ndarray, max_iter: int = 10):
    """Pseudo-arclength corrector: f(u) = 0, t.(u - u_pred) = 0."""
    u = u_pred.copy()
    for it in range(1, max_iter + 1):
        G = np.append(_H(sys, u), t @ (u - u_pred))
        A = np.vstack([_full_jacobian(sys, u), t])
        try:
            du = linalg.solve(A, G)
        except linalg.LinAlgError:
            return None, it
        u = u - du
        if not np.all(np.isfinite(u)):
            return None, it
        if np.max(np.abs(du)) <= 1e-13 * (1 + np.max(np.abs(u))):
            break
    if np.max(np.abs(_H(sys, u))) > 1e-11:
        return None, max_iter
    return u, it


def _tangent(sys: FastSlowSystem, u: np.ndarray, t_prev: np.ndarray | None) -> np.ndarray:
    J = _full_jacobian(sys, u)
    if t_prev is None:
        _, _, Vt = np.linalg.svd(J)
        t = Vt[-1]
    else:
        t = linalg.solve(np.vstack([J, t_prev]), np.append(np.zeros(sys.m), 1.0))
    return t / np.linalg.norm(t)


# ---------------------------------------------------------------------------
# continuation


def _march(sys, seed_u, t0, y_range, opts: ContinuationOptions) -> list[np.ndarray]:
    lo, hi = y_range
    u, t, ds = seed_u.copy(), t0, opts.ds
    out = [u.copy()]
    while len(out) < opts.max_points:
        u_new, its = _correct(sys, u + ds * t, t)
        ok = u_new is not None and np.linalg.norm(u_new - u) <= 2.0 * ds
        if ok:
            t_new = _tangent(sys, u_new, t)
            ok = float(t_new @ t) > 0.5
        if not ok:
            ds *= 0.5
            if ds < opts.ds_min:
                raise ManifoldError(f"corrector failed near u={u} (step below {opts.ds_min:g})")
            continue
        u, t = u_new, t_new
        out.append(u.copy())
        y = u[sys.m]
        if y < lo or y > hi or np.max(np.abs(u[: sys.m])) > opts.x_bound:
            break
        if its <= 3:
            ds = min(1.5 * ds, opts.ds_max)
        elif its > 5:
            ds = max(0.7 * ds, opts.ds_min)
    return out


def continue_branch(
    sys: FastSlowSystem,
    seed: BranchPoint,
    y_range: tuple[float, float],
    step_opts: ContinuationOptions | None = None,
) -> ManifoldBranch:
    """Trace the curve of equilibria through ``seed`` until ``y`` leaves ``y_range``.

    Folds in ``y`` are passed, not stopped at.  The first point outside the range
    is kept so that boundary crossings can be interpolated.
    """
    opts = step_opts or ContinuationOptions()
    if sys.n != 1:
        raise ValueError("curve continuation needs exactly one slow variable")
    u0 = seed.z.astype(float)
    t0 = _tangent(sys, u0, None)
    ty = t0[sys.m]
    sign = 1.0 if ty > 0 or (ty == 0 and t0[0] >= 0) else -1.0
    t0 = sign * t0
    if opts.direction > 0:
        pts = _march(sys, u0, t0, y_range, opts)
    elif opts.direction < 0:
        pts = _march(sys, u0, -t0, y_range, opts)
    else:
        fwd = _march(sys, u0, t0, y_range, opts)
        bwd = _march(sys, u0, -t0, y_range, opts)
        pts = bwd[::-1] + fwd[1:]
    U = np.array(pts)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(U, axis=0), axis=1))])
    points = [make_branch_point(sys, p[: sys.m], p[sys.m:]) for p in pts]
    branch = ManifoldBranch(points, s, [], sys)
    if opts.detect:
        folds = [Bifurcation("fold", p, a, d) for p, d, a in _folds(branch)]
        hopfs = [Bifurcation("hopf", p, a) for p, a in _hopfs(branch)] if sys.m >= 2 else []
        branch.bifurcations = sorted(folds + hopfs, key=lambda b: b.arclength)
    return branch


# ---------------------------------------------------------------------------
# test functions and refinement


def _bracket(func: Callable[[float], tuple[float, object]], fa: float, fb: float, tol: float, max_iter: int = 200):
    """Root of ``func`` on [0, 1] given opposite-signed end values.  Mixes
    bisection with Illinois steps; returns the best (s, payload)."""
    a, b = 0.0, 1.0
    best = None
    last = 0
    for it in range(max_iter):
        if it % 2 == 1 or fa == fb:
            s = 0.5 * (a + b)
        else:
            s = b - fb * (b - a) / (fb - fa)
            if not a < s < b:
                s = 0.5 * (a + b)
        fs, payload = func(s)
        if fs is None:
            return best
        if best is None or abs(fs) < abs(best[0]):
            best = (fs, s, payload)
        if abs(fs) < tol or b - a < 1e-16:
            break
        if np.sign(fs) == np.sign(fa):
            a, fa = s, fs
            if last == -1:
                fb *= 0.5
            last = -1
        else:
            b, fb = s, fs
            if last == 1:
                fa *= 0.5
            last = 1
    return best


def _refine(branch: ManifoldBranch, i: int, test, tol: float):
    sys = branch.system
    ua, ub = branch.points[i].z, branch.points[i + 1].z
    chord = ub - ua

    def at(s):
        u_pred = ua + s * chord
        u, _ = _correct(sys, u_pred, chord / np.linalg.norm(chord))
        if u is None:
            return None, None
        return test(u), u

    fa, fb = test(ua), test(ub)
    if fa is None or fb is None:
        return None
    best = _bracket(at, fa, fb, tol)
    if best is None:
        return None
    _, s, u = best
    return u, branch.arclength[i] + s * (branch.arclength[i + 1] - branch.arclength[i])


def _det_test(sys):
    return lambda u: linalg.det(sys.jacobian_fast(u[: sys.m], u[sys.m:]))


def _hopf_test(sys, imag_floor: float = 1e-6):
    def test(u):
        eigs = linalg.eigenvalues(sys.jacobian_fast(u[: sys.m], u[sys.m:]))
        cplx = eigs[np.abs(eigs.imag) >= imag_floor]
        return float(np.max(cplx.real)) if cplx.size else None

    return test


def fold_diagnostics(sys: FastSlowSystem, p: BranchPoint, rel: float = 1e-6) -> FoldDiagnostics:
    J = sys.jacobian_fast(p.x, p.y)
    v, w = linalg.null_vectors(J)
    q1 = float(w @ sys.second_fast_derivative(p.x, p.y, v))
    q2 = w @ sys.slow_y_derivative(p.x, p.y)
    scale = max(1.0, float(np.max(np.abs(J))))
    degenerate = abs(q1) <= rel * scale or float(np.max(np.abs(q2))) <= rel * scale
    return FoldDiagnostics(v, w, q1, q2, degenerate)


def _folds(branch: ManifoldBranch, tol: float = 1e-10):
    sys = branch.system
    test = _det_test(sys)
    vals = [test(p.z) for p in branch.points]
    out = []
    for i in range(len(vals) - 1):
        if vals[i] == 0.0 or np.sign(vals[i]) == np.sign(vals[i + 1]):
            continue
        r = _refine(branch, i, test, tol)
        if r is None:
            continue
        u, s = r
        p = make_branch_point(sys, u[: sys.m], u[sys.m:])
        try:
            diag = fold_diagnostics(sys, p)
        except linalg.RankError:
            diag = FoldDiagnostics(np.full(sys.m, np.nan), np.full(sys.m, np.nan), 0.0, np.zeros(sys.n), True)
        out.append((p, diag, s))
    return out


def _hopfs(branch: ManifoldBranch, tol: float = 1e-10):
    sys = branch.system
    test = _hopf_test(sys)
    vals = [test(p.z) for p in branch.points]
    out = []
    for i in range(len(vals) - 1):
        a, b = vals[i], vals[i + 1]
        if a is None or b is None or a == 0.0 or np.sign(a) == np.sign(b):
            continue
        r = _refine(branch, i, test, tol)
        if r is None:
            continue
        u, s = r
        out.append((make_branch_point(sys, u[: sys.m], u[sys.m:]), s))
    return out


def detect_fold(branch: ManifoldBranch) -> list[tuple[BranchPoint, FoldDiagnostics]]:
    """Folds bracketed by sign changes of det(D_x f), refined to |det| < 1e-10.

    Degenerate folds (tiny quadratic or transversality coefficient) are returned
    with ``diagnostics.degenerate`` set.
    """
    if len(branch) < 2:
        raise ValueError("branch needs at least two points")
    return [(p, d) for p, d, _ in _folds(branch)]


def detect_hopf(branch: ManifoldBranch) -> list[BranchPoint]:
    """Crossings of the imaginary axis by a complex pair (|Im| >= 1e-6)."""
    if branch.system is None or branch.system.m < 2:
        return []
    return [p for p, _ in _hopfs(branch)]


# ---------------------------------------------------------------------------
# splitting


@dataclass
class SubBranch:
    points: list[BranchPoint]
    label: str
    start: str  # "end" | "fold" | "hopf" | "label-change"
    stop: str

    @property
    def y_extent(self) -> tuple[float, float]:
        ys = [p.y[0] for p in self.points]
        return min(ys), max(ys)


def split_by_folds(branch: ManifoldBranch) -> list[SubBranch]:
    """Cut the branch at folds and Hopf points (and any remaining stability
    change) into pieces with a single stability label."""
    events = sorted(((b.arclength, b.kind, b.point) for b in branch.bifurcations), key=lambda e: e[0])
    seq: list[tuple[float, BranchPoint, str | None]] = [
        (s, p, None) for s, p in zip(branch.arclength, branch.points)
    ]
    seq += [(s, p, kind) for s, kind, p in events]
    seq.sort(key=lambda e: (e[0], e[2] is None))
    pieces: list[SubBranch] = []
    current: list[BranchPoint] = []
    current_label: str | None = None
    start = "end"
    for s, p, kind in seq:
        if kind is not None:
            current.append(p)
            if current_label is not None:
                pieces.append(SubBranch(current, current_label, start, kind))
            current, current_label, start = [p], None, kind
            continue
        if p.label == "nonhyperbolic":
            current.append(p)
            continue
        if current_label is None:
            current_label = p.label
        elif p.label != current_label:
            pieces.append(SubBranch(current, current_label, start, "label-change"))
            current, start = [current[-1]], "label-change"
            current_label = p.label
        current.append(p)
    if current_label is not None:
        pieces.append(SubBranch(current, current_label, start, "end"))
    return pieces


def write_branch_csv(path, branch: ManifoldBranch) -> None:
    sys = branch.system
    m = len(branch.points[0].x)
    n = len(branch.points[0].y)
    xn = sys.file.fast if sys else tuple(f"x{i + 1}" for i in range(m))
    yn = sys.file.slow if sys else tuple(f"y{i + 1}" for i in range(n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arclength", *yn, *xn, *(f"re_lambda_{i + 1}" for i in range(m)),
                    *(f"im_lambda_{i + 1}" for i in range(m)), "label"])
        for s, p in zip(branch.arclength, branch.points):
            w.writerow([f"{s:.17g}", *(f"{v:.17g}" for v in p.y), *(f"{v:.17g}" for v in p.x),
                        *(f"{v.real:.17g}" for v in p.eigenvalues), *(f"{v.imag:.17g}" for v in p.eigenvalues),
                        p.label])


# ---------------------------------------------------------------------------
# seeding


def equilibria_at(
    sys: FastSlowSystem, y, box: tuple[float, float] = (-3.0, 3.0), n_grid: int | None = None
) -> list[BranchPoint]:
    """Distinct solutions of ``f(x, y) = 0`` reached by Newton from a grid of guesses."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if n_grid is None:
        n_grid = {1: 25, 2: 13}.get(sys.m, 7)
    axis = np.linspace(box[0], box[1], n_grid)
    found: list[BranchPoint] = []
    for guess in np.array(np.meshgrid(*[axis] * sys.m, indexing="ij")).reshape(sys.m, -1).T:
        try:
            p = solve_branch_point(sys, y, guess)
        except (ManifoldError, linalg.LinAlgError, ValueError, OverflowError):
            continue
        if not np.all(np.isfinite(p.x)) or np.any(np.abs(p.x) > 10 * max(abs(box[0]), abs(box[1]))):
            continue
        if all(np.max(np.abs(p.x - q.x)) > 1e-7 for q in found):
            found.append(p)
    return sorted(found, key=lambda p: tuple(p.x))


def _near_polyline(U: np.ndarray, u: np.ndarray, tol: float) -> bool:
    a, b = U[:-1], U[1:]
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", u - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    return bool(np.min(np.linalg.norm(a + s[:, None] * d - u, axis=1)) < tol)


def discover_branches(
    sys: FastSlowSystem,
    y_range: tuple[float, float],
    box: tuple[float, float] = (-3.0, 3.0),
    opts: ContinuationOptions | None = None,
    levels: int = 3,
) -> list[ManifoldBranch]:
    """Continue C from every equilibrium found at a few ``y`` levels, skipping
    seeds that already lie on a traced branch."""
    lo, hi = y_range
    branches: list[ManifoldBranch] = []
    for y in np.linspace(lo, hi, levels + 2)[1:-1]:
        for p in equilibria_at(sys, [y], box):
            if any(_near_polyline(b.u, p.z, 1e-2) for b in branches):
                continue
            try:
                branches.append(continue_branch(sys, p, y_range, opts))
            except ManifoldError:
                continue
    return branches


def fiber_distance(sys: FastSlowSystem, x, y) -> float:
    """Distance within the fast fiber from ``x`` to the equilibrium Newton reaches from it."""
    try:
        p = solve_branch_point(sys, y, x)
    except (ManifoldError, linalg.LinAlgError):
        return float("nan")
    return float(np.linalg.norm(np.asarray(x, dtype=float) - p.x))
