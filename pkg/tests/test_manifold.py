from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from slowfast import linalg
from slowfast.manifold import (
    ContinuationOptions,
    ManifoldError,
    continue_branch,
    detect_fold,
    detect_hopf,
    discover_branches,
    solve_branch_point,
    split_by_folds,
    stability_label,
    write_branch_csv,
)
from slowfast.system import FastSlowSystem

PLANAR_HOPF = """
[system]
fast = x1, x2
slow = y
eps = 0.01
[equations]
x1' = y*x1 - x2
x2' = x1 + y*x2
y' = 1
"""


def test_stability_labels():
    assert stability_label([-1.0, -2.0]) == "attracting"
    assert stability_label([1.0, 2.0]) == "repelling"
    assert stability_label([-1.0, 2.0]) == "saddle"
    assert stability_label([1e-12, -1.0]) == "nonhyperbolic"
    assert stability_label([complex(-0.1, 3.0), complex(-0.1, -3.0)]) == "attracting"


def test_solve_branch_point_examples(parabola, vdp, ml):
    p = solve_branch_point(parabola, [1.0], [0.9])
    assert p.x[0] == pytest.approx(1.0, abs=1e-12) and p.label == "attracting"
    q = solve_branch_point(vdp, [0.0], [1.6])
    assert q.x[0] == pytest.approx(math.sqrt(3), abs=1e-12)
    r = solve_branch_point(ml, [0.05], [-0.5, 0.0])
    assert r.residual < 1e-9 and r.label == "attracting"


def test_solve_branch_point_failure(parabola):
    with pytest.raises(ManifoldError):
        solve_branch_point(parabola, [-1.0], [0.5])  # no equilibria below the fold


def test_residual_bound_on_branches(parabola_branch, vdp_branch, ml_branch):
    for br in (parabola_branch, vdp_branch, ml_branch):
        assert max(p.residual for p in br.points) <= 1e-9
        steps = np.diff(br.arclength)
        assert np.all(steps > 0) and np.all(steps <= 2 * 0.05)


def test_parabola_branch_passes_fold(parabola_branch):
    xs = parabola_branch.u[:, 0]
    assert xs.min() < -1 and xs.max() > 1
    (fold,) = parabola_branch.folds()
    assert np.allclose(fold.point.z, [0.0, 0.0], atol=1e-8)
    assert fold.diagnostics.q1 == pytest.approx(-2.0)
    assert fold.diagnostics.q2[0] == pytest.approx(1.0)
    assert detect_hopf(parabola_branch) == []


def test_vdp_folds(vdp_branch):
    found = sorted((p.x[0], p.y[0]) for p, _ in detect_fold(vdp_branch))
    assert found == [pytest.approx((-1.0, 2 / 3), abs=1e-8), pytest.approx((1.0, -2 / 3), abs=1e-8)]
    for _, d in detect_fold(vdp_branch):
        assert not d.degenerate and abs(d.q1) > 1e-6 and abs(d.q2[0]) > 1e-6


def test_split_parabola(parabola_branch):
    labels = [sb.label for sb in split_by_folds(parabola_branch)]
    assert labels == ["repelling", "attracting"] or labels == ["attracting", "repelling"]


def test_split_vdp(vdp_branch):
    pieces = split_by_folds(vdp_branch)
    assert [sb.label for sb in pieces] in (["repelling", "attracting", "repelling"],)
    middle = pieces[1]
    lo, hi = middle.y_extent
    assert lo == pytest.approx(-2 / 3, abs=1e-8) and hi == pytest.approx(2 / 3, abs=1e-8)


def _ml_folds(branch):
    folds = sorted(detect_fold(branch), key=lambda pd: pd[0].x[0])
    return folds[0], folds[-1]  # p_r (smaller x1), p_l


def test_morris_lecar_folds(ml, ml_branch):
    (p_r, d_r), (p_l, d_l) = _ml_folds(ml_branch)
    assert (p_l.x[0], p_l.y[0], p_l.x[1]) == pytest.approx((-0.0337, -0.0207, 0.1365), abs=5e-4)
    assert (p_r.x[0], p_r.y[0], p_r.x[1]) == pytest.approx((-0.2449, 0.0832, 0.0085), abs=5e-4)
    J = ml.jacobian_fast(p_l.x, p_l.y)
    assert np.min(np.abs(linalg.eigenvalues(J))) < 1e-6
    v, w = linalg.null_vectors(J)
    assert np.linalg.norm(J @ v) < 1e-6 and np.linalg.norm(w @ J) < 1e-6
    assert abs(d_r.q2[0]) > 1e-3 and not d_r.degenerate and not d_l.degenerate


def test_morris_lecar_hopf(ml_branch):
    (h,) = detect_hopf(ml_branch)
    assert h.y[0] == pytest.approx(0.075658, abs=1e-4)
    assert np.max(np.abs(h.eigenvalues.real)) < 1e-8
    assert np.min(np.abs(h.eigenvalues.imag)) > 1e-6


def test_morris_lecar_pieces(ml_branch):
    pieces = split_by_folds(ml_branch)
    labels = [sb.label for sb in pieces]
    assert labels == ["attracting", "saddle", "repelling", "attracting"]
    assert pieces[0].y_extent[1] == pytest.approx(0.08326, abs=1e-4)
    assert pieces[-1].start == "hopf"


def test_planar_hopf():
    sys = FastSlowSystem.from_text(PLANAR_HOPF)
    br = continue_branch(sys, solve_branch_point(sys, [-0.5], [0.1, 0.1]), (-1.0, 1.0))
    (h,) = detect_hopf(br)
    assert h.y[0] == pytest.approx(0.0, abs=1e-10)
    assert detect_fold(br) == []


def test_labels_flip_at_folds(parabola_branch, vdp_branch, ml_branch):
    for br in (parabola_branch, vdp_branch, ml_branch):
        for b in br.folds():
            i = int(np.searchsorted(br.arclength, b.arclength))
            before, after = br.points[i - 1].label, br.points[i].label
            assert before != after


def test_direction_reversal_gives_same_folds(vdp):
    seed = solve_branch_point(vdp, [0.0], [0.0])
    a = continue_branch(vdp, seed, (-1.2, 1.2), ContinuationOptions(direction=+1))
    b = continue_branch(vdp, seed, (-1.2, 1.2), ContinuationOptions(direction=-1))
    both = continue_branch(vdp, seed, (-1.2, 1.2))
    one_way = sorted(f.point.y[0] for f in a.folds() + b.folds())
    two_way = sorted(f.point.y[0] for f in both.folds())
    assert one_way == pytest.approx(two_way, abs=1e-7)


def test_discover_branches_finds_one_curve(ml):
    (br,) = discover_branches(ml, (-0.06, 0.1))
    assert len(br.folds()) == 2 and len(br.hopfs()) == 1


def test_branch_csv(tmp_path, ml_branch):
    path = tmp_path / "branch.csv"
    write_branch_csv(path, ml_branch)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["arclength", "y", "x1", "x2", "re_lambda_1", "re_lambda_2", "im_lambda_1", "im_lambda_2", "label"]
    assert len(rows) == len(ml_branch) + 1
