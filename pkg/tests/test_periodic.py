from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from slowfast.cli import reference_values
from slowfast.expr import parse_expression
from slowfast.ode import ODEOptions, integrate
from slowfast.periodic import (
    LineSection,
    OrbitError,
    OrbitFamily,
    average_over_orbit,
    averaged_slow_field,
    check_averaging_accuracy,
    find_periodic_orbit,
    scan_periodic_orbits,
    write_averages_csv,
    write_orbit_csv,
)
from slowfast.system import FastSlowSystem

RADIUS_R = """
[system]
fast = x1, x2
slow = y
params = R = 2, k = 0
[equations]
x1' = x1*(1 - (x1^2 + x2^2)/R^2) - x2
x2' = x1 + x2*(1 - (x1^2 + x2^2)/R^2)
y'  = k - x1^2
"""

PLANAR_ONE_FAST = """
[system]
fast = x
slow = y
[equations]
x' = -x
y' = 1
"""


@pytest.fixture(scope="module")
def circle_orbit(circle):
    return find_periodic_orbit(circle, [0.0], None, [0.9, 0.1])


# --- examples -------------------------------------------------------------


def test_circle_orbit_radius_period_multiplier(circle_orbit):
    o = circle_orbit
    r = np.linalg.norm(o.samples, axis=1)
    assert np.max(np.abs(r - 1.0)) < 1e-8
    assert o.period == pytest.approx(2 * math.pi, abs=1e-8)
    # linearised radial rate is -2, so one period contracts by exp(-4 pi)
    assert o.multipliers[0] == pytest.approx(math.exp(-4 * math.pi), abs=1e-6)
    assert o.stable and o.hyperbolic
    assert o.closure < 1e-6
    assert o.residual < 1e-8


def test_explicit_section_gives_same_orbit(circle):
    sec = LineSection(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    o = find_periodic_orbit(circle, [0.0], sec, [0.7, 0.0])
    assert np.linalg.norm(o.fixed_point) == pytest.approx(1.0, abs=1e-9)
    assert o.period == pytest.approx(2 * math.pi, abs=1e-8)


def test_morris_lecar_orbit_pair(ml_orbits):
    assert len(ml_orbits) == 2
    outer, inner = ml_orbits
    assert outer.stable and abs(outer.multipliers[0]) < 1
    assert not inner.stable and abs(inner.multipliers[0]) > 1
    assert outer.period == pytest.approx(4.5912, abs=1e-3)
    assert inner.period == pytest.approx(3.9309, abs=1e-3)
    for o in ml_orbits:
        assert o.residual < 1e-9 and o.closure < 1e-6
    # the unstable orbit lies inside the stable one
    assert np.ptp(inner.samples[:, 0]) < np.ptp(outer.samples[:, 0])


def test_average_linear_integrand_on_circle(circle_orbit, circle):
    res = average_over_orbit(circle_orbit, parse_expression("k - x1"), circle, {"k": 0.3})
    assert res.value == pytest.approx(0.3, abs=1e-10)
    assert res.period == pytest.approx(2 * math.pi, abs=1e-8)


def test_average_of_square_on_radius_r_orbit():
    s = FastSlowSystem.from_text(RADIUS_R)
    o = find_periodic_orbit(s, [0.0], None, [1.8, 0.0])
    res = average_over_orbit(o, parse_expression("k - x1^2"), s, {"k": 1.0})
    assert res.value == pytest.approx(1.0 - 2.0**2 / 2, abs=1e-10)


def test_morris_lecar_regression_values(ml, ml_orbits):
    ref = reference_values()["morris-lecar"]
    for o, T, mu in zip(ml_orbits, ref["orbit_periods"]["value"], ref["orbit_multipliers"]["value"]):
        assert o.period == pytest.approx(T, abs=ref["orbit_periods"]["tolerance"])
        assert o.multipliers[0] == pytest.approx(mu, abs=ref["orbit_multipliers"]["tolerance"])
    avg = ref["averages"]
    for k, a1, a2 in zip(ref["k_values"]["value"], avg["value"]["gamma1"], avg["value"]["gamma2"]):
        fn = lambda x, y, s=ml.with_params(k=k): float(s.g(x, y)[0])
        assert average_over_orbit(ml_orbits[0], fn).value == pytest.approx(a1, abs=avg["tolerance"])
        assert average_over_orbit(ml_orbits[1], fn).value == pytest.approx(a2, abs=avg["tolerance"])


def test_rejects_other_fast_dimensions():
    s = FastSlowSystem.from_text(PLANAR_ONE_FAST)
    with pytest.raises(ValueError):
        find_periodic_orbit(s, [0.0], None, [1.0])


def test_equilibrium_guess_is_an_error(circle):
    with pytest.raises(OrbitError):
        find_periodic_orbit(circle, [0.0], None, [0.0, 0.0])


def test_scan_finds_circle(circle):
    orbits = scan_periodic_orbits(circle, [0.0], [0.0, 0.0])
    assert len(orbits) == 1
    assert np.linalg.norm(orbits[0].fixed_point) == pytest.approx(1.0, abs=1e-9)


def test_csv_writers(tmp_path, circle_orbit):
    p = tmp_path / "orbit.csv"
    write_orbit_csv(p, circle_orbit)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "x1", "x2"]
    assert len(rows) == len(circle_orbit.times) + 1
    q = tmp_path / "avg.csv"
    write_averages_csv(q, [(-0.3, -0.28, -0.31)])
    rows = list(csv.reader(open(q)))
    assert rows[0] == ["k", "I_gamma1", "I_gamma2"]
    assert float(rows[1][2]) == -0.31


# --- invariants -----------------------------------------------------------


def test_average_insensitive_to_sample_density(ml):
    y = [0.084]
    lo = find_periodic_orbit(ml, y, None, [-0.03054, 0.3025], n_samples=256)
    hi = find_periodic_orbit(ml, y, None, [-0.03054, 0.3025], n_samples=512)
    h = lambda x, yy: float(x[0] ** 2)
    a, b = average_over_orbit(lo, h), average_over_orbit(hi, h)
    assert abs(a.value - b.value) < 1e-7
    assert b.error_estimate < 1e-7


def test_constant_average_exact(circle_orbit):
    assert average_over_orbit(circle_orbit, lambda x, y: 2.5).value == 2.5


def test_error_estimate_bounds_true_error(circle_orbit):
    h = lambda x, y: float(np.exp(x[0]))
    exact = 1.2660658777520082  # modified Bessel I0(1)
    res = average_over_orbit(circle_orbit, h)
    assert abs(res.value - exact) <= max(res.error_estimate, 1e-9)


def test_floquet_contraction_matches_multiplier(ml, ml_orbits):
    outer = ml_orbits[0]
    F = ml.fast_field(outer.y)
    start = outer.fixed_point + 1e-3 * outer.section.along
    traj = integrate(F, start, 5 * outer.period, ODEOptions(atol=1e-12, rtol=1e-11))
    assert outer.distance(traj.final) < 1e-3 * abs(outer.multipliers[0]) ** 3


# --- averaging --------------------------------------------------------------


def test_averaged_slow_field_circle(circle_orbit, circle):
    fam = OrbitFamily(circle.with_params(k=0.4), circle_orbit)
    assert averaged_slow_field(circle.with_params(k=0.4), fam, [0.0])[0] == pytest.approx(0.4, abs=1e-10)


def test_orbit_family_reuses_cache(circle, circle_orbit):
    fam = OrbitFamily(circle, circle_orbit, max_dy=0.05)
    a = fam([0.1])
    assert fam([0.1]) is a
    assert fam([0.1 + 1e-12]) is a


def test_averaging_x_independent_drift():
    s = FastSlowSystem.from_text(RADIUS_R.replace("y'  = k - x1^2", "y'  = k"), {"k": 0.5})
    seed = find_periodic_orbit(s, [0.0], None, [2.0, 0.0], n_samples=128)
    fam = OrbitFamily(s, seed, max_dy=0.1, n_samples=128)
    rows = check_averaging_accuracy(s, [0.0], [2.0, 0.0], [0.05], 0.5, fam)
    assert rows[0]["error"] < 1e-8


def test_averaging_error_halves_with_eps(circle, circle_orbit):
    fam = OrbitFamily(circle, circle_orbit)
    rows = check_averaging_accuracy(circle, [0.0], [1.0, 0.0], [0.04, 0.02], 1.0, fam)
    ratio = rows[0]["error"] / rows[1]["error"]
    assert 1.4 <= ratio <= 2.6


def test_orbit_family_follows_y_dependent_radius():
    text = RADIUS_R.replace("params = R = 2, k = 0", "params = k = 0").replace("/R^2", "/(1 + y)^2")
    s = FastSlowSystem.from_text(text)
    seed = find_periodic_orbit(s, [0.0], None, [1.0, 0.0], n_samples=128)
    fam = OrbitFamily(s, seed, max_dy=0.05, n_samples=128)
    o = fam([0.2])
    assert np.allclose(np.linalg.norm(o.samples, axis=1), 1.2, atol=1e-8)
    assert fam([0.2]) is o
