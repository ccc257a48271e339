from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast.expr import parse_expression
from slowfast.ode import (
    EventSpec,
    IntegrationError,
    NoCrossingError,
    ODEOptions,
    integrate,
    integrate_to_event,
    reverse,
    write_trajectory_csv,
)


def decay(z):
    return -z


def rotation(z):
    return np.array([-z[1], z[0]])


def test_exponential_decay():
    traj = integrate(decay, [1.0], 1.0)
    assert traj.reason == "time-limit"
    assert traj.final[0] == pytest.approx(math.exp(-1), abs=1e-8)
    assert np.all(np.diff(traj.t) > 0)


def test_harmonic_oscillator_returns():
    traj = integrate(rotation, [1.0, 0.0], 2 * math.pi)
    assert np.linalg.norm(traj.final - [1.0, 0.0]) < 1e-6


def test_parabola_trajectory_tracks_critical_manifold(parabola):
    eps = 0.05
    traj = integrate(parabola.full_field(eps), [1.0, 0.4], 0.35 / eps)
    tau = traj.t * eps
    mask = (tau >= 0.1) & (tau <= 0.3)
    x, y = traj.z[mask, 0], traj.z[mask, 1]
    assert np.all(np.abs(x - np.sqrt(y)) < 0.1)


def test_blow_up_is_reported():
    traj = integrate(lambda z: z**2, [1.0], 2.0)
    assert traj.reason == "blow-up"
    assert traj.t[-1] < 1.0 + 1e-6
    assert np.all(np.isfinite(traj.z))


def test_step_underflow_raises():
    with pytest.raises(IntegrationError):
        integrate(lambda z: np.array([np.nan]) if z[0] > 0.5 else np.array([1.0]), [0.0], 1.0)


def test_sample_times_are_hit_exactly():
    grid = np.linspace(0.0, 1.0, 11)[1:]
    traj = integrate(decay, [1.0], 1.0, ODEOptions(sample_times=grid))
    assert set(grid.tolist()) <= set(traj.t.tolist())


def test_stop_callback():
    traj = integrate(lambda z: np.array([1.0]), [0.0], 10.0, ODEOptions(stop=lambda t, z: z[0] > 2.0))
    assert traj.reason == "stopped"
    assert 2.0 < traj.final[0] < 2.5


def test_event_linear_motion():
    _, zc, tc = integrate_to_event(lambda z: np.array([1.0]), [0.0], EventSpec(lambda z: z[0] - 1.0), 5.0)
    assert tc == pytest.approx(1.0, abs=1e-10)
    assert zc[0] == pytest.approx(1.0, abs=1e-10)


def test_event_direction_filter():
    ev = EventSpec(lambda z: z[1], direction=+1)
    _, zc, tc = integrate_to_event(rotation, [1.0, 0.0], ev, 10.0)
    assert tc == pytest.approx(2 * math.pi, abs=1e-8)
    ev_down = EventSpec(lambda z: z[1], direction=-1)
    _, _, tc = integrate_to_event(rotation, [1.0, 0.0], ev_down, 10.0)
    assert tc == pytest.approx(math.pi, abs=1e-8)


def test_event_from_expression():
    ev = EventSpec.from_expr(parse_expression("x - 0.5"), ["x"])
    _, zc, tc = integrate_to_event(decay, [1.0], ev, 5.0)
    assert tc == pytest.approx(math.log(2), abs=1e-9)


def test_no_crossing():
    with pytest.raises(NoCrossingError):
        integrate_to_event(decay, [1.0], EventSpec(lambda z: z[0] + 1.0), 3.0)


def test_morris_lecar_returns_to_section(ml):
    F = ml.fast_field([0.084])
    x2s = 0.3025
    ev = EventSpec(lambda x: x[1] - x2s, direction=+1)
    start = np.array([-0.1, x2s - 1e-3])
    _, zc, tc = integrate_to_event(F, start, ev, 100.0)
    assert 0 < tc < 100 and abs(zc[1] - x2s) < 1e-9


def test_csv_export(tmp_path):
    traj = integrate(rotation, [1.0, 0.0], 1.0)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, traj, ["p", "q"])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "p", "q"]
    assert len(rows) == len(traj.t) + 1
    assert float(rows[-1][1]) == traj.final[0]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(-2, 2), st.floats(-2, 2))
def test_time_reversal(t_end, a, b):
    z0 = np.array([a, b])
    field = lambda z: np.array([z[1], -np.sin(z[0])])  # noqa: E731
    opts = ODEOptions()
    fwd = integrate(field, z0, t_end, opts)
    back = integrate(reverse(field), fwd.final, t_end, opts)
    assert np.max(np.abs(back.final - z0)) < 100 * (opts.atol + opts.rtol * np.max(np.abs(z0)))


@pytest.mark.parametrize(
    "field, z0, t_end",
    [(decay, [1.0], 1.0), (rotation, [1.0, 0.0], 2 * math.pi), (lambda z: np.array([1.0]), [0.0], 1.0)],
)
def test_tolerance_halving(field, z0, t_end):
    a = integrate(field, z0, t_end, ODEOptions(atol=1e-10, rtol=1e-8)).final
    b = integrate(field, z0, t_end, ODEOptions(atol=5e-11, rtol=5e-9)).final
    assert np.max(np.abs(a - b)) < 10 * 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 1.5), st.floats(0.2, 2.0))
def test_event_residual(level, r):
    ev = EventSpec(lambda z: z[0] * z[1] - level * r * r / 2)
    try:
        _, zc, _ = integrate_to_event(rotation, [r, 0.0], ev, 10.0)
    except NoCrossingError:
        return
    assert abs(ev.function(zc)) < 1e-9
