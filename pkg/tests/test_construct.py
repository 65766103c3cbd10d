import math

import numpy as np
import pytest

from conftest import D_VDP_FROM_2_0, T_VDP
from planarmin.construct import (DELTA_SHRINK, ConstructionTrace, SingletonSuspected, choose_D,
                                 detect_periodicity, jordan_ok, recurrence_probe, run_construction)
from planarmin.field import builtin
from planarmin.flow import Trajectory, integrate
from planarmin.geom import Vec2

TWO_PI = 2 * math.pi


def test_choose_D_center():
    traj = integrate(builtin("center"), (1.0, 0.0), TWO_PI)
    assert choose_D(traj, TWO_PI) == pytest.approx(0.6, abs=1e-9)


def test_choose_D_vdp_against_oracle():
    traj = integrate(builtin("vdp"), (2.0, 0.0), 50.0)
    assert choose_D(traj, 50.0) == pytest.approx(D_VDP_FROM_2_0, abs=1e-8)


def test_stationary_start_is_a_singleton():
    with pytest.raises(SingletonSuspected):
        run_construction(builtin("stable_focus"), (0.0, 0.0), 3)


def test_center_hitting_times(center_trace):
    tr = center_trace
    assert tr.D == pytest.approx(0.6, abs=1e-9)
    assert tr.t0 == pytest.approx(2 * math.asin(0.3), abs=1e-8)
    assert tr.delta[1] == pytest.approx(0.3, rel=2e-6)
    for d, t in zip(tr.delta[1:], tr.t_hit[1:]):
        assert t == pytest.approx(TWO_PI - 2 * math.asin(d / 2), abs=1e-8)


def test_center_periodic(center_trace):
    assert center_trace.status == "periodic"
    assert center_trace.t_star == pytest.approx(TWO_PI, abs=1e-8)
    per = detect_periodicity(center_trace, 1e-4, 1e-7)
    assert per.periodic and per.t_star == pytest.approx(TWO_PI, abs=1e-8)


@pytest.mark.parametrize("name", ["center_trace", "vdp_trace"])
def test_construction_invariants(name, request):
    tr = request.getfixturevalue(name)
    for i in range(1, len(tr.delta)):
        assert tr.delta[i] < tr.delta[i - 1] / 2
        assert tr.delta[i] < 2.0 ** -i * tr.D
    for s in tr.s_meet:
        assert 0.0 <= s <= tr.t0
    assert all(jordan_ok(c) for c in tr.curves)
    t = tr.t_hit
    assert all(a < b for a, b in zip(t, t[1:]))
    # chord endpoints lie on the trajectory
    for c in tr.curves:
        a, b = tr.trajectory.at(c.t), tr.trajectory.at(c.s)
        assert (c.chord[0] - a).norm() <= 1e-9 and (c.chord[1] - b).norm() <= 1e-9


def test_vdp_next_delta_against_grid(vdp_trace):
    tr = vdp_trace
    grid = np.arange(tr.t_hit[0], tr.t_hit[2], 1e-4)
    X = tr.trajectory.sample(grid)
    m = np.hypot(X[:, 0] - tr.x0.x, X[:, 1] - tr.x0.y).min()
    assert tr.delta[3] == pytest.approx(DELTA_SHRINK * min(tr.delta[2], m), abs=1e-6)


def test_vdp_periodic(vdp_trace):
    assert vdp_trace.status == "periodic"
    assert vdp_trace.t_star == pytest.approx(T_VDP, abs=1e-5)


def test_stable_focus_not_recurrent():
    tr = run_construction(builtin("stable_focus"), (1.0, 0.0), 4, budget=200.0)
    assert tr.status == "not_recurrent"


def test_divergent_hits_are_not_periodic():
    tr = ConstructionTrace(x0=Vec2(0, 0), D=1.0,
                           delta=[1.0, 0.4, 0.1, 0.02], t_hit=[1.0, 2.0, 3.5, 5.0])
    per = detect_periodicity(tr, 1e-4, 1e-7)
    assert not per.periodic and per.t_star is None


def test_recurrence_probe():
    traj = Trajectory(builtin("center"), (1.0, 0.0))
    t = recurrence_probe(traj, (-1.0, 0.0), 0.1)
    assert t == pytest.approx(math.pi - 2 * math.asin(0.05), abs=1e-8)
    assert recurrence_probe(traj, (3.0, 0.0), 0.1, t_max=20.0) is None


def test_recurrence_probe_vdp(vdp_seed):
    traj = Trajectory(builtin("vdp"), vdp_seed)
    traj.ensure(3.0)
    y0 = traj.at(2.2)
    t = recurrence_probe(traj, y0, 0.05, s=3.0, t_max=50.0)
    assert t is not None and t < 3.0 + T_VDP


def test_trace_dict_round_trip(center_trace):
    d = center_trace.to_dict(include_trajectory=False)
    again = ConstructionTrace.from_dict(d)
    assert again.t_hit == center_trace.t_hit and again.status == "periodic"
    assert np.array_equal(again.curves[2].polyline.vertices, center_trace.curves[2].polyline.vertices)
