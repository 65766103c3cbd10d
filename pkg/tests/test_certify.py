import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import linprog

from conftest import T_VDP
from planarmin.certify import (AmbiguousArc, BallWindow, ClassifyConfig, RetriesExhausted,
                               SeparationViolated, arc_side, auto_windows, classify,
                               crossing_finiteness, divergence_crosscheck, equilibrium_certificate,
                               flux_bound_certificate, flux_integral, normal_integral_check,
                               trajectory_side, zero_in_hull)
from planarmin.construct import ConstructionTrace, build_curve
from planarmin.field import builtin, parse_field
from planarmin.flow import integrate

TWO_PI = 2 * math.pi


def window(trace, center, r):
    return BallWindow.make(center, r, trace.x0, trace.D)


def test_separation_flag(center_trace):
    assert window(center_trace, (-1, 0), 0.1).separation_ok
    assert not window(center_trace, (0.5, 0.5), 0.1).separation_ok
    assert not window(center_trace, (-1, 0), 0.7).separation_ok
    with pytest.raises(SeparationViolated):
        flux_bound_certificate(center_trace, center_trace.trajectory,
                               window(center_trace, (0.5, 0.5), 0.1))


def test_flux_single_visit_is_a_chord(center_trace):
    w = window(center_trace, (-1, 0), 0.1)
    F = flux_integral(center_trace.trajectory, w, TWO_PI)
    assert F.norm() <= 0.2
    assert F.norm() == pytest.approx(2 * math.sin(2 * math.asin(0.05)), abs=1e-8)
    assert flux_integral(center_trace.trajectory, window(center_trace, (3, 0), 0.1), TWO_PI).norm() == 0


def test_flux_certificate_center(center_trace):
    rep = flux_bound_certificate(center_trace, center_trace.trajectory,
                                 window(center_trace, (-1, 0), 0.1))
    assert rep.passed
    assert rep.measured["max"] <= 0.2 <= rep.measured["bound"]
    d = rep.to_dict()
    assert set(d) == {"kind", "pass", "measured", "tolerance", "context"}
    assert d["context"]["stage_count"] == center_trace.stages


def test_flux_certificate_vdp_random_windows(vdp_trace):
    ws = auto_windows(vdp_trace, vdp_trace.trajectory, 20, (0.01, 0.2), seed=11, period=T_VDP)
    assert len(ws) == 20 and all(w.separation_ok for w in ws)
    for w in ws:
        assert 0.01 <= w.circle.radius <= 0.2
        assert flux_bound_certificate(vdp_trace, vdp_trace.trajectory, w).passed


def test_flux_over_many_periods_accumulates(vdp_trace):
    # the bound holds up to the construction's hitting times, not for
    # arbitrary horizons: every period adds the same chord again
    traj = vdp_trace.trajectory
    w = window(vdp_trace, traj.at(2.0), 0.1)
    one = flux_integral(traj, w, T_VDP)
    ten = flux_integral(traj, w, 10 * T_VDP)
    assert ten.norm() == pytest.approx(10 * one.norm(), rel=1e-4)
    assert ten.norm() > 2 * math.pi * 0.1


def test_flux_certificate_rejects_unclosed_cut(vdp_trace):
    traj = vdp_trace.trajectory
    t_mid = 2.0
    w = window(vdp_trace, traj.at(t_mid), 0.1)
    # hitting time cut in the middle of the window, many laps in
    cut = ConstructionTrace(vdp_trace.x0, vdp_trace.D, vdp_trace.t0,
                            [vdp_trace.D, vdp_trace.D / 4], [vdp_trace.t0, 12 * T_VDP + t_mid])
    rep = flux_bound_certificate(cut, traj, w)
    assert not rep.passed
    assert rep.measured["max"] > rep.measured["bound"]


def test_divergence_crosscheck_center(center_trace):
    w = window(center_trace, (-1, 0), 0.1)
    rep = divergence_crosscheck(center_trace.curves[2], w, center_trace.trajectory)
    assert rep.passed and rep.measured["difference"] <= 1e-5
    assert rep.measured["lhs_norm"] > 0.1


def test_divergence_crosscheck_disjoint(center_trace):
    w = window(center_trace, (-3, 0), 0.1)
    c = center_trace.curves[2]
    assert trajectory_side(c, w, center_trace.trajectory).norm() == 0
    assert arc_side(c, w).norm() == 0
    assert divergence_crosscheck(c, w, center_trace.trajectory).passed


def test_divergence_crosscheck_vdp(vdp_trace):
    ws = auto_windows(vdp_trace, vdp_trace.trajectory, 6, (0.01, 0.2), seed=5, period=T_VDP)
    for c in vdp_trace.curves[::3]:
        for w in ws:
            rep = divergence_crosscheck(c, w, vdp_trace.trajectory)
            assert rep.passed, rep.measured


def test_divergence_refuses_tangent_arc(center_trace):
    traj = center_trace.trajectory
    coarse = build_curve(traj, 0.0, center_trace.t_hit[3], 0.8)
    V = coarse.polyline.vertices
    # circle tangent to the coarse edge nearest (-1, 0), from outside the curve
    k = int(np.argmin(np.hypot(*(0.5 * (V + np.roll(V, -1, axis=0)) - (-1, 0)).T)))
    a, b = V[k], V[(k + 1) % len(V)]
    mid = 0.5 * (a + b)
    n = mid / np.linalg.norm(mid)
    r = 0.1
    w = window(center_trace, mid + r * n, r)
    assert w.separation_ok
    with pytest.raises(AmbiguousArc):
        divergence_crosscheck(coarse, w, traj)


def test_normal_integral_on_curves(center_trace, vdp_trace):
    for c in center_trace.curves + vdp_trace.curves:
        assert normal_integral_check(c).passed


def test_crossing_counts_center():
    traj = integrate(builtin("center"), (1.0, 0.0), 3 * TWO_PI)
    assert crossing_finiteness(traj, (-1, 0), 0.1, TWO_PI).count == 2
    assert crossing_finiteness(traj, (-1, 0), 0.1, 3 * TWO_PI).count == 6


def test_crossing_tangent_radius_is_perturbed():
    traj = integrate(builtin("center"), (1.0, 0.0), TWO_PI)
    cc = crossing_finiteness(traj, (-1, 0), 2.0, TWO_PI, retries=5, seed=3)
    assert cc.perturbations >= 1 and cc.radius != 2.0
    assert abs(cc.radius - 2.0) <= 0.1
    assert cc.count % 2 == 0
    with pytest.raises(RetriesExhausted):
        crossing_finiteness(traj, (-1, 0), 2.0, TWO_PI, retries=0)


def test_equilibrium_certificates():
    rep = equilibrium_certificate(builtin("stable_focus"), (0, 0), [0.1, 0.05, 0.025])
    assert rep.passed and all(rep.measured["contains_zero"])
    for r, m in zip(rep.measured["radii"], rep.measured["min_norm"]):
        assert m <= math.sqrt(2) * r
    assert not equilibrium_certificate(builtin("center"), (1, 0), [0.1]).passed
    assert equilibrium_certificate(builtin("saddle"), (0, 0)).passed
    with pytest.raises(ValueError):
        equilibrium_certificate(builtin("saddle"), (0, 0), [0.1, 0.2])


def _hull_contains_zero_lp(V):
    # feasibility: lambda >= 0, sum lambda = 1, V^T lambda = 0
    n = len(V)
    A = np.vstack([V.T, np.ones(n)])
    res = linprog(np.zeros(n), A_eq=A, b_eq=[0, 0, 1], bounds=[(0, None)] * n, method="highs")
    return res.status == 0


vecs = st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(vecs)
def test_zero_in_hull_matches_linear_program(pts):
    V = np.array(pts, dtype=float)
    assert zero_in_hull(V) == _hull_contains_zero_lp(V)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-2, 2),
       y0=st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_linear_field_equilibrium_contained(a, b, c, d, y0):
    assume(abs(a * d - b * c) > 1e-3)
    f = parse_field(f"{a!r}*(x - {y0[0]!r}) + {b!r}*(y - {y0[1]!r})",
                    f"{c!r}*(x - {y0[0]!r}) + {d!r}*(y - {y0[1]!r})")
    rep = equilibrium_certificate(f, y0, [0.1, 0.05, 0.025])
    assert all(rep.measured["contains_zero"])


def test_classify_examples():
    c = classify(builtin("center"), (1.0, 0.0))
    assert c.kind == "periodic_orbit" and c.period == pytest.approx(TWO_PI, abs=1e-6)
    s = classify(builtin("stable_focus"), (1.0, 0.0))
    assert s.kind == "equilibrium" and s.path == "c"
    assert s.point.norm() <= 1e-9
    z = classify(builtin("saddle"), (0.0, 0.0))
    assert z.kind == "equilibrium" and z.path == "a"
    v = classify(builtin("vdp"), (0.1, 0.0))
    assert v.kind == "periodic_orbit" and v.period == pytest.approx(T_VDP, abs=1e-5)


def test_classify_undecided_when_budget_is_tiny():
    cfg = ClassifyConfig(T_pre=0.0, t_probe=1.0, t_max=0.5, i_max=2)
    r = classify(builtin("vdp"), (2.0, 0.0), cfg)
    assert r.kind == "undecided" and r.path == "d"
    assert r.diagnostics["construction_status"] == "not_recurrent"
