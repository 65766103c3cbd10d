"""Shrinking-ball construction of Jordan curves along a trajectory.

Starting at x0 = x(0), stage i picks a radius delta_i below half the previous
one and below every distance |x(t) - x0| seen since t_0, finds the first
return t_i to the circle of that radius, walks the chord from x(t_i) toward x0
until it meets the initial arc x([0, t_0]) at x(s_i), and closes the arc
x([s_i, t_i]) with that chord. Converging t_i mean the orbit is periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .field import Field
from .flow import (DEFAULT_T_MAX, IntegrationError, Trajectory, distance_extremum,
                   first_circle_hit, integrate, sample_grid, ROOT_RTOL)
from .geom import (Circle, ClosedPolyline, GeometryError, Orientation, Path, PointLike, Vec2,
                   as_vec, first_meet, is_simple)

D_SAFETY = 0.9
# strictly below one half, so that delta_i < delta_{i-1} / 2 always holds
DELTA_SHRINK = 0.5 * (1.0 - 1e-6)
SINGLETON_TOL = 1e-10
CURVE_MAX_SPACING = 2e-3
EPS_T = 1e-4
EPS_X = 1e-7


class SingletonSuspected(ValueError):
    """The explored trajectory never leaves a tiny neighbourhood of x0."""


@dataclass
class JordanCurve:
    """Trajectory arc x([s, t]) closed by the chord x(t) -> x(s)."""

    s: float
    t: float
    polyline: ClosedPolyline          # vertices in trajectory order
    chord: tuple[Vec2, Vec2]
    orientation: Orientation
    chord_fallback: bool = False

    @property
    def as_polyline(self) -> ClosedPolyline:
        return self.polyline

    def ccw(self) -> ClosedPolyline:
        return self.polyline if self.orientation is Orientation.CCW else self.polyline.reversed()

    def is_simple(self) -> bool:
        return is_simple(self.polyline.vertices)

    def to_dict(self) -> dict:
        return {
            "s": self.s, "t": self.t,
            "orientation": self.orientation.value,
            "chord_fallback": self.chord_fallback,
            "vertices": self.polyline.vertices.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JordanCurve":
        poly = ClosedPolyline(np.asarray(d["vertices"], dtype=float))
        v = poly.vertices
        return cls(float(d["s"]), float(d["t"]), poly,
                   (Vec2(*v[-1]), Vec2(*v[0])), Orientation(d["orientation"]),
                   bool(d.get("chord_fallback", False)))


@dataclass
class Periodicity:
    periodic: bool
    t_star: Optional[float]
    estimates: list[float] = dc_field(default_factory=list)
    gaps: list[float] = dc_field(default_factory=list)


@dataclass
class ConstructionTrace:
    x0: Vec2
    D: float
    t0: Optional[float] = None
    delta: list[float] = dc_field(default_factory=list)    # delta_0 .. delta_k
    t_hit: list[float] = dc_field(default_factory=list)    # t_0 .. t_k
    s_meet: list[float] = dc_field(default_factory=list)   # s_1 .. s_k
    curves: list[JordanCurve] = dc_field(default_factory=list)
    status: str = "running"
    t_star: Optional[float] = None
    diagnostics: dict = dc_field(default_factory=dict)
    trajectory: Optional[Trajectory] = dc_field(default=None, repr=False)
    initial_arc: Optional[np.ndarray] = dc_field(default=None, repr=False)
    initial_arc_times: Optional[np.ndarray] = dc_field(default=None, repr=False)

    @property
    def stages(self) -> int:
        return len(self.curves)

    def status_string(self) -> str:
        if self.status == "periodic":
            return f"periodic({self.t_star!r})"
        return self.status

    def to_dict(self, include_trajectory: bool = True) -> dict:
        out = {
            "x0": [self.x0.x, self.x0.y],
            "D": self.D,
            "delta": list(self.delta),
            "t_hit": list(self.t_hit),
            "s_meet": list(self.s_meet),
            "status": self.status_string(),
            "t_star": self.t_star,
            "curves": [c.to_dict() for c in self.curves],
        }
        if include_trajectory and self.trajectory is not None:
            out["trajectory"] = self.trajectory.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict, trajectory: Optional[Trajectory] = None) -> "ConstructionTrace":
        status = d["status"]
        if status.startswith("periodic("):
            status = "periodic"
        t_hit = [float(v) for v in d["t_hit"]]
        return cls(Vec2(*d["x0"]), float(d["D"]), t_hit[0] if t_hit else None,
                   [float(v) for v in d["delta"]], t_hit, [float(v) for v in d["s_meet"]],
                   [JordanCurve.from_dict(c) for c in d["curves"]], status,
                   d.get("t_star"), trajectory=trajectory)


def choose_D(traj: Trajectory, t_probe: float) -> float:
    """One third of the largest excursion from x0 on [0, t_probe], times 0.9."""
    traj.ensure(t_probe)
    x0 = traj.x0
    T, Y, _ = traj.knots()
    scale = max(float(np.max(np.hypot(*(Y - x0.as_tuple()).T))), 1e-300)
    _, dmax = distance_extremum(traj, x0, 0.0, t_probe, scale, largest=True)
    if dmax < SINGLETON_TOL * max(1.0, x0.norm()):
        raise SingletonSuspected(f"max excursion {dmax:.3g} from x0 over [0, {t_probe}]")
    return D_SAFETY * dmax / 3.0


def min_return_distance(traj: Trajectory, x0: PointLike, ta: float, tb: float,
                        length_scale: float) -> float:
    """min |x(t) - x0| over [ta, tb], polished by a radial-rate root."""
    _, d = distance_extremum(traj, x0, ta, tb, length_scale)
    return d


def next_delta(trace: ConstructionTrace, traj: Trajectory) -> float:
    """Next radius: just under half of min(delta_{i-1}, min_{[t_0, t_{i-1}]} |x(t) - x0|)."""
    prev = trace.delta[-1]
    m = min_return_distance(traj, trace.x0, trace.t_hit[0], trace.t_hit[-1], prev)
    return DELTA_SHRINK * min(prev, m)


def _arc_samples(traj: Trajectory, ta: float, tb: float, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    ts = sample_grid(traj, ta, tb, 4.0 * spacing)
    X = traj.sample(ts)
    keep = np.ones(len(ts), dtype=bool)
    keep[1:] = np.any(np.diff(X, axis=0) != 0, axis=1)
    return ts[keep], X[keep]


def _chord_side(traj: Trajectory, a: Vec2, b: Vec2):
    dx, dy = b.x - a.x, b.y - a.y

    def side(t: float) -> float:
        x, y = traj.state(t)
        return (x - a.x) * dy - (y - a.y) * dx
    return side


def meet_time(traj: Trajectory, a: Vec2, b: Vec2, arc_t: np.ndarray, arc_x: np.ndarray):
    """Time s in [0, t_0] where the chord a -> b first meets the sampled arc."""
    meet = first_meet(a, b, Path(arc_x))
    if meet is None:
        return None, None
    k = int(min(math.floor(meet.path_param), len(arc_t) - 2))
    frac = meet.path_param - k
    if meet.path_vertex:
        return float(arc_t[int(round(meet.path_param))]), meet
    ta, tb = float(arc_t[k]), float(arc_t[k + 1])
    side = _chord_side(traj, a, b)
    sa, sb = side(ta), side(tb)
    if sa * sb < 0:
        return brentq(side, ta, tb, xtol=ROOT_RTOL * max(1.0, tb)), meet
    return ta + frac * (tb - ta), meet


def build_curve(traj: Trajectory, s: float, t: float, spacing: float,
                chord_fallback: bool = False) -> JordanCurve:
    _, X = _arc_samples(traj, s, t, spacing)
    poly = ClosedPolyline(X)
    return JordanCurve(s, t, poly, (Vec2(*X[-1]), Vec2(*X[0])), poly.orientation(),
                       chord_fallback)


def run_construction(f: Field, x0: PointLike, i_max: int, budget: float = DEFAULT_T_MAX, *,
                     tol: float = 1e-10, t_probe: float = 50.0, eps_t: float = EPS_T,
                     eps_x: float = EPS_X, stop_on_periodic: bool = False,
                     traj: Optional[Trajectory] = None,
                     max_spacing: float = CURVE_MAX_SPACING) -> ConstructionTrace:
    """Run up to ``i_max`` stages. ``budget`` caps the time searched for a return."""
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    if traj is None:
        traj = integrate(f, x0, t_probe, tol)
    x0v = traj.x0
    D = choose_D(traj, t_probe)
    trace = ConstructionTrace(x0v, D, trajectory=traj)
    trace.delta.append(D)
    t0 = first_circle_hit(traj, Circle(x0v, D), 0.0, budget)
    if t0 is None:
        trace.status = "not_recurrent"
        trace.diagnostics["timeout_stage"] = 0
        return trace
    trace.t0 = t0
    trace.t_hit.append(t0)
    arc_t, arc_x = _arc_samples(traj, 0.0, t0, min(D / 4, max_spacing))
    trace.initial_arc, trace.initial_arc_times = arc_x, arc_t
    fallbacks = 0

    for i in range(1, i_max + 1):
        delta = next_delta(trace, traj)
        try:
            ti = first_circle_hit(traj, Circle(x0v, delta), trace.t_hit[-1], budget)
        except IntegrationError as exc:
            trace.diagnostics["integration_error"] = str(exc)
            ti = None
        if ti is None:
            trace.status = "not_recurrent"
            trace.diagnostics["timeout_stage"] = i
            break
        a = traj.at(ti)
        s, meet = meet_time(traj, a, x0v, arc_t, arc_x)
        fallback = meet is None or meet.segment_end
        if s is None:
            s = 0.0
        fallbacks += fallback
        trace.delta.append(delta)
        trace.t_hit.append(ti)
        trace.s_meet.append(s)
        trace.curves.append(build_curve(traj, s, ti, min(delta / 4, max_spacing), fallback))
        if stop_on_periodic and i >= 2 and detect_periodicity(trace, eps_t, eps_x).periodic:
            break

    trace.diagnostics["chord_fallbacks"] = fallbacks
    if trace.stages >= 2:
        per = detect_periodicity(trace, eps_t, eps_x)
        trace.diagnostics["return_estimates"] = per.estimates
        trace.diagnostics["return_gaps"] = per.gaps
        if per.periodic:
            trace.status = "periodic"
            trace.t_star = per.t_star
            return trace
    if trace.status == "running":
        trace.status = "budget_exhausted"
    return trace


def _refined_return(traj: Trajectory, x0: Vec2, t_prev: Optional[float], d_prev: Optional[float],
                    t_i: float, d_i: float) -> tuple[float, float]:
    """Secant extrapolation of |x(t) - x0| -> 0 from the last two hits, then
    polish to the closest approach (root of the radial rate)."""
    vx, vy = traj.velocity(t_i)
    x, y = traj.state(t_i)
    speed = math.hypot(vx, vy)
    rate = ((x - x0.x) * vx + (y - x0.y) * vy) / max(d_i, 1e-300)
    if t_prev is not None and d_prev is not None and d_prev > d_i:
        step = d_i * (t_i - t_prev) / (d_prev - d_i)
    elif rate < 0:
        step = d_i / -rate
    else:
        step = d_i / max(speed, 1e-300)
    guess = t_i + step
    hi = t_i + 3.0 * step
    traj.ensure(hi)

    def radial(t: float) -> float:
        px, py = traj.state(t)
        qx, qy = traj.velocity(t)
        return (px - x0.x) * qx + (py - x0.y) * qy

    ra, rb = radial(t_i), radial(hi)
    t_star = guess
    if ra < 0 < rb:
        t_star = brentq(radial, t_i, hi, xtol=ROOT_RTOL * max(1.0, hi), rtol=4 * np.finfo(float).eps)
    px, py = traj.state(t_star)
    return t_star, math.hypot(px - x0.x, py - x0.y)


def detect_periodicity(trace: ConstructionTrace, eps_t: float = EPS_T, eps_x: float = EPS_X,
                       traj: Optional[Trajectory] = None) -> Periodicity:
    """Decide whether the hitting times converge to a return x(t*) = x0.

    A stage passes when its return estimate lies within ``eps_x`` of x0; the
    orbit is declared periodic when the last two stages pass and their
    estimates agree within ``eps_t``. Without a trajectory only the raw hits
    are used (t_i - t_{i-1} <= eps_t and delta_i <= eps_x).
    """
    k = len(trace.t_hit) - 1
    if k < 2:
        return Periodicity(False, None)
    traj = traj or trace.trajectory
    t, d = trace.t_hit, trace.delta

    raw_ok = all(t[j] - t[j - 1] <= eps_t and d[j] <= eps_x for j in (k - 1, k))
    if traj is None:
        return Periodicity(raw_ok, t[k] if raw_ok else None)

    est, gaps = [], []
    for j in range(1, k + 1):
        t_prev = t[j - 1] if j >= 2 else None
        d_prev = d[j - 1] if j >= 2 else None
        ts, gap = _refined_return(traj, trace.x0, t_prev, d_prev, t[j], d[j])
        est.append(ts)
        gaps.append(gap)
    ok = (gaps[-1] <= eps_x and gaps[-2] <= eps_x and abs(est[-1] - est[-2]) <= eps_t)
    if ok or raw_ok:
        return Periodicity(True, est[-1], est, gaps)
    return Periodicity(False, None, est, gaps)


def recurrence_probe(traj: Trajectory, y0: PointLike, delta: float, s: float = 0.0,
                     t_max: float = DEFAULT_T_MAX) -> Optional[float]:
    """First t > s with |x(t) - y0| < delta, or None before ``t_max``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    y0v = as_vec(y0)
    traj.ensure(s)
    x, y = traj.state(s)
    if math.hypot(x - y0v.x, y - y0v.y) < delta:
        return s
    try:
        return first_circle_hit(traj, Circle(y0v, delta), s, t_max)
    except IntegrationError:
        return None


def jordan_ok(curve: JordanCurve) -> bool:
    try:
        return curve.is_simple()
    except GeometryError:
        return False
