"""Numerical certificates for the flux argument, and the classifier.

Given the construction trace of a trajectory and a small ball window
B(y0, r0) far from x0, the field integrated over the times spent in B up to
each hitting time must stay below 2 pi r0 in norm. The divergence cross-check
verifies the underlying identity on each Jordan curve from two independent
sides: the rotated trajectory displacement inside B, and the closed-form
normal integral over the circle arcs lying inside the curve. The equilibrium
certificate tests whether 0 sits in the convex hull of sampled field values
on shrinking discs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import root as nd_root

from .construct import (ConstructionTrace, JordanCurve, SingletonSuspected, run_construction)
from .field import Field, FieldDomainError
from .flow import IntegrationError, Trajectory, integrate, residence
from .geom import (Circle, Orientation, PointLike, Region, Vec2, arc_normal_integral, as_vec,
                   normal_integral, point_in_region, polyline_circle_hits, rotate_quarter)


class CertificateError(ValueError):
    pass


class SeparationViolated(CertificateError):
    pass


class GrazingUnresolved(CertificateError):
    """A grazing contact with the window; re-draw the radius."""


class AmbiguousArc(CertificateError):
    """An arc cannot be classified at the current polyline resolution."""


class RetriesExhausted(CertificateError):
    pass


@dataclass(frozen=True)
class BallWindow:
    circle: Circle
    separation_ok: bool

    @classmethod
    def make(cls, y0: PointLike, r0: float, x0: PointLike, D: float) -> "BallWindow":
        c = Circle.of(y0, r0)
        sep = (c.center - as_vec(x0)).norm() > 2 * D and r0 < D
        return cls(c, sep)

    def to_dict(self) -> dict:
        return {"center": [self.circle.center.x, self.circle.center.y],
                "radius": self.circle.radius}


@dataclass
class CertificateReport:
    kind: str
    passed: bool
    measured: dict
    tolerance: float
    context: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pass": bool(self.passed), "measured": self.measured,
                "tolerance": self.tolerance, "context": self.context}


def _context(trace: Optional[ConstructionTrace], traj: Optional[Trajectory],
             w: Optional[BallWindow], extra: Optional[dict]) -> dict:
    ctx = {}
    if traj is not None:
        ctx["field"] = traj.field.name
        ctx["x0"] = [traj.x0.x, traj.x0.y]
    if w is not None:
        ctx["window"] = w.to_dict()
    if trace is not None:
        ctx["stage_count"] = trace.stages
    ctx.update(extra or {})
    return ctx


# -- flux ---------------------------------------------------------------------

def flux_integral(traj: Trajectory, w: BallWindow, t_hi: float, t_lo: float = 0.0) -> Vec2:
    """Integral of f(x(t)) over the in-window times of [t_lo, t_hi].

    Evaluated per residence interval as exit state minus entry state.
    """
    traj.ensure(t_hi)
    res = residence(traj, w.circle, t_hi, t_lo)
    if res.grazing:
        raise GrazingUnresolved(f"grazing contact at t={res.grazes[0]!r}")
    sx = sy = 0.0
    for a, b in res.intervals:
        xa, ya = traj.state(a)
        xb, yb = traj.state(b)
        sx += xb - xa
        sy += yb - ya
    return Vec2(sx, sy)


def flux_bound_certificate(trace: ConstructionTrace, traj: Trajectory, w: BallWindow,
                           context: Optional[dict] = None) -> CertificateReport:
    if not w.separation_ok:
        raise SeparationViolated("window must satisfy |y0 - x0| > 2D and r0 < D")
    r0 = w.circle.radius
    bound = 2 * math.pi * r0
    measured: dict = {}
    worst = 0.0
    n_cross = residence(traj, w.circle, max(trace.t_hit[1:] or [0.0])).crossing_count \
        if trace.stages else 0
    tol = 1e-6 + 10 * traj.tol * (n_cross + 1)
    for i, ti in enumerate(trace.t_hit[1:], start=1):
        F = flux_integral(traj, w, ti)
        measured[f"stage_{i}"] = F.norm()
        worst = max(worst, F.norm())
    measured["max"] = worst
    measured["bound"] = bound
    return CertificateReport("flux_bound", worst <= bound + tol, measured, tol,
                             _context(trace, traj, w, context))


# -- divergence cross-check ---------------------------------------------------

def trajectory_side(curve: JordanCurve, w: BallWindow, traj: Trajectory) -> Vec2:
    """Outward-normal integral over the part of the curve inside B, from the
    trajectory displacement turned by a quarter rotation."""
    disp = flux_integral(traj, w, curve.t, curve.s)
    # outward normal is the tangent turned clockwise on a CCW curve
    turn = Orientation.CW if curve.orientation is Orientation.CCW else Orientation.CCW
    return rotate_quarter(disp, turn)


def arc_side(curve: JordanCurve, w: BallWindow, eps_b: Optional[float] = None) -> Vec2:
    """Outward normal of B integrated over the arcs of the circle inside the curve."""
    poly = curve.ccw()
    c = w.circle
    pts, tangent = polyline_circle_hits(poly.vertices, c)
    if tangent:
        raise AmbiguousArc("curve polyline is tangent to the window circle")
    if eps_b is None:
        eps_b = 1e-9 * poly.diameter()
    if len(pts) == 0:
        where = point_in_region(poly, c.point_at(0.0), eps_b)
        if where is Region.BOUNDARY:
            raise AmbiguousArc("circle touches the curve")
        return Vec2(0.0, 0.0)
    th = np.sort(np.arctan2(pts[:, 1] - c.center.y, pts[:, 0] - c.center.x))
    ends = np.append(th[1:], th[0] + 2 * math.pi)
    sx = sy = 0.0
    for a, b in zip(th, ends):
        if b <= a:
            raise AmbiguousArc("coincident crossing points on the circle")
        where = point_in_region(poly, c.point_at(0.5 * (a + b)), eps_b)
        if where is Region.BOUNDARY:
            raise AmbiguousArc(f"arc midpoint at angle {0.5 * (a + b):.6g} on the curve")
        if where is Region.INSIDE:
            v = arc_normal_integral(c, float(a), float(b))
            sx += v.x
            sy += v.y
    return Vec2(sx, sy)


def divergence_crosscheck(curve: JordanCurve, w: BallWindow, traj: Trajectory,
                          tol: float = 1e-5, context: Optional[dict] = None) -> CertificateReport:
    """Zero normal integral over the boundary of (inside of curve) & B.

    The trajectory side must cancel the arc side: lhs = -arcs.
    """
    if not w.separation_ok:
        raise SeparationViolated("window must satisfy |y0 - x0| > 2D and r0 < D")
    lhs = trajectory_side(curve, w, traj)
    arcs = arc_side(curve, w)
    rhs = -arcs
    diff = (lhs - rhs).norm()
    r0 = w.circle.radius
    measured = {"lhs_x": lhs.x, "lhs_y": lhs.y, "rhs_x": rhs.x, "rhs_y": rhs.y,
                "difference": diff, "lhs_norm": lhs.norm()}
    ctx = _context(None, traj, w, context)
    ctx.setdefault("curve", {"s": curve.s, "t": curve.t})
    return CertificateReport("divergence_crosscheck", diff <= tol * (1 + r0), measured,
                             tol * (1 + r0), ctx)


def normal_integral_check(curve: JordanCurve, context: Optional[dict] = None) -> CertificateReport:
    poly = curve.polyline
    v = normal_integral(poly)
    per = poly.perimeter()
    tol = 1e-12 * per
    ctx = {"curve": {"s": curve.s, "t": curve.t, "vertices": len(poly)}}
    ctx.update(context or {})
    return CertificateReport("normal_integral", v.norm() <= tol,
                             {"norm": v.norm(), "perimeter": per}, tol, ctx)


# -- crossing finiteness ------------------------------------------------------

@dataclass(frozen=True)
class CrossingCount:
    count: int
    radius: float
    perturbations: int
    truncated: bool

    def __iter__(self):
        yield self.count
        yield self.radius


def crossing_finiteness(traj: Trajectory, y0: PointLike, r0: float, t_hi: float,
                        retries: int = 5, seed: int = 0) -> CrossingCount:
    """Count the crossings of |x(t) - y0| = r on [0, t_hi].

    On a grazing contact r is redrawn uniformly within 5% of r0.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    rng = np.random.default_rng(seed)
    traj.ensure(t_hi)
    r = r0
    for attempt in range(retries + 1):
        res = residence(traj, Circle.of(y0, r), t_hi)
        if not res.grazing:
            trunc = any(a or b for a, b in res.truncated)
            return CrossingCount(res.crossing_count, r, attempt, trunc)
        r = r0 * (1.0 + rng.uniform(-0.05, 0.05))
    raise RetriesExhausted(f"grazing persisted after {retries} radius perturbations")


def crossing_certificate(traj: Trajectory, w: BallWindow, t_hi: float, retries: int = 5,
                         seed: int = 0, context: Optional[dict] = None) -> CertificateReport:
    try:
        cc = crossing_finiteness(traj, w.circle.center, w.circle.radius, t_hi, retries, seed)
    except RetriesExhausted as exc:
        return CertificateReport("crossing_finiteness", False, {"error": str(exc)}, 0.0,
                                 _context(None, traj, w, context))
    even = cc.count % 2 == 0
    ok = even or cc.truncated
    measured = {"count": cc.count, "radius_used": cc.radius, "perturbations": cc.perturbations,
                "t_hi": t_hi, "truncated": cc.truncated}
    return CertificateReport("crossing_finiteness", ok, measured, 0.0,
                             _context(None, traj, w, {**(context or {}), "seed": seed}))


# -- equilibrium ----------------------------------------------------------------

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def disc_samples(y0: PointLike, r: float, n: int = 256, n_rim: int = 64) -> np.ndarray:
    """Sunflower points filling the closed disc plus points on its rim."""
    c = as_vec(y0)
    k = np.arange(n)
    rho = r * np.sqrt((k + 0.5) / n)
    th = k * GOLDEN_ANGLE
    rim = 2 * math.pi * np.arange(n_rim) / n_rim
    xs = np.concatenate([c.x + rho * np.cos(th), c.x + r * np.cos(rim)])
    ys = np.concatenate([c.y + rho * np.sin(th), c.y + r * np.sin(rim)])
    return np.column_stack([xs, ys])


def zero_in_hull(vectors: np.ndarray) -> bool:
    """Is 0 in the convex hull of the planar vectors?

    Equivalent to the widest angular gap between consecutive directions being
    at most pi; the gap is decided by the sign of a cross product.
    """
    norms = np.hypot(vectors[:, 0], vectors[:, 1])
    if np.any(norms == 0):
        return True
    ang = np.arctan2(vectors[:, 1], vectors[:, 0])
    order = np.argsort(ang)
    ang = ang[order]
    v = vectors[order]
    gaps = np.diff(np.append(ang, ang[0] + 2 * math.pi))
    j = int(np.argmax(gaps))
    u, w = v[j], v[(j + 1) % len(v)]
    if len(v) == 1:
        return False
    cross = u[0] * w[1] - u[1] * w[0]
    if gaps[j] < math.pi / 2:
        return True
    if gaps[j] > 3 * math.pi / 2:
        return False
    return cross >= 0


def equilibrium_certificate(f: Field, y0: PointLike, radii: Sequence[float] = (0.1, 0.05, 0.025),
                            n_samples: int = 256, context: Optional[dict] = None) -> CertificateReport:
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly decreasing")
    y0v = as_vec(y0)
    contains, mins = [], []
    for r in radii:
        P = disc_samples(y0v, r, n_samples)
        vals = []
        for x, y in P:
            try:
                vals.append(f(x, y))
            except FieldDomainError:
                continue
        V = np.array(vals, dtype=float).reshape(-1, 2)
        contains.append(bool(len(V)) and zero_in_hull(V))
        mins.append(float(np.min(np.hypot(V[:, 0], V[:, 1]))) if len(V) else math.inf)
    ratios = []
    trend_ok = True
    for (ra, rb), (ma, mb) in zip(zip(radii, radii[1:]), zip(mins, mins[1:])):
        if ma == 0.0:
            ratios.append(0.0)
            continue
        q = mb / ma
        ratios.append(q)
        trend_ok &= q <= 1.1 * (rb / ra)
    measured = {"radii": radii, "contains_zero": contains, "min_norm": mins,
                "min_ratio": ratios}
    ctx = {"point": [y0v.x, y0v.y], "field": f.name, "samples": n_samples + 64}
    ctx.update(context or {})
    return CertificateReport("equilibrium", all(contains) and trend_ok, measured, 0.1, ctx)


# -- windows ------------------------------------------------------------------

def auto_windows(trace: ConstructionTrace, traj: Trajectory, n: int,
                 r_range: tuple[float, float], seed: int = 0, period: Optional[float] = None
                 ) -> list[BallWindow]:
    """Windows centred on the orbit at (roughly) equal time spacing, radii
    drawn from ``r_range``, kept only when they satisfy the separation rule."""
    rng = np.random.default_rng(seed)
    span = period or trace.t_star or trace.t_hit[-1]
    m = 8 * n
    ts = span * (np.arange(m) + 0.5) / m
    traj.ensure(span)
    X = traj.sample(ts)
    d = np.hypot(X[:, 0] - trace.x0.x, X[:, 1] - trace.x0.y)
    ok = np.flatnonzero(d > 2 * trace.D)
    if len(ok) == 0:
        return []
    pick = ok[np.linspace(0, len(ok) - 1, min(n, len(ok))).round().astype(int)]
    lo, hi = r_range
    hi = min(hi, trace.D * (1 - 1e-9))
    out = []
    for k in pick:
        r = float(rng.uniform(lo, hi))
        out.append(BallWindow.make(X[k], r, trace.x0, trace.D))
    return out


# -- classification -----------------------------------------------------------

@dataclass
class ClassifyConfig:
    tol: float = 1e-10
    tol_eq: float = 1e-9
    T_pre: float = 50.0
    t_probe: float = 50.0
    i_max: int = 8
    t_max: float = 1e4
    eps_t: float = 1e-4
    eps_x: float = 1e-7
    radii: tuple[float, ...] = (0.1, 0.05, 0.025)
    seed: int = 0


@dataclass
class Classification:
    kind: str                      # equilibrium | periodic_orbit | undecided
    path: str                      # a | b | c | d
    point: Optional[Vec2] = None
    period: Optional[float] = None
    curve: Optional[JordanCurve] = None
    trace: Optional[ConstructionTrace] = None
    trajectory: Optional[Trajectory] = None
    certificate: Optional[CertificateReport] = None
    diagnostics: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "path": self.path, "diagnostics": self.diagnostics}
        if self.point is not None:
            out["point"] = [self.point.x, self.point.y]
        if self.period is not None:
            out["period"] = self.period
        return out


def _polish_equilibrium(f: Field, guess: Vec2, reach: float) -> Vec2:
    def F(p):
        try:
            return f(float(p[0]), float(p[1]))
        except FieldDomainError:
            return (math.inf, math.inf)
    try:
        sol = nd_root(F, [guess.x, guess.y], method="hybr")
    except (ValueError, FloatingPointError):
        return guess
    cand = sol.x
    if not np.all(np.isfinite(cand)) or math.hypot(cand[0] - guess.x, cand[1] - guess.y) > reach:
        return guess
    if math.hypot(*F(cand)) < math.hypot(*F(guess.as_tuple())):
        return Vec2(float(cand[0]), float(cand[1]))
    return guess


def _tail_minimum(f: Field, traj: Trajectory) -> Vec2:
    T, Y, F = traj.knots()
    tail = T >= 0.5 * T[-1]
    speeds = np.hypot(F[tail, 0], F[tail, 1])
    k = int(np.argmin(speeds))
    return Vec2(*Y[tail][k])


def _equilibrium_path(f: Field, traj: Trajectory, cfg: ClassifyConfig,
                      trace: Optional[ConstructionTrace], diag: dict) -> Classification:
    y = _tail_minimum(f, traj)
    y = _polish_equilibrium(f, y, cfg.radii[-1])
    cert = equilibrium_certificate(f, y, cfg.radii)
    if cert.passed:
        return Classification("equilibrium", "c", point=y, trace=trace, trajectory=traj,
                              certificate=cert, diagnostics=diag)
    diag["equilibrium_certificate"] = cert.measured
    return Classification("undecided", "d", trace=trace, trajectory=traj, certificate=cert,
                          diagnostics=diag)


def classify(f: Field, x0: PointLike, config: Optional[ClassifyConfig] = None) -> Classification:
    """Equilibrium, periodic orbit, or undecided (budget ran out)."""
    cfg = config or ClassifyConfig()
    x0v = as_vec(x0)
    diag: dict = {}
    try:
        fx = f.eval(x0v)
    except FieldDomainError as exc:
        return Classification("undecided", "d", diagnostics={"error": str(exc)})
    if fx.norm() <= cfg.tol_eq:
        cert = equilibrium_certificate(f, x0v, cfg.radii)
        return Classification("equilibrium", "a", point=x0v, certificate=cert,
                              diagnostics={"speed": fx.norm()})

    try:
        pre = integrate(f, x0v, cfg.T_pre, cfg.tol)
    except IntegrationError as exc:
        return Classification("undecided", "d", diagnostics={"pre_integration": str(exc)})
    seed_pt = pre.at(pre.t_end)
    diag["seed_point"] = [seed_pt.x, seed_pt.y]

    trace = None
    if f.eval(seed_pt).norm() <= cfg.tol_eq:
        # the transient already settled onto a rest point
        diag["construction_status"] = "skipped_at_rest"
        return _equilibrium_path(f, pre, cfg, None, diag)
    try:
        traj = integrate(f, seed_pt, cfg.t_probe, cfg.tol)
        trace = run_construction(f, seed_pt, cfg.i_max, cfg.t_max, tol=cfg.tol,
                                 t_probe=cfg.t_probe, eps_t=cfg.eps_t, eps_x=cfg.eps_x, traj=traj)
        diag["construction_status"] = trace.status
        diag.update({k: v for k, v in trace.diagnostics.items()
                     if k in ("timeout_stage", "integration_error", "chord_fallbacks")})
    except SingletonSuspected as exc:
        diag["construction_status"] = "singleton_suspected"
        diag["singleton"] = str(exc)
        traj = pre
    except IntegrationError as exc:
        diag["construction_status"] = "integration_error"
        diag["integration_error"] = str(exc)
        traj = pre

    if trace is not None and trace.status == "periodic":
        return Classification("periodic_orbit", "b", period=trace.t_star, curve=trace.curves[-1],
                              trace=trace, trajectory=trace.trajectory, diagnostics=diag)

    if trace is None or trace.status == "not_recurrent":
        return _equilibrium_path(f, traj if trace is None else trace.trajectory, cfg, trace, diag)
    return Classification("undecided", "d", trace=trace, trajectory=trace.trajectory,
                          diagnostics=diag)
