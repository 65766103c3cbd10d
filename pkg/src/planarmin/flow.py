"""Numerical flow of an autonomous planar field.

A :class:`Trajectory` is produced by an adaptive Dormand-Prince 5(4) pair and
keeps the per-step continuous extension, so the solution can be evaluated
(and differentiated) at any time in ``[0, t_end]``. It only ever grows at the
right end; sampling an old time after :meth:`Trajectory.extend` gives the
same bits as before.

The event helpers locate times where the trajectory meets a circle: a
sampled sign scan over the dense output, extremum checks for short dips, and
Brent refinement.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .field import Field, FieldDomainError
from .geom import Circle, PointLike, Vec2, as_vec

TOL_RANGE = (1e-13, 1e-3)
ROOT_RTOL = 1e-12          # time tolerance is ROOT_RTOL * max(1, t)
DEFAULT_T_MAX = 1e4
MIN_SUBSAMPLES = 8
MAX_SUBSAMPLES = 4096
BLOWUP_NORM = 1e100

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# continuous extension: y(t + th h) = y + h * sum_k K_k (P_k . [th, th^2, th^3, th^4])
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


class IntegrationError(RuntimeError):
    """Step-size underflow, blow-up or a field domain error along the way."""

    def __init__(self, message: str, t: float, state: tuple[float, float]):
        self.t = t
        self.state = state
        super().__init__(f"{message} at t={t!r}, x=({state[0]!r}, {state[1]!r})")


class EventPreconditionError(ValueError):
    pass


def check_tol(tol: float) -> float:
    lo, hi = TOL_RANGE
    if not (lo <= tol <= hi):
        raise ValueError(f"tol must lie in [{lo:g}, {hi:g}], got {tol!r}")
    return float(tol)


class Trajectory:
    """Dense, append-only numerical solution started at ``x0`` at time 0."""

    def __init__(self, field: Field, x0: PointLike, tol: float = 1e-10):
        self.field = field
        self.x0 = as_vec(x0)
        self.tol = check_tol(tol)
        x, y = self.x0
        try:
            f0 = field(x, y)
        except FieldDomainError as exc:
            raise IntegrationError(f"field undefined at start ({exc})", 0.0, (x, y)) from exc
        self._t: list[float] = [0.0]
        self._y: list[tuple[float, float]] = [(x, y)]
        self._f: list[tuple[float, float]] = [f0]
        self._q: list[tuple[float, ...]] = []   # 8 dense coefficients per step
        self._h_next: Optional[float] = None
        self._arrays = None

    # -- basic access --------------------------------------------------------

    @property
    def t_end(self) -> float:
        return self._t[-1]

    @property
    def n_knots(self) -> int:
        return len(self._t)

    def knots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        T, Y, F, _, _ = self.arrays()
        return T, Y, F

    def arrays(self):
        """(T, Y, F, H, Q) as numpy arrays; Q has shape (steps, 2, 4)."""
        n = len(self._t)
        if self._arrays is None or self._arrays[0].shape[0] != n:
            T = np.array(self._t)
            Y = np.array(self._y).reshape(n, 2)
            F = np.array(self._f).reshape(n, 2)
            H = np.diff(T)
            Q = np.array(self._q).reshape(n - 1, 2, 4) if n > 1 else np.zeros((0, 2, 4))
            self._arrays = (T, Y, F, H, Q)
        return self._arrays

    def _locate(self, t: float) -> int:
        if not (0.0 <= t <= self._t[-1]):
            raise ValueError(f"t={t!r} outside [0, {self._t[-1]!r}]")
        k = bisect.bisect_right(self._t, t) - 1
        return min(k, len(self._t) - 2) if len(self._t) > 1 else 0

    def state(self, t: float) -> tuple[float, float]:
        k = self._locate(t)
        t0 = self._t[k]
        if t == t0 or len(self._t) == 1:
            return self._y[k]
        if t == self._t[k + 1]:
            return self._y[k + 1]
        h = self._t[k + 1] - t0
        th = (t - t0) / h
        q = self._q[k]
        x0, y0 = self._y[k]
        x = x0 + h * th * (q[0] + th * (q[1] + th * (q[2] + th * q[3])))
        y = y0 + h * th * (q[4] + th * (q[5] + th * (q[6] + th * q[7])))
        return x, y

    def velocity(self, t: float) -> tuple[float, float]:
        """Time derivative of the dense interpolant."""
        k = self._locate(t)
        if len(self._t) == 1:
            return self._f[0]
        h = self._t[k + 1] - self._t[k]
        th = (t - self._t[k]) / h
        q = self._q[k]
        vx = q[0] + th * (2 * q[1] + th * (3 * q[2] + th * 4 * q[3]))
        vy = q[4] + th * (2 * q[5] + th * (3 * q[6] + th * 4 * q[7]))
        return vx, vy

    def at(self, t: float) -> Vec2:
        return Vec2(*self.state(t))

    def sample(self, ts: Sequence[float]) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        T, Y, _, H, Q = self.arrays()
        if ts.size and (ts.min() < 0.0 or ts.max() > T[-1]):
            raise ValueError(f"sample times outside [0, {T[-1]!r}]")
        if len(T) == 1:
            return np.repeat(Y[:1], ts.size, axis=0)
        k = np.clip(np.searchsorted(T, ts, side="right") - 1, 0, len(T) - 2)
        h = H[k]
        th = (ts - T[k]) / h
        powers = np.stack([th, th ** 2, th ** 3, th ** 4], axis=-1)
        out = Y[k] + h[:, None] * np.einsum("nij,nj->ni", Q[k], powers)
        exact = ts == T[k]
        out[exact] = Y[k[exact]]
        last = ts == T[-1]
        out[last] = Y[-1]
        return out

    def defect(self, t: float) -> float:
        """|x'(t) - f(x(t))| of the dense interpolant."""
        vx, vy = self.velocity(t)
        fx, fy = self.field(*self.state(t))
        return math.hypot(vx - fx, vy - fy)

    # -- integration ---------------------------------------------------------

    def _initial_step(self, y, f0) -> float:
        sc = [self.tol * (1.0 + abs(v)) for v in y]
        d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y, sc)) / 2)
        d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, sc)) / 2)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        try:
            f1 = self.field(y[0] + h0 * f0[0], y[1] + h0 * f0[1])
        except FieldDomainError:
            return h0
        d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, sc)) / 2) / h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1)

    def _try_step(self, t, y, f0, h):
        f = self.field
        K = [f0]
        for i in range(1, 6):
            a = _A[i]
            sx = y[0] + h * sum(a[j] * K[j][0] for j in range(i))
            sy = y[1] + h * sum(a[j] * K[j][1] for j in range(i))
            K.append(f(sx, sy))
        xn = y[0] + h * sum(_B[j] * K[j][0] for j in range(6))
        yn = y[1] + h * sum(_B[j] * K[j][1] for j in range(6))
        if not (math.isfinite(xn) and math.isfinite(yn)):
            raise FieldDomainError("non-finite stage")
        K.append(f(xn, yn))
        ex = h * sum(_E[j] * K[j][0] for j in range(7))
        ey = h * sum(_E[j] * K[j][1] for j in range(7))
        err = max(abs(ex) / (self.tol * (1.0 + max(abs(y[0]), abs(xn)))),
                  abs(ey) / (self.tol * (1.0 + max(abs(y[1]), abs(yn)))))
        q = tuple(sum(K[k][d] * _P[k][j] for k in range(7)) for d in (0, 1) for j in range(4))
        return (xn, yn), K[6], err, q

    def extend(self, t_new: float) -> "Trajectory":
        """Continue the solution to ``t_new``; earlier knots are untouched."""
        if not t_new > self.t_end:
            raise ValueError(f"extend needs t_new > t_end={self.t_end!r}, got {t_new!r}")
        if not math.isfinite(t_new):
            raise ValueError("t_new must be finite")
        t, y, f0 = self._t[-1], self._y[-1], self._f[-1]
        h_prop = self._h_next or self._initial_step(y, f0)
        try:
            while t < t_new:
                h_min = 16 * np.finfo(float).eps * max(1.0, abs(t))
                clipped = t + h_prop >= t_new or t_new - (t + h_prop) < h_min
                h = t_new - t if clipped else h_prop
                try:
                    y_new, f_new, err, q = self._try_step(t, y, f0, h)
                except FieldDomainError:
                    err = math.inf
                if err <= 1.0:
                    t_next = t_new if clipped else t + h
                    if math.hypot(*y_new) > BLOWUP_NORM:
                        raise IntegrationError("solution blow-up", t_next, y_new)
                    self._t.append(t_next)
                    self._y.append(y_new)
                    self._f.append(f_new)
                    self._q.append(q)
                    fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    # a step shortened to land on t_new keeps the old proposal
                    h_prop = max(h_prop, h * fac) if clipped else h * fac
                    t, y, f0 = t_next, y_new, f_new
                else:
                    fac = 0.2 if not math.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
                    h_prop = h * fac
                    if h_prop < h_min:
                        msg = ("step size underflow" if math.isfinite(err)
                               else "field domain error / non-finite state")
                        raise IntegrationError(msg, t, y)
        finally:
            self._h_next = h_prop
            self._arrays = None
        return self

    def ensure(self, t: float) -> "Trajectory":
        if t > self.t_end:
            self.extend(t)
        return self

    # -- I/O -----------------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "fx", "fy"])
            for t, (x, y), (fx, fy) in zip(self._t, self._y, self._f):
                w.writerow([f"{v:.17g}" for v in (t, x, y, fx, fy)])

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "x0": [self.x0.x, self.x0.y],
            "t": list(self._t),
            "y": [list(v) for v in self._y],
            "f": [list(v) for v in self._f],
            "q": [list(v) for v in self._q],
            "h_next": self._h_next,
        }

    @classmethod
    def from_dict(cls, field: Field, d: dict) -> "Trajectory":
        traj = cls(field, d["x0"], d["tol"])
        n = len(d["t"])
        if not (len(d["y"]) == len(d["f"]) == n and len(d["q"]) == n - 1):
            raise ValueError("inconsistent trajectory arrays")
        traj._t = [float(v) for v in d["t"]]
        traj._y = [(float(a), float(b)) for a, b in d["y"]]
        traj._f = [(float(a), float(b)) for a, b in d["f"]]
        traj._q = [tuple(float(v) for v in row) for row in d["q"]]
        if any(len(row) != 8 for row in traj._q):
            raise ValueError("dense coefficient rows must have 8 entries")
        traj._h_next = d.get("h_next")
        return traj


def integrate(f: Field, x0: PointLike, t_end: float, tol: float = 1e-10) -> Trajectory:
    traj = Trajectory(f, x0, tol)
    if t_end > 0:
        traj.extend(t_end)
    return traj


def extend(traj: Trajectory, t_new: float) -> Trajectory:
    return traj.extend(t_new)


# -- sampling and events -----------------------------------------------------

def sample_grid(traj: Trajectory, ta: float, tb: float, length_scale: float) -> np.ndarray:
    """Times covering [ta, tb]: at least 8 per step, and fine enough that the
    trajectory moves no more than about ``length_scale / 4`` between samples."""
    T, _, F, H, _ = traj.arrays()
    if tb <= ta:
        return np.array([ta])
    if len(T) == 1:
        return np.linspace(ta, tb, MIN_SUBSAMPLES + 1)
    i0 = max(int(np.searchsorted(T, ta, side="right")) - 1, 0)
    i1 = min(int(np.searchsorted(T, tb, side="left")), len(T) - 1)
    ks = np.arange(i0, max(i1, i0 + 1))
    speed = np.maximum(np.hypot(*F[ks].T), np.hypot(*F[ks + 1].T))
    n = np.ceil(4.0 * H[ks] * speed / length_scale)
    n = np.clip(np.nan_to_num(n, nan=MIN_SUBSAMPLES), MIN_SUBSAMPLES, MAX_SUBSAMPLES).astype(int)
    rep = np.repeat(ks, n)
    starts = np.repeat(np.cumsum(n) - n, n)
    j = np.arange(rep.size) - starts
    ts = T[rep] + H[rep] * j / n[np.repeat(np.arange(ks.size), n)]
    ts = ts[(ts > ta) & (ts < tb)]
    return np.concatenate(([ta], ts, [tb]))


def _xtol(t: float) -> float:
    return ROOT_RTOL * max(1.0, abs(t))


def graze_tolerance(traj: Trajectory, c: Circle) -> float:
    return 100.0 * traj.tol * (1.0 + c.center.norm() + c.radius)


@dataclass
class CircleEvents:
    crossings: list[tuple[float, int]] = dc_field(default_factory=list)  # (t, -1 enter / +1 exit)
    grazes: list[float] = dc_field(default_factory=list)


def _radial_rate(traj: Trajectory, c: Circle, t: float) -> float:
    x, y = traj.state(t)
    vx, vy = traj.velocity(t)
    return (x - c.center.x) * vx + (y - c.center.y) * vy


def circle_events(traj: Trajectory, c: Circle, ta: float, tb: float) -> CircleEvents:
    """All crossings of the circle and grazing contacts on [ta, tb]."""
    cx, cy, r = c.center.x, c.center.y, c.radius

    def g(t: float) -> float:
        x, y = traj.state(t)
        return math.hypot(x - cx, y - cy) - r

    gtol = graze_tolerance(traj, c)
    ts = sample_grid(traj, ta, tb, r)
    X = traj.sample(ts)
    gs = np.hypot(X[:, 0] - cx, X[:, 1] - cy) - r
    ev = CircleEvents()
    crossings: list[tuple[float, int]] = []

    def root(a: float, b: float) -> float:
        return brentq(g, a, b, xtol=_xtol(b), rtol=4 * np.finfo(float).eps)

    for k in np.flatnonzero(gs[:-1] * gs[1:] < 0):
        crossings.append((root(ts[k], ts[k + 1]), -1 if gs[k] > 0 else 1))
    for k in np.flatnonzero(gs == 0):
        if 0 < k < len(gs) - 1 and gs[k - 1] * gs[k + 1] < 0:
            crossings.append((float(ts[k]), -1 if gs[k - 1] > 0 else 1))
        else:
            ev.grazes.append(float(ts[k]))
    # endpoints sitting on the circle
    for k in (0, len(gs) - 1):
        if gs[k] != 0 and abs(gs[k]) <= gtol:
            ev.grazes.append(float(ts[k]))

    # sampled extrema that approach the circle may hide a pair of crossings
    inner = np.arange(1, len(gs) - 1)
    gm, g0, gp = gs[inner - 1], gs[inner], gs[inner + 1]
    cand = inner[((g0 > 0) & (g0 <= gm) & (g0 <= gp)) | ((g0 < 0) & (g0 >= gm) & (g0 >= gp))]
    for k in cand:
        a, b = float(ts[k - 1]), float(ts[k + 1])
        ra, rb = _radial_rate(traj, c, a), _radial_rate(traj, c, b)
        if ra * rb >= 0:
            continue
        tstar = brentq(lambda t: _radial_rate(traj, c, t), a, b, xtol=_xtol(b))
        gstar = g(tstar)
        if abs(gstar) <= gtol:
            ev.grazes.append(tstar)
        elif (gstar > 0) != (gs[k] > 0):
            crossings.append((root(a, tstar), -1 if gs[k] > 0 else 1))
            crossings.append((root(tstar, b), 1 if gs[k] > 0 else -1))

    crossings.sort()
    # an enter/exit pair whose extremum barely leaves the circle is a graze
    kept: list[tuple[float, int]] = []
    i = 0
    while i < len(crossings):
        if i + 1 < len(crossings):
            (t1, d1), (t2, d2) = crossings[i], crossings[i + 1]
            r1, r2 = _radial_rate(traj, c, t1), _radial_rate(traj, c, t2)
            if d1 != d2 and r1 * r2 < 0:
                tm = brentq(lambda t: _radial_rate(traj, c, t), t1, t2, xtol=_xtol(t2))
                if abs(g(tm)) <= gtol:
                    ev.grazes.append(tm)
                    i += 2
                    continue
        kept.append(crossings[i])
        i += 1
    ev.crossings = kept
    ev.grazes.sort()
    return ev


def first_circle_hit(traj: Trajectory, c: Circle, t_after: float,
                     t_max: float = DEFAULT_T_MAX) -> Optional[float]:
    """Smallest t > t_after where the trajectory meets the circle, or None.

    The trajectory is extended on demand up to ``t_max``.
    """
    traj.ensure(t_after)
    x, y = traj.state(t_after)
    g0 = math.hypot(x - c.center.x, y - c.center.y) - c.radius
    if abs(g0) <= ROOT_RTOL * max(1.0, c.radius):
        raise EventPreconditionError("trajectory starts on the circle")
    lo = t_after
    span = 4.0
    while lo < t_max:
        hi = min(lo + span, t_max)
        try:
            traj.ensure(hi)
        except IntegrationError:
            if traj.t_end <= lo:
                raise
            hi = traj.t_end
            ev = circle_events(traj, c, lo, hi)
            times = [t for t, _ in ev.crossings] + ev.grazes
            times = [t for t in times if t > t_after]
            if times:
                return min(times)
            raise
        ev = circle_events(traj, c, lo, hi)
        times = [t for t, _ in ev.crossings] + ev.grazes
        times = [t for t in times if t > t_after]
        if times:
            return min(times)
        lo = hi
        span = min(2 * span, 256.0)
    return None


@dataclass
class ResidenceIntervals:
    window: Circle
    intervals: list[tuple[float, float]]
    truncated: list[tuple[bool, bool]]
    crossings: list[tuple[float, int]]
    grazes: list[float]
    t_lo: float = 0.0
    t_hi: float = 0.0

    @property
    def grazing(self) -> bool:
        return bool(self.grazes)

    @property
    def crossing_count(self) -> int:
        return len(self.crossings)

    def measure(self) -> float:
        return sum(b - a for a, b in self.intervals)


def residence(traj: Trajectory, c: Circle, t_hi: float, t_lo: float = 0.0) -> ResidenceIntervals:
    """Maximal time intervals in [t_lo, t_hi] spent inside the open disc."""
    if t_hi > traj.t_end:
        raise ValueError(f"t_hi={t_hi!r} beyond t_end={traj.t_end!r}")
    ev = circle_events(traj, c, t_lo, t_hi)
    x, y = traj.state(t_lo)
    inside = math.hypot(x - c.center.x, y - c.center.y) < c.radius
    intervals, truncated = [], []
    start, start_trunc = (t_lo, True) if inside else (None, False)
    for t, d in ev.crossings:
        if d < 0:
            start, start_trunc = t, False
        elif start is not None:
            intervals.append((start, t))
            truncated.append((start_trunc, False))
            start = None
    if start is not None:
        intervals.append((start, t_hi))
        truncated.append((start_trunc, True))
    return ResidenceIntervals(c, intervals, truncated, ev.crossings, ev.grazes, t_lo, t_hi)


def distance_extremum(traj: Trajectory, p: PointLike, ta: float, tb: float,
                      length_scale: float, largest: bool = False) -> tuple[float, float]:
    """(t, distance) of the closest (or farthest) point to p on x([ta, tb]).

    Sampled on the dense grid, then polished where the radial rate
    (x - p) . x' changes sign.
    """
    pv = as_vec(p)
    ts = sample_grid(traj, ta, tb, length_scale)
    X = traj.sample(ts)
    d = np.hypot(X[:, 0] - pv.x, X[:, 1] - pv.y)
    k = int(np.argmax(d) if largest else np.argmin(d))
    best_t, best_d = float(ts[k]), float(d[k])
    circ = Circle(pv, 1.0)
    lo, hi = float(ts[max(k - 1, 0)]), float(ts[min(k + 1, len(ts) - 1)])
    for a, b in ((lo, best_t), (best_t, hi)):
        if b <= a:
            continue
        ra, rb = _radial_rate(traj, circ, a), _radial_rate(traj, circ, b)
        if ra * rb < 0:
            t = brentq(lambda s: _radial_rate(traj, circ, s), a, b, xtol=_xtol(b))
            x, y = traj.state(t)
            dt = math.hypot(x - pv.x, y - pv.y)
            if (dt > best_d) if largest else (dt < best_d):
                best_t, best_d = t, dt
    return best_t, best_d
