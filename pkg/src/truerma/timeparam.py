"""Time-optimal parameterization of joint paths under velocity and
acceleration limits.

The path ``q(s)`` is a joint-space :class:`~truerma.blending.BlendedPath`
(linear segments with circular blends) built from dense IK output. Timing is
computed in the phase plane ``(s, sdot)`` using ``x = sdot**2`` as the state:
with ``sddot`` constant on an interval, ``x`` is linear in ``s`` and

    qdot  = q'(s) sdot
    qddot = q'(s) sddot + q''(s) x

The grid places a knot at every segment junction so the one-sided
derivatives of each segment are used on its own intervals. For every
interval the acceleration limits are imposed at both ends, which keeps the
continuous acceleration within limits up to a second-order term.

A backward pass computes ``K[i]``, the largest ``x`` at knot ``i`` from which
the path can still be brought to rest at ``s = L``. A forward pass then
accelerates at the maximum rate while staying under ``K``; where the
maximum-acceleration curve runs into ``K`` the switching point inside the
interval is located exactly and the profile follows the deceleration
boundary. The result is the pointwise-maximal feasible profile on the grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .blending import ARC, BlendedPath

DEFAULT_RESOLUTION = 2000
DEFAULT_DT = 1.0 / 240.0
DEFAULT_JOINT_DEVIATION = 0.01
ARC_STEP = 0.01
BOUND_STEP = 0.004
MAX_SPLIT = 64


class InfeasibleProfileError(ValueError):
    """No feasible timing exists at arc length ``s``."""

    def __init__(self, message, s: float = math.nan):
        super().__init__(message)
        self.s = s


@dataclass(frozen=True, eq=False)
class Limits:
    """Per-joint velocity (rad/s) and acceleration (rad/s^2) bounds."""

    v_max: np.ndarray
    a_max: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v_max, dtype=float)).copy()
        a = np.atleast_1d(np.asarray(self.a_max, dtype=float)).copy()
        if v.shape != a.shape or v.ndim != 1:
            raise ValueError("v_max and a_max must be matching 1-d sequences")
        if np.any(v <= 0) or np.any(a <= 0) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(a)):
            raise ValueError("limits must be finite and strictly positive")
        object.__setattr__(self, "v_max", v)
        object.__setattr__(self, "a_max", a)

    @property
    def n_joints(self) -> int:
        return self.v_max.size

    def scaled(self, k: float) -> "Limits":
        return Limits(self.v_max * k, self.a_max * k)


# --------------------------------------------------------------------------
# joint path

JointPath = BlendedPath


class StationaryPath(BlendedPath):
    """Zero-length path holding a single configuration."""

    def __init__(self, point):
        pt = np.asarray(point, dtype=float).reshape(1, -1)
        self.points = pt
        self.max_deviation = 0.0
        dim = pt.shape[1]
        self.kind = np.zeros(0, dtype=np.int64)
        self.origin = np.zeros((0, dim))
        self.e1 = np.zeros((0, dim))
        self.e2 = np.zeros((0, dim))
        self.radius = np.zeros(0)
        self.seg_length = np.zeros(0)
        self.s_start = np.zeros(0)
        self.length = 0.0
        self.cumulative_length = np.zeros(1)
        self.waypoint_s = np.zeros(1)

    def evaluate(self, s, derivative: int = 0):
        m = np.atleast_1d(np.asarray(s, dtype=float)).size
        if derivative == 0:
            return np.tile(self.points[0], (m, 1))
        return np.zeros((m, self.dim))


def build_joint_path(joint_waypoints, max_deviation: float = DEFAULT_JOINT_DEVIATION) -> BlendedPath:
    """Linear segments through the joint waypoints with circular blends of
    deviation at most ``max_deviation`` at interior points.

    Consecutive duplicates are dropped (with a warning).
    """
    q = np.asarray(joint_waypoints, dtype=float)
    if q.ndim != 2 or q.shape[0] < 2:
        raise ValueError("need at least two joint waypoints")
    keep = np.concatenate([[True], np.linalg.norm(np.diff(q, axis=0), axis=1) > 1e-12])
    if not np.all(keep):
        warnings.warn(f"dropped {int(np.sum(~keep))} duplicate joint waypoint(s)", RuntimeWarning, stacklevel=2)
        q = q[keep]
    if q.shape[0] < 2:
        raise ValueError("fewer than two distinct joint waypoints")
    return BlendedPath(q, max_deviation)


def _local_derivatives(path: BlendedPath, seg, local):
    """First and second derivative on segment ``seg`` at local arc length;
    unlike ``path.evaluate`` this never crosses into the next segment."""
    seg = np.asarray(seg, dtype=np.int64)
    local = np.asarray(local, dtype=float)
    return _derivatives_kernel(path.kind, path.e1, path.e2, path.radius, seg, local)


@numba.njit(cache=True)
def _derivatives_kernel(kind, e1, e2, radius, seg, local):
    m = seg.shape[0]
    dim = e1.shape[1]
    d1 = np.empty((m, dim))
    d2 = np.empty((m, dim))
    for i in range(m):
        k = seg[i]
        if kind[k] == 1:
            r = radius[k]
            phi = local[i] / r
            c = np.cos(phi)
            sn = np.sin(phi)
            for j in range(dim):
                d1[i, j] = c * e1[k, j] + sn * e2[k, j]
                d2[i, j] = (-sn * e1[k, j] + c * e2[k, j]) / r
        else:
            for j in range(dim):
                d1[i, j] = e1[k, j]
                d2[i, j] = 0.0
    return d1, d2


def velocity_limit(path: BlendedPath, limits: Limits, s) -> float | np.ndarray:
    """``min_i v_max_i / |q'_i(s)|``; ``inf`` where every ``q'_i`` vanishes."""
    dq = np.abs(path.evaluate(s, 1))
    with np.errstate(divide="ignore", over="ignore"):
        ratio = np.where(dq > 0, limits.v_max / np.where(dq > 0, dq, 1.0), np.inf)
    out = ratio.min(axis=1)
    return float(out[0]) if np.ndim(s) == 0 else out


def accel_bounds_from(dq, ddq, a_max, sdot: float) -> tuple[float, float]:
    """Interval of feasible ``sddot`` for given path derivatives; empty
    (lower > upper) when the state is infeasible."""
    if sdot < 0:
        raise ValueError("sdot must be non-negative")
    x = sdot * sdot
    lo, hi = -math.inf, math.inf
    for c, d, a in zip(np.atleast_1d(dq), np.atleast_1d(ddq), np.atleast_1d(a_max)):
        if c == 0.0:
            if abs(d * x) > a:
                return math.inf, -math.inf
            continue
        b1, b2 = (-a - d * x) / c, (a - d * x) / c
        lo = max(lo, min(b1, b2))
        hi = min(hi, max(b1, b2))
    return lo, hi


def accel_bounds(path: BlendedPath, limits: Limits, s: float, sdot: float) -> tuple[float, float]:
    """Feasible ``sddot`` interval at ``(s, sdot)`` from the acceleration limits."""
    return accel_bounds_from(path.evaluate(s, 1)[0], path.evaluate(s, 2)[0], limits.a_max, sdot)


# --------------------------------------------------------------------------
# phase-plane kernels

_TINY = 1e-12
_HUGE = 1e30


@numba.njit(cache=True)
def _interval_lines(h, ca, da, cb, db, amax, lo_a, lo_b, up_a, up_b):
    """Fill bounds on x_b as affine functions of x_a. Returns (n_lo, n_up, cap_a)."""
    nj = amax.shape[0]
    n_lo = 0
    n_up = 0
    cap = np.inf
    for j in range(nj):
        a = amax[j]
        c = ca[j]
        d = da[j]
        if c > _TINY or c < -_TINY:
            k = 2.0 * h * a / c
            slope = 1.0 - 2.0 * h * d / c
            if c > 0:
                lo_a[n_lo] = -k
                up_a[n_up] = k
            else:
                lo_a[n_lo] = k
                up_a[n_up] = -k
            lo_b[n_lo] = slope
            up_b[n_up] = slope
            n_lo += 1
            n_up += 1
        elif abs(d) > 0.0:
            cap = min(cap, a / abs(d))
        c = cb[j]
        d = db[j]
        e = c / (2.0 * h) + d
        if e > _TINY or e < -_TINY:
            slope = c / (2.0 * h * e)
            if e > 0:
                lo_a[n_lo] = -a / e
                up_a[n_up] = a / e
            else:
                lo_a[n_lo] = a / e
                up_a[n_up] = -a / e
            lo_b[n_lo] = slope
            up_b[n_up] = slope
            n_lo += 1
            n_up += 1
        elif abs(c) > 0.0:
            cap = min(cap, 2.0 * h * a / abs(c))
    return n_lo, n_up, cap


@numba.njit(cache=True)
def _backward(h, ca, da, cb, db, amax, xcap):
    n_int = h.shape[0]
    nj = amax.shape[0]
    K = np.empty(n_int + 1)
    K[n_int] = 0.0
    lo_a = np.empty(2 * nj + 1)
    lo_b = np.empty(2 * nj + 1)
    up_a = np.empty(2 * nj + 1)
    up_b = np.empty(2 * nj + 1)
    for i in range(n_int - 1, -1, -1):
        n_lo, n_up, cap = _interval_lines(h[i], ca[i], da[i], cb[i], db[i], amax, lo_a, lo_b, up_a, up_b)
        # x_b >= 0 and x_b <= K[i+1]
        lo_a[n_lo] = 0.0
        lo_b[n_lo] = 0.0
        up_a[n_up] = K[i + 1]
        up_b[n_up] = 0.0
        x_hi = min(cap, xcap[i])
        x_lo = 0.0
        for p in range(n_lo + 1):
            for q in range(n_up + 1):
                coef = lo_b[p] - up_b[q]
                rhs = up_a[q] - lo_a[p]
                if coef > 1e-15:
                    x_hi = min(x_hi, rhs / coef)
                elif coef < -1e-15:
                    x_lo = max(x_lo, rhs / coef)
                elif rhs < -1e-12 * (1.0 + abs(up_a[q]) + abs(lo_a[p])):
                    return K, i
        if x_hi < x_lo - 1e-12 * (1.0 + abs(x_lo)):
            return K, i
        K[i] = max(x_hi, 0.0)
    return K, -1


@numba.njit(cache=True)
def _forward(s, h, ca, da, cb, db, amax, K, xcap):
    """Inside each interval the profile is the lower envelope of three lines
    in ``x``: maximum acceleration from the current state, the velocity cap,
    and maximum deceleration into ``K[i+1]``. Their crossings become knots, so
    every sub-interval is either on a limit curve or saturating a joint."""
    n_int = h.shape[0]
    nj = amax.shape[0]
    out_s = np.empty(4 * n_int + 1)
    out_x = np.empty(4 * n_int + 1)
    lo_a = np.empty(2 * nj + 1)
    lo_b = np.empty(2 * nj + 1)
    up_a = np.empty(2 * nj + 1)
    up_b = np.empty(2 * nj + 1)
    v0 = np.empty(3)
    v1 = np.empty(3)
    ts = np.empty(5)
    out_s[0] = s[0]
    out_x[0] = 0.0
    m = 1
    xa = 0.0
    for i in range(n_int):
        n_lo, n_up, cap = _interval_lines(h[i], ca[i], da[i], cb[i], db[i], amax, lo_a, lo_b, up_a, up_b)
        upper = np.inf
        for q in range(n_up):
            upper = min(upper, up_a[q] + up_b[q] * xa)
        lower = 0.0
        scale = 1.0
        for p in range(n_lo):
            lower = max(lower, lo_a[p] + lo_b[p] * xa)
            # steep lines near zero-inertia points amplify rounding in xa
            scale = max(scale, abs(lo_a[p]) + abs(lo_b[p] * xa))
        kb = K[i + 1]
        if kb < lower - 1e-9 * scale:
            return out_s[:m], out_x[:m], i
        # largest start value that can still brake into kb over this interval
        big = np.inf
        for p in range(n_lo):
            if lo_b[p] > 1e-15:
                big = min(big, (kb - lo_a[p]) / lo_b[p])
        for q in range(n_up):
            if up_b[q] < -1e-15:
                big = min(big, (kb - up_a[q]) / up_b[q])
        if not big < np.inf:
            big = max(xa, kb)
        big = max(big, xa)
        # lines over t in [0, 1]: value at 0 and at 1
        a0, a1 = xa, min(upper, _HUGE)
        c0, c1 = min(max(xcap[i], xa), _HUGE), min(xcap[i + 1], _HUGE)
        d0, d1 = min(big, _HUGE), kb
        # crossings of the three lines, then the lowest line on each piece
        v0[0], v0[1], v0[2] = a0, c0, d0
        v1[0], v1[1], v1[2] = a1, c1, d1
        ts[0] = 0.0
        nt = 1
        for p in range(3):
            for q in range(p + 1, 3):
                den = (v1[p] - v0[p]) - (v1[q] - v0[q])
                if den != 0.0:
                    t = (v0[q] - v0[p]) / den
                    if 1e-9 < t < 1.0 - 1e-9:
                        # insertion keeps ts sorted
                        k = nt
                        while k > 0 and ts[k - 1] > t:
                            ts[k] = ts[k - 1]
                            k -= 1
                        ts[k] = t
                        nt += 1
        ts[nt] = 1.0
        nt += 1
        prev_line = -1
        for k in range(nt - 1):
            tm = 0.5 * (ts[k] + ts[k + 1])
            best = 0
            for p in range(1, 3):
                if v0[p] + (v1[p] - v0[p]) * tm < v0[best] + (v1[best] - v0[best]) * tm:
                    best = p
            if prev_line >= 0 and best != prev_line:
                t = ts[k]
                val = min(a0 + (a1 - a0) * t, c0 + (c1 - c0) * t, d0 + (d1 - d0) * t)
                out_s[m] = s[i] + h[i] * t
                out_x[m] = max(val, 0.0)
                m += 1
            prev_line = best
        xb = max(min(upper, kb), 0.0)
        out_s[m] = s[i + 1]
        out_x[m] = xb
        m += 1
        xa = xb
    return out_s[:m], out_x[:m], -1


# --------------------------------------------------------------------------
# profile

@dataclass(frozen=True, eq=False)
class PhaseProfile:
    """Piecewise constant-``sddot`` timing law.

    Attributes:
        s: knot arc lengths (monotone).
        sdot: path speed at the knots (zero at both ends).
        sddot: constant path acceleration on each knot interval.
        t: time at each knot.
    """

    s: np.ndarray
    sdot: np.ndarray
    sddot: np.ndarray
    t: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.t[-1]) if self.t.size else 0.0

    @property
    def length(self) -> float:
        return float(self.s[-1]) if self.s.size else 0.0

    @property
    def switching_points(self) -> np.ndarray:
        """Arc lengths where the profile changes from speeding up to slowing down."""
        acc = self.sddot
        idx = np.flatnonzero((acc[:-1] > 0) & (acc[1:] < 0)) + 1
        return self.s[idx]


def _grid(path: BlendedPath, ds: float):
    counts = np.maximum(1, np.ceil(path.seg_length / ds - 1e-9).astype(np.int64))
    # small blends turn quickly: bound the swept angle per interval too
    arcs = path.kind == ARC
    if np.any(arcs):
        sweep = path.seg_length[arcs] / path.radius[arcs]
        counts[arcs] = np.maximum(counts[arcs], np.ceil(sweep / ARC_STEP - 1e-9).astype(np.int64))
    seg = np.repeat(np.arange(path.n_segments), counts)
    step = np.repeat(path.seg_length / counts, counts)
    local_a = _running_index(counts) * step
    s = np.append(path.s_start[seg] + local_a, path.length)
    return s, seg, local_a, step


def _running_index(counts):
    """``[0..c0-1, 0..c1-1, ...]`` for the given counts."""
    total = int(counts.sum())
    return np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)


def _subdivide(path: BlendedPath, seg, local_a, h, parts):
    seg = np.repeat(seg, parts)
    step = np.repeat(h / parts, parts)
    offset = _running_index(parts) * step
    local_a = np.repeat(local_a, parts) + offset
    s = np.append(path.s_start[seg] + local_a, path.length)
    return s, seg, local_a, step


def _sddot_bounds(c, d, x, amax):
    """Row-wise feasible ``sddot`` interval; joints with ``c == 0`` ignored."""
    moving = np.abs(c) > _TINY
    safe = np.where(moving, c, 1.0)
    b1 = (-amax - d * x[:, None]) / safe
    b2 = (amax - d * x[:, None]) / safe
    lo = np.where(moving, np.minimum(b1, b2), -np.inf).max(axis=1)
    hi = np.where(moving, np.maximum(b1, b2), np.inf).min(axis=1)
    return lo, hi


def _refinement(path, limits, s, seg, local_a, h, ks, kx):
    """Number of parts for each interval so that the ``sddot`` bounds along
    the first-pass profile change by at most ``BOUND_STEP`` (relative) across
    any interval; a constant ``sddot`` then stays close to the bound.

    The midpoint is checked as well: where the binding joint switches, the
    bound peaks inside the interval while both ends agree."""
    x = np.interp(s, ks, kx)
    xm = np.interp(s[:-1] + 0.5 * h, ks, kx)
    ca, da = _local_derivatives(path, seg, local_a)
    cm, dm = _local_derivatives(path, seg, local_a + 0.5 * h)
    cb, db = _local_derivatives(path, seg, local_a + h)
    lo_a, hi_a = _sddot_bounds(ca, da, x[:-1], limits.a_max)
    lo_m, hi_m = _sddot_bounds(cm, dm, xm, limits.a_max)
    lo_b, hi_b = _sddot_bounds(cb, db, x[1:], limits.a_max)
    with np.errstate(invalid="ignore"):
        scale = np.maximum.reduce([np.abs(lo_a), np.abs(hi_a), np.abs(lo_m), np.abs(hi_m),
                                   np.abs(lo_b), np.abs(hi_b)])
        change = np.maximum.reduce([np.abs(lo_a - lo_b), np.abs(hi_a - hi_b),
                                    np.abs(lo_m - lo_a), np.abs(hi_m - hi_a),
                                    np.abs(lo_m - lo_b), np.abs(hi_m - hi_b)]) / scale
    change = np.where(np.isfinite(change), change, 0.0)
    return np.clip(np.ceil(change / BOUND_STEP), 1, MAX_SPLIT).astype(np.int64)


def _solve(path, limits, s, seg, local_a, h):
    ca, da = _local_derivatives(path, seg, local_a)
    cb, db = _local_derivatives(path, seg, local_a + h)
    v = limits.v_max
    with np.errstate(divide="ignore", over="ignore"):
        def vcap(dq):
            dq = np.abs(dq)
            return np.where(dq > 0, v / np.where(dq > 0, dq, 1.0), np.inf).min(axis=1)
        va, vb = vcap(ca), vcap(cb)
    xcap = np.full(s.size, np.inf)
    # each knot takes the one-sided caps of both adjacent intervals; sampling
    # clamps to the exact limit curve in between
    np.minimum.at(xcap, np.arange(s.size - 1), va ** 2)
    np.minimum.at(xcap, np.arange(1, s.size), vb ** 2)

    amax = limits.a_max
    K, bad = _backward(h, ca, da, cb, db, amax, xcap)
    if bad >= 0:
        raise InfeasibleProfileError(f"no feasible path velocity near s={s[bad]:.6g}", s=float(s[bad]))
    ks, kx, bad = _forward(s, h, ca, da, cb, db, amax, K, xcap)
    if bad >= 0:
        raise InfeasibleProfileError(f"forward integration blocked near s={s[bad]:.6g}", s=float(s[bad]))
    return ks, kx


def parameterize(path: BlendedPath, limits: Limits, ds: float | None = None) -> PhaseProfile:
    """Time-optimal timing law for ``path`` under ``limits``.

    Args:
        path: joint path (unit-speed in joint space).
        limits: per-joint bounds; ``limits.n_joints`` must equal ``path.dim``.
        ds: target grid step in path arc length; default ``L / 2000``.

    Raises:
        InfeasibleProfileError: if no feasible timing exists.
    """
    if limits.n_joints != path.dim:
        raise ValueError(f"limits for {limits.n_joints} joints, path has {path.dim}")
    L = path.length
    if L <= 0.0:
        z = np.zeros(1)
        return PhaseProfile(s=z, sdot=z.copy(), sddot=np.zeros(0), t=z.copy())
    ds = L / DEFAULT_RESOLUTION if ds is None else float(ds)
    if ds <= 0:
        raise ValueError("ds must be positive")
    s, seg, local_a, h = _grid(path, ds)
    ks, kx = _solve(path, limits, s, seg, local_a, h)
    split = _refinement(path, limits, s, seg, local_a, h, ks, kx)
    if np.any(split > 1):
        s, seg, local_a, h = _subdivide(path, seg, local_a, h, split)
        ks, kx = _solve(path, limits, s, seg, local_a, h)

    sdot = np.sqrt(kx)
    dsk = np.diff(ks)
    vsum = sdot[:-1] + sdot[1:]
    if np.any(vsum <= 0.0):
        k = int(np.argmax(vsum <= 0.0))
        raise InfeasibleProfileError(f"profile stalls at s={ks[k]:.6g}", s=float(ks[k]))
    dt = 2.0 * dsk / vsum
    sddot = np.diff(kx) / (2.0 * dsk)
    t = np.concatenate([[0.0], np.cumsum(dt)])
    return PhaseProfile(s=ks, sdot=sdot, sddot=sddot, t=t)


# --------------------------------------------------------------------------
# sampling

@dataclass(frozen=True, eq=False)
class TimedTrajectory:
    """Joint trajectory on a uniform clock (last step clamped to the end).

    ``accelerations`` are the exact accelerations of the timing law at the
    sample instants, not finite differences.
    """

    dt: float
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    path_s: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size

    @property
    def n_joints(self) -> int:
        return self.positions.shape[1]

    def finite_difference_acceleration(self) -> np.ndarray:
        return _second_difference(self.times, self.positions)

    def jerk(self) -> np.ndarray:
        """Per-step finite-difference jerk (diagnostic only)."""
        acc = self.finite_difference_acceleration()
        if acc.shape[0] < 2:
            return np.zeros_like(acc)
        return np.gradient(acc, self.times, axis=0)

    def max_jerk(self) -> np.ndarray:
        j = self.jerk()
        return np.abs(j).max(axis=0) if j.size else np.zeros(self.n_joints)


def _second_difference(t, q):
    """Second divided difference on a possibly non-uniform grid, with the
    trajectory held at rest before the first and after the last sample."""
    n = t.size
    if n < 2:
        return np.zeros_like(q)
    h = np.diff(t)[:, None]
    # ghost samples one step outside each end, equal to the end sample
    tt = np.concatenate([[t[0] - h[0, 0]], t, [t[-1] + h[-1, 0]]])
    qq = np.vstack([q[:1], q, q[-1:]])
    h1 = np.diff(tt)[:-1][:, None]
    h2 = np.diff(tt)[1:][:, None]
    return 2.0 * ((qq[2:] - qq[1:-1]) / h2 - (qq[1:-1] - qq[:-2]) / h1) / (h1 + h2)


def sample_times(duration: float, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration <= 0:
        return np.zeros(1)
    n = math.ceil(duration / dt - 1e-9)
    return np.append(dt * np.arange(n), duration)


def sample_trajectory(profile: PhaseProfile, path: BlendedPath, dt: float = DEFAULT_DT,
                      limits: Limits | None = None) -> TimedTrajectory:
    """Evaluate the timing law on the clock ``0, dt, 2 dt, ..., duration``.

    When ``limits`` is given the sampled path speed is additionally held
    under the exact velocity limit curve.
    """
    times = sample_times(profile.duration, dt)
    if profile.duration <= 0.0:
        q = path.evaluate(np.zeros(1))
        z = np.zeros_like(q)
        return TimedTrajectory(dt, times, q, z, z.copy(), np.zeros(1))
    k = np.clip(np.searchsorted(profile.t, times, side="right") - 1, 0, profile.sddot.size - 1)
    tau = times - profile.t[k]
    u = profile.sddot[k]
    s = profile.s[k] + profile.sdot[k] * tau + 0.5 * u * tau * tau
    s = np.clip(np.minimum(s, profile.s[k + 1]), 0.0, profile.length)
    sdot = np.maximum(profile.sdot[k] + u * tau, 0.0)
    s[-1] = profile.length
    sdot[0] = 0.0
    sdot[-1] = 0.0
    if limits is not None:
        sdot = np.minimum(sdot, velocity_limit(path, limits, s))
    q = path.evaluate(s)
    d1 = path.evaluate(s, 1)
    d2 = path.evaluate(s, 2)
    qd = d1 * sdot[:, None]
    qdd = d1 * u[:, None] + d2 * (sdot * sdot)[:, None]
    q[-1] = path.points[-1]
    q[0] = path.points[0]
    return TimedTrajectory(dt, times, q, qd, qdd, s)


def time_parameterize(joint_waypoints, limits: Limits, dt: float = DEFAULT_DT,
                      max_deviation: float = DEFAULT_JOINT_DEVIATION, resolution: int = DEFAULT_RESOLUTION):
    """Convenience: joint waypoints -> (path, profile, trajectory)."""
    path = build_joint_path(joint_waypoints, max_deviation)
    profile = parameterize(path, limits, path.length / resolution)
    return path, profile, sample_trajectory(profile, path, dt, limits)
