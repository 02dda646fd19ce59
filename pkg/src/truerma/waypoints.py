"""Cartesian waypoint generators.

Three ways of turning a normalized action vector into a waypoint list between
a start and an end pose:

* ``truerma`` -- recursive orthogonal midpoint adaptations of the straight
  line start -> end (2^N + 1 poses after N levels),
* ``trueabs`` -- every action element is an absolute workspace coordinate,
* ``truerel`` -- every action element is a step relative to the previous
  waypoint.

Poses carry a position (2 or 3 components) and a full roll/pitch/yaw triple.
Only the orientation axes whose workspace range is non-degenerate are
adapted; the others stay at the workspace's fixed value.

Action layout per waypoint is position parameters first, then one parameter
per active orientation axis (in roll, pitch, yaw order). TrueRMA consumes
waypoints in breadth-first order of the recursion tree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

EPS_LEN = 1e-9
MODES = ("truerma", "trueabs", "truerel")


class DegenerateSegmentWarning(RuntimeWarning):
    """A midpoint adaptation was requested on a (near) zero-length segment."""


@dataclass(frozen=True, eq=False)
class CartesianPose:
    """End-effector pose: position in meters, (roll, pitch, yaw) in radians."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).copy()
        ori = np.asarray(self.orientation, dtype=float).copy()
        if pos.ndim != 1 or pos.size not in (2, 3):
            raise ValueError(f"position must have 2 or 3 components, got shape {pos.shape}")
        if ori.shape != (3,):
            raise ValueError(f"orientation must be (roll, pitch, yaw), got shape {ori.shape}")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(ori))):
            raise ValueError("pose components must be finite")
        pos.flags.writeable = False
        ori.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", ori)

    @property
    def dim(self) -> int:
        return self.position.size

    def __eq__(self, other):
        if not isinstance(other, CartesianPose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.orientation, other.orientation
        )

    def __hash__(self):
        return hash((self.position.tobytes(), self.orientation.tobytes()))

    def __repr__(self):
        pos = ", ".join(f"{v:.4f}" for v in self.position)
        ori = ", ".join(f"{v:.4f}" for v in self.orientation)
        return f"CartesianPose(position=({pos}), orientation=({ori}))"


@dataclass(frozen=True, eq=False)
class Workspace:
    """Axis-aligned box for positions plus a range per orientation axis.

    An orientation axis is *active* when its range has positive width; an
    axis with ``angle_lower == angle_upper`` is held fixed at that value.
    """

    lower: np.ndarray
    upper: np.ndarray
    angle_lower: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angle_upper: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).copy()
        hi = np.asarray(self.upper, dtype=float).copy()
        alo = np.asarray(self.angle_lower, dtype=float).copy()
        ahi = np.asarray(self.angle_upper, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size not in (2, 3):
            raise ValueError("lower/upper must be matching 2- or 3-vectors")
        if not np.all(lo < hi):
            raise ValueError("workspace requires lower < upper componentwise")
        if alo.shape != (3,) or ahi.shape != (3,):
            raise ValueError("angle ranges must be (roll, pitch, yaw) triples")
        if np.any(alo > ahi):
            raise ValueError("angle_lower must not exceed angle_upper")
        if np.any(np.abs(np.concatenate([alo, ahi])) >= math.pi / 2):
            raise ValueError("angle ranges must stay inside (-pi/2, pi/2)")
        for arr in (lo, hi, alo, ahi):
            arr.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "angle_lower", alo)
        object.__setattr__(self, "angle_upper", ahi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.angle_upper > self.angle_lower))

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, point, tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def contains_pose(self, pose: CartesianPose, tol: float = 1e-12) -> bool:
        o = pose.orientation
        return self.contains(pose.position, tol) and bool(
            np.all(o >= self.angle_lower - tol) and np.all(o <= self.angle_upper + tol)
        )

    def clamp(self, point) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)

    def clamp_angles(self, angles) -> np.ndarray:
        return np.clip(np.asarray(angles, dtype=float), self.angle_lower, self.angle_upper)


@dataclass(frozen=True)
class GeneratorConfig:
    """Waypoint generator settings.

    Attributes:
        mode: one of ``truerma``, ``trueabs``, ``truerel``.
        recursion_depth: TrueRMA recursion levels N; also fixes the number of
            intermediate waypoints (2^N - 1) for the baselines.
        k_angle: orientation adaptation scale in radians per meter of segment.
        fixed_reference_point: point outside the workspace used to define the
            zero-angle direction of 3D adaptations.
        rel_max_step: TrueRel step per unit action, per position coordinate
            followed by one entry per active orientation axis. ``None`` means
            a quarter of the workspace extent.
    """

    mode: str = "truerma"
    recursion_depth: int = 3
    k_angle: float = 0.8
    fixed_reference_point: tuple[float, ...] | None = None
    rel_max_step: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown generator mode {self.mode!r}; expected one of {MODES}")
        if int(self.recursion_depth) < 1:
            raise ValueError("recursion_depth must be a positive integer")

    @property
    def waypoint_count(self) -> int:
        return 2 ** int(self.recursion_depth) - 1


def params_per_waypoint(mode: str, ws: Workspace) -> int:
    """Action elements consumed per intermediate waypoint."""
    n_ang = len(ws.active_axes)
    if mode == "truerma":
        return (1 if ws.dim == 2 else 2) + n_ang
    return ws.dim + n_ang


def action_size(cfg: GeneratorConfig, ws: Workspace) -> int:
    return cfg.waypoint_count * params_per_waypoint(cfg.mode, ws)


def _clamp_action(action, expected: int) -> np.ndarray:
    a = np.asarray(action, dtype=float).ravel()
    if a.size != expected:
        raise ValueError(f"action length {a.size} does not match expected {expected}")
    if not np.all(np.isfinite(a)):
        raise ValueError("action contains non-finite values")
    return np.clip(a, -1.0, 1.0)


def _ray_box_fraction(origin: np.ndarray, vec: np.ndarray, ws: Workspace) -> float:
    """Largest t in [0, 1] with origin + t * vec inside the box."""
    t = 1.0
    with np.errstate(over="ignore"):  # tiny components overflow to inf, which is the right limit
        for k in range(origin.size):
            v = vec[k]
            if v > 0.0:
                t = min(t, (ws.upper[k] - origin[k]) / v)
            elif v < 0.0:
                t = min(t, (ws.lower[k] - origin[k]) / v)
    return max(t, 0.0)


def _shrink_into(mid: np.ndarray, vec: np.ndarray, ws: Workspace | None) -> np.ndarray:
    if ws is None:
        return mid + vec
    t = _ray_box_fraction(mid, vec, ws)
    # clip only removes rounding residue; the ray already ends on the boundary
    return np.clip(mid + t * vec, ws.lower, ws.upper)


def adapt_midpoint_planar(p0, p1, a: float, ws: Workspace | None = None) -> np.ndarray:
    """Displace the midpoint of ``p0 -> p1`` along the left-hand normal.

    The displacement is ``a * |p1 - p0| / 2``; positive ``a`` moves to the
    left of the travel direction. If the adapted point would leave ``ws`` the
    displacement is shortened along its own direction until the point sits on
    the boundary.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    length = math.hypot(d[0], d[1])
    mid = 0.5 * (p0 + p1)
    if length < EPS_LEN:
        warnings.warn("midpoint adaptation on a degenerate segment", DegenerateSegmentWarning, stacklevel=2)
        return mid
    normal = np.array([-d[1], d[0]]) / length
    return _shrink_into(mid, float(a) * 0.5 * length * normal, ws)


def reference_direction(p0, p1, fixed_point) -> np.ndarray:
    """Unit vector from the midpoint of ``p0 -> p1`` toward the fixed point,
    projected into the plane orthogonal to the segment."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    f = np.asarray(fixed_point, dtype=float)
    d = p1 - p0
    length = float(np.linalg.norm(d))
    if length < EPS_LEN:
        raise ValueError("reference direction undefined: degenerate segment")
    u = d / length
    mid = 0.5 * (p0 + p1)
    rel = f - mid
    in_plane = rel - np.dot(rel, u) * u
    norm = float(np.linalg.norm(in_plane))
    if norm <= 1e-12 * max(1.0, float(np.linalg.norm(rel))):
        raise ValueError("reference direction undefined: fixed point lies on the segment axis")
    return in_plane / norm


def adapt_midpoint_3d(p0, p1, a_r: float, a_theta: float, fixed_point, ws: Workspace | None = None) -> np.ndarray:
    """Polar midpoint adaptation in the plane orthogonal to ``p0 -> p1``.

    Radius is ``|a_r| * |p1 - p0| / 2``; the direction is the reference
    direction rotated by ``a_theta * pi`` about the segment axis
    (right-hand rule).
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    length = float(np.linalg.norm(d))
    mid = 0.5 * (p0 + p1)
    if length < EPS_LEN:
        warnings.warn("midpoint adaptation on a degenerate segment", DegenerateSegmentWarning, stacklevel=2)
        return mid
    radius = abs(float(a_r)) * 0.5 * length
    if radius == 0.0:
        return mid
    u = d / length
    ref = reference_direction(p0, p1, fixed_point)
    theta = float(a_theta) * math.pi
    direction = math.cos(theta) * ref + math.sin(theta) * np.cross(u, ref)
    return _shrink_into(mid, radius * direction, ws)


def adapt_orientation(o0: float, o1: float, a: float, seg_length: float, k_angle: float,
                      lo: float = -math.inf, hi: float = math.inf) -> float:
    """Mean of the endpoint angles plus ``a * k_angle * seg_length``, clamped."""
    value = 0.5 * (o0 + o1) + float(a) * k_angle * seg_length
    return min(max(value, lo), hi)


def _default_reference_point(ws: Workspace) -> np.ndarray:
    # below the workspace center, one extent-diagonal away
    center = 0.5 * (ws.lower + ws.upper)
    return center - np.array([0.0, 0.0, float(np.linalg.norm(ws.extent)) + ws.extent[2]])


def _check_endpoints(start: CartesianPose, end: CartesianPose, ws: Workspace):
    if start.dim != ws.dim or end.dim != ws.dim:
        raise ValueError(f"pose dimension does not match workspace dimension {ws.dim}")


def generate_truerma(start: CartesianPose, end: CartesianPose, action, cfg: GeneratorConfig,
                     ws: Workspace) -> list[CartesianPose]:
    """Recursive midpoint adaptation; returns ``2**N + 1`` poses."""
    _check_endpoints(start, end, ws)
    depth = int(cfg.recursion_depth)
    per = params_per_waypoint("truerma", ws)
    a = _clamp_action(action, (2 ** depth - 1) * per)
    axes = ws.active_axes
    n_pos = 1 if ws.dim == 2 else 2
    if ws.dim == 3:
        fixed = (np.asarray(cfg.fixed_reference_point, dtype=float)
                 if cfg.fixed_reference_point is not None else _default_reference_point(ws))
        if ws.contains(fixed, tol=0.0):
            raise ValueError("fixed_reference_point must lie outside the workspace")

    positions = [start.position.copy(), end.position.copy()]
    orientations = [start.orientation.copy(), end.orientation.copy()]
    cursor = 0
    for _ in range(depth):
        new_pos = [positions[0]]
        new_ori = [orientations[0]]
        for i in range(len(positions) - 1):
            p0, p1 = positions[i], positions[i + 1]
            o0, o1 = orientations[i], orientations[i + 1]
            params = a[cursor:cursor + per]
            cursor += per
            if ws.dim == 2:
                m = adapt_midpoint_planar(p0, p1, params[0], ws)
            else:
                m = adapt_midpoint_3d(p0, p1, params[0], params[1], fixed, ws)
            seg_len = float(np.linalg.norm(p1 - p0))
            o = 0.5 * (o0 + o1)
            for j, axis in enumerate(axes):
                o[axis] = adapt_orientation(o0[axis], o1[axis], params[n_pos + j], seg_len, cfg.k_angle,
                                            ws.angle_lower[axis], ws.angle_upper[axis])
            new_pos += [m, p1]
            new_ori += [o, o1]
        positions, orientations = new_pos, new_ori
    return [CartesianPose(p, o) for p, o in zip(positions, orientations)]


def generate_trueabs(start: CartesianPose, end: CartesianPose, action, cfg: GeneratorConfig,
                     ws: Workspace) -> list[CartesianPose]:
    """Each action element is mapped affinely onto its workspace interval."""
    _check_endpoints(start, end, ws)
    axes = ws.active_axes
    per = ws.dim + len(axes)
    a = _clamp_action(action, cfg.waypoint_count * per).reshape(cfg.waypoint_count, per)
    lo = np.concatenate([ws.lower, ws.angle_lower[list(axes)]])
    hi = np.concatenate([ws.upper, ws.angle_upper[list(axes)]])
    coords = lo + 0.5 * (a + 1.0) * (hi - lo)
    poses = [start]
    for row in coords:
        ori = start.orientation.copy()
        ori[list(axes)] = row[ws.dim:]
        poses.append(CartesianPose(row[:ws.dim], ori))
    poses.append(end)
    return poses


def default_rel_step(ws: Workspace) -> np.ndarray:
    axes = list(ws.active_axes)
    return 0.25 * np.concatenate([ws.extent, ws.angle_upper[axes] - ws.angle_lower[axes]])


def generate_truerel(start: CartesianPose, end: CartesianPose, action, cfg: GeneratorConfig,
                     ws: Workspace) -> list[CartesianPose]:
    """Each waypoint is the previous one plus a bounded, clamped step."""
    _check_endpoints(start, end, ws)
    axes = list(ws.active_axes)
    per = ws.dim + len(axes)
    a = _clamp_action(action, cfg.waypoint_count * per).reshape(cfg.waypoint_count, per)
    step = np.asarray(cfg.rel_max_step, dtype=float) if cfg.rel_max_step is not None else default_rel_step(ws)
    if step.shape != (per,):
        raise ValueError(f"rel_max_step must have {per} entries")
    lo = np.concatenate([ws.lower, ws.angle_lower[axes]])
    hi = np.concatenate([ws.upper, ws.angle_upper[axes]])
    current = np.concatenate([start.position, start.orientation[axes]])
    poses = [start]
    for row in a:
        current = np.clip(current + row * step, lo, hi)
        ori = start.orientation.copy()
        ori[axes] = current[ws.dim:]
        poses.append(CartesianPose(current[:ws.dim], ori))
    poses.append(end)
    return poses


_GENERATORS = {
    "truerma": generate_truerma,
    "trueabs": generate_trueabs,
    "truerel": generate_truerel,
}


def generate(start: CartesianPose, end: CartesianPose, action, cfg: GeneratorConfig,
             ws: Workspace) -> list[CartesianPose]:
    """Dispatch on ``cfg.mode``."""
    return _GENERATORS[cfg.mode](start, end, action, cfg, ws)


def poses_to_arrays(poses: Sequence[CartesianPose]) -> tuple[np.ndarray, np.ndarray]:
    """Stack poses into ``(n, d)`` positions and ``(n, 3)`` orientations."""
    return (np.array([p.position for p in poses]), np.array([p.orientation for p in poses]))
