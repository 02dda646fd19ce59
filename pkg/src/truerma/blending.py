"""Circular-blend smoothing of polylines.

Straight segments between waypoints are joined by circular arcs tangent to
both neighbours, which makes the arc-length parameterized path C1. The arc at
a corner is sized by the trim distance ``l`` it removes from each adjacent
segment::

    l = min(|prev| / 2, |next| / 2, max_deviation / tan(alpha / 4))
    radius = l / tan(alpha / 2)

where ``alpha`` is the deflection angle at the corner; the arc then passes
the corner at distance ``l * tan(alpha / 4) <= max_deviation``.

The construction works in any dimension. :class:`BlendedPath` is the bare
geometric path (used again for joint-space paths); :class:`SmoothPath` adds
orientation keys on top of a Cartesian :class:`BlendedPath`.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .waypoints import CartesianPose, poses_to_arrays

# below this deflection the kink is left in place; it is smaller than any
# tangent tolerance downstream
COLLINEAR_ANGLE = 1e-10
LINE, ARC = 0, 1


class BlendedPath:
    """Arc-length parameterized polyline with circular corner blends.

    Segments are stored in flat arrays. For a line ``origin`` is the start
    point and ``e1`` the unit direction; for an arc ``origin`` is the arc's
    start point, ``e1`` its entry tangent and ``e2`` the unit normal towards
    the center, so that the arc is
    ``origin + radius * (sin(phi) e1 + (1 - cos(phi)) e2)`` for
    ``phi in [0, sweep]``.

    Args:
        points: ``(n, dim)`` waypoints, ``n >= 2``, consecutive points distinct.
        max_deviation: bound on the distance between a corner and its arc.
    """

    def __init__(self, points, max_deviation: float):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError("need at least two waypoints")
        if max_deviation < 0:
            raise ValueError("max_deviation must be non-negative")
        diffs = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(diffs, axis=1)
        if np.any(seg_len <= 1e-12):
            k = int(np.argmax(seg_len <= 1e-12))
            raise ValueError(f"duplicate consecutive waypoints at index {k}")
        self.points = pts
        self.max_deviation = float(max_deviation)
        self._build(pts, diffs / seg_len[:, None], seg_len)

    def _build(self, pts, unit, seg_len):
        n, dim = pts.shape
        u_in, u_out = unit[:-1], unit[1:]
        cos_a = np.clip(np.einsum("ij,ij->i", u_in, u_out), -1.0, 1.0)
        perp = u_out - cos_a[:, None] * u_in
        perp_norm = np.linalg.norm(perp, axis=1)
        alpha = np.arctan2(perp_norm, cos_a)
        blended = alpha >= COLLINEAR_ANGLE
        if np.any(blended & (alpha > math.pi - 1e-9)):
            raise ValueError("path reverses direction at a waypoint; no blend exists")

        trim = np.zeros(n - 2)
        radius = np.zeros(n - 2)
        if np.any(blended):
            a = alpha[blended]
            lim = np.minimum(seg_len[:-1][blended], seg_len[1:][blended]) / 2.0
            with np.errstate(divide="ignore"):
                by_dev = np.where(self.max_deviation > 0, self.max_deviation / np.tan(a / 4.0), 0.0)
            trim[blended] = np.minimum(lim, by_dev)
            radius[blended] = trim[blended] / np.tan(a / 2.0)
        blended &= radius > 0.0
        trim[~blended] = 0.0
        normal = np.zeros_like(perp)
        normal[blended] = perp[blended] / perp_norm[blended, None]

        corners = pts[1:-1]
        arc_start = corners - trim[:, None] * u_in
        arc_end = corners + trim[:, None] * u_out

        # line i runs from (end of blend at point i) to (start of blend at point i+1)
        line_a = np.vstack([pts[:1], arc_end])
        line_b = np.vstack([arc_start, pts[-1:]])
        line_len = np.linalg.norm(line_b - line_a, axis=1)

        kinds, origins, e1s, e2s, radii, lengths = [], [], [], [], [], []
        zero = np.zeros(dim)
        for i in range(n - 1):
            if line_len[i] > 1e-12:
                kinds.append(LINE)
                origins.append(line_a[i])
                e1s.append(unit[i])
                e2s.append(zero)
                radii.append(0.0)
                lengths.append(line_len[i])
            if i < n - 2 and blended[i]:
                kinds.append(ARC)
                origins.append(arc_start[i])
                e1s.append(u_in[i])
                e2s.append(normal[i])
                radii.append(radius[i])
                lengths.append(radius[i] * alpha[i])

        self.kind = np.array(kinds, dtype=np.int64)
        self.origin = np.array(origins)
        self.e1 = np.array(e1s)
        self.e2 = np.array(e2s)
        self.radius = np.array(radii)
        self.seg_length = np.array(lengths)
        self.s_start = np.concatenate([[0.0], np.cumsum(self.seg_length)[:-1]])
        self.length = float(np.sum(self.seg_length))
        self.cumulative_length = np.concatenate([[0.0], np.cumsum(self.seg_length)])

        # arc length of each original waypoint's closest path point
        corner_s = np.empty(n)
        corner_s[0] = 0.0
        corner_s[-1] = self.length
        seg_idx = 0
        s = 0.0
        for i in range(n - 2):
            # advance over the line preceding corner i
            if line_len[i] > 1e-12:
                s += self.seg_length[seg_idx]
                seg_idx += 1
            if blended[i]:
                corner_s[i + 1] = s + 0.5 * self.seg_length[seg_idx]
                s += self.seg_length[seg_idx]
                seg_idx += 1
            else:
                corner_s[i + 1] = s
        self.waypoint_s = corner_s
        self.corner_alpha = alpha
        self.corner_trim = trim
        self.corner_radius = radius
        # r / cos(a/2) - r without cancellation at large radii
        self.corner_deviation = np.where(blended, radius * 2.0 * np.sin(alpha / 4.0) ** 2 / np.cos(alpha / 2.0), 0.0)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_segments(self) -> int:
        return self.kind.size

    def _locate(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        tol = 1e-9 * max(1.0, self.length)
        if np.any(s < -tol) or np.any(s > self.length + tol):
            raise ValueError(f"arc length outside [0, {self.length}]")
        s = np.clip(s, 0.0, self.length)
        idx = np.clip(np.searchsorted(self.s_start, s, side="right") - 1, 0, self.n_segments - 1)
        return s, idx, s - self.s_start[idx]

    def evaluate(self, s, derivative: int = 0) -> np.ndarray:
        """Position (``derivative=0``), unit tangent (1) or curvature vector (2)
        at arc length(s) ``s``; returns shape ``(m, dim)``."""
        s, idx, local = self._locate(s)
        kind = self.kind[idx]
        r = self.radius[idx]
        e1, e2, org = self.e1[idx], self.e2[idx], self.origin[idx]
        is_arc = kind == ARC
        phi = np.where(is_arc, local / np.where(is_arc, r, 1.0), 0.0)
        c, sn = np.cos(phi)[:, None], np.sin(phi)[:, None]
        arc_mask = is_arc[:, None]
        if derivative == 0:
            line = org + local[:, None] * e1
            versine = 2.0 * np.sin(0.5 * phi)[:, None] ** 2
            arc = org + r[:, None] * (sn * e1 + versine * e2)
        elif derivative == 1:
            line = e1
            arc = c * e1 + sn * e2
        elif derivative == 2:
            line = np.zeros_like(e1)
            arc = (-sn * e1 + c * e2) / np.where(is_arc, r, 1.0)[:, None]
        else:
            raise ValueError("derivative must be 0, 1 or 2")
        return np.where(arc_mask, arc, line)

    def segment_boundaries(self) -> np.ndarray:
        return self.cumulative_length.copy()

    def distance_to(self, point) -> float:
        """Distance from ``point`` to the path (exact per segment)."""
        p = np.asarray(point, dtype=float)
        best = math.inf
        for k in range(self.n_segments):
            org, e1, e2, L = self.origin[k], self.e1[k], self.e2[k], self.seg_length[k]
            if self.kind[k] == LINE:
                t = min(max(float(np.dot(p - org, e1)), 0.0), L)
                d = float(np.linalg.norm(org + t * e1 - p))
            else:
                r = self.radius[k]
                rel = p - org
                u, w = float(np.dot(rel, e1)), float(np.dot(rel, e2))
                off = rel - u * e1 - w * e2
                off2 = float(np.dot(off, off))
                # angle seen from the center, which sits at r * e2
                phi = math.atan2(u, r - w)
                sweep = L / r
                if 0.0 <= phi <= sweep:
                    # |q - center| - r, rearranged to avoid cancellation
                    planar = (u * u + w * w - 2.0 * r * w) / (math.hypot(u, r - w) + r)
                    d = math.sqrt(planar * planar + off2)
                else:
                    ends = [org, org + r * (math.sin(sweep) * e1 + 2.0 * math.sin(0.5 * sweep) ** 2 * e2)]
                    d = min(float(np.linalg.norm(q - p)) for q in ends)
            best = min(best, d)
        return best


class SmoothPath:
    """Cartesian blended path with orientations interpolated in arc length.

    Orientation keys sit at each waypoint's closest path point (the arc
    midpoint for a blended corner); angles between keys are linear in arc
    length.
    """

    def __init__(self, waypoints: Sequence[CartesianPose], max_deviation: float):
        if len(waypoints) < 2:
            raise ValueError("need at least two waypoints")
        positions, orientations = poses_to_arrays(waypoints)
        self.geometry = BlendedPath(positions, max_deviation)
        self.start = waypoints[0]
        self.end = waypoints[-1]
        self.key_s = self.geometry.waypoint_s
        self.key_angles = orientations

    @property
    def length(self) -> float:
        return self.geometry.length

    @property
    def cumulative_length(self) -> np.ndarray:
        return self.geometry.cumulative_length

    @property
    def segments(self) -> int:
        return self.geometry.n_segments

    def positions(self, s) -> np.ndarray:
        out = self.geometry.evaluate(s)
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        # endpoints are reproduced bit-exactly
        out[s_arr <= 0.0] = self.start.position
        out[s_arr >= self.length] = self.end.position
        return out

    def orientations(self, s) -> np.ndarray:
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, self.length)
        return np.stack([np.interp(s, self.key_s, self.key_angles[:, k]) for k in range(3)], axis=1)

    def sample_arrays(self, s) -> tuple[np.ndarray, np.ndarray]:
        return self.positions(s), self.orientations(s)


def smooth_path(waypoints: Sequence[CartesianPose], max_deviation: float = 0.05) -> SmoothPath:
    """Blend the waypoint polyline into a C1 Cartesian path."""
    return SmoothPath(waypoints, max_deviation)


def eval_pose(path: SmoothPath, s: float) -> CartesianPose:
    """Pose at arc length ``s``; raises ``ValueError`` outside ``[0, L]``."""
    if not 0.0 <= s <= path.length:
        raise ValueError(f"s={s} outside [0, {path.length}]")
    if s == 0.0:
        return path.start
    if s == path.length:
        return path.end
    pos, ori = path.sample_arrays([s])
    return CartesianPose(pos[0], ori[0])


def equidistant_s(length: float, spacing: float) -> np.ndarray:
    """``0, spacing, 2*spacing, ...`` strictly below ``length``, then ``length``."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    n = max(1, math.ceil(length / spacing - 1e-9))
    return np.append(spacing * np.arange(n), length)


def sample_equidistant(path: SmoothPath, spacing: float) -> list[CartesianPose]:
    """Poses every ``spacing`` meters along the path, always ending at ``L``."""
    pos, ori = path.sample_arrays(equidistant_s(path.length, spacing))
    return [CartesianPose(p, o) for p, o in zip(pos, ori)]
