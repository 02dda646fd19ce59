from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from truerma.blending import ARC, LINE, BlendedPath, equidistant_s, eval_pose, sample_equidistant, smooth_path
from truerma.waypoints import CartesianPose


def poses(points, angles=None):
    pts = np.asarray(points, float)
    if angles is None:
        angles = np.zeros((len(pts), 3))
    return [CartesianPose(p, a) for p, a in zip(pts, angles)]


def segment_end_tangents(path: BlendedPath):
    """Unit tangents at the entry and exit of every segment, from segment data alone."""
    entry, exit_ = [], []
    for k in range(path.n_segments):
        e1, e2 = path.e1[k], path.e2[k]
        if path.kind[k] == LINE:
            entry.append(e1)
            exit_.append(e1)
        else:
            sweep = path.seg_length[k] / path.radius[k]
            entry.append(e1)
            exit_.append(math.cos(sweep) * e1 + math.sin(sweep) * e2)
    return np.array(entry), np.array(exit_)


def segment_endpoints(path: BlendedPath):
    first, last = [], []
    for k in range(path.n_segments):
        org, e1, e2, L = path.origin[k], path.e1[k], path.e2[k], path.seg_length[k]
        if path.kind[k] == LINE:
            first.append(org)
            last.append(org + L * e1)
        else:
            r = path.radius[k]
            first.append(org)
            last.append(org + r * (math.sin(L / r) * e1 + 2 * math.sin(L / (2 * r)) ** 2 * e2))
    return np.array(first), np.array(last)


def polyline_distance(points, q):
    best = math.inf
    for a, b in zip(points[:-1], points[1:]):
        d = b - a
        t = min(max(float((q - a) @ d / (d @ d)), 0.0), 1.0)
        best = min(best, float(np.linalg.norm(a + t * d - q)))
    return best


@st.composite
def waypoint_sets(draw):
    dim = draw(st.sampled_from([2, 3]))
    n = draw(st.integers(2, 9))
    coords = st.floats(-1.0, 1.0, allow_nan=False)
    pts = np.array(draw(st.lists(st.tuples(*[coords] * dim), min_size=n, max_size=n)))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assume(np.all(seg > 1e-3))
    if n > 2:
        u = np.diff(pts, axis=0) / seg[:, None]
        assume(np.all(np.einsum("ij,ij->i", u[:-1], u[1:]) > -1 + 1e-6))
    delta = draw(st.floats(1e-4, 0.2))
    return pts, delta


class TestExamples:
    def test_collinear(self):
        p = smooth_path(poses([(0, 0), (0.5, 0), (1, 0)]), 0.05)
        assert p.length == pytest.approx(1.0, abs=1e-15)
        assert np.all(p.geometry.kind == LINE)
        assert p.geometry.distance_to((0.5, 0)) == 0.0

    def test_right_angle_corner(self):
        p = smooth_path(poses([(0, 0), (1, 0), (1, 1)]), 10.0).geometry
        arcs = np.flatnonzero(p.kind == ARC)
        assert arcs.size == 1
        entry, exit_ = segment_end_tangents(p)
        np.testing.assert_allclose(entry[arcs[0]], [1, 0], atol=1e-15)
        np.testing.assert_allclose(exit_[arcs[0]], [0, 1], atol=1e-15)
        # trim capped at half of each leg: radius 0.5 centred at (0.5, 0.5)
        center = p.origin[arcs[0]] + p.radius[arcs[0]] * p.e2[arcs[0]]
        np.testing.assert_allclose(center, [0.5, 0.5], atol=1e-15)
        assert p.length == pytest.approx(1.0 + 0.25 * math.pi, rel=1e-14)

    def test_right_angle_arc_midpoint_on_bisector(self):
        delta = 0.05
        path = smooth_path(poses([(0, 0), (1, 0), (1, 1)]), delta)
        g = path.geometry
        mid_s = g.waypoint_s[1]
        pt = eval_pose(path, mid_s).position
        # closest approach along the bisector: trim = delta / tan(22.5 deg), r = trim
        r = delta / math.tan(math.pi / 8)
        center = np.array([1 - r, r])
        expected = center + r * np.array([1, -1]) / math.sqrt(2)
        np.testing.assert_allclose(pt, expected, atol=1e-14)
        assert np.linalg.norm(pt - [1, 0]) == pytest.approx(delta, rel=1e-12)

    def test_two_points(self):
        p = smooth_path(poses([(0, 0, 0), (0.3, 0.4, 0)]), 0.05)
        assert p.segments == 1 and p.length == pytest.approx(0.5, abs=1e-15)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            smooth_path(poses([(0, 0), (0, 0), (1, 0)]), 0.05)

    def test_eval_pose_endpoints_and_range(self):
        wp = poses([(0.1, 0.2), (0.7, 0.3), (0.5, 0.9)], [(0, 0.1, 0), (0, 0.3, 0), (0, -0.2, 0)])
        p = smooth_path(wp, 0.05)
        assert eval_pose(p, 0.0) == wp[0]
        assert eval_pose(p, p.length) == wp[-1]
        with pytest.raises(ValueError):
            eval_pose(p, p.length + 1e-6)
        with pytest.raises(ValueError):
            eval_pose(p, -1e-6)

    def test_straight_midpoint(self):
        p = smooth_path(poses([(0, 0), (1, 0)]), 0.05)
        np.testing.assert_allclose(eval_pose(p, 0.5).position, [0.5, 0])

    @pytest.mark.parametrize("spacing,expected", [
        (0.25, [0, 0.25, 0.5, 0.75, 1.0]),
        (0.3, [0, 0.3, 0.6, 0.9, 1.0]),
        (2.0, [0, 1.0]),
    ])
    def test_equidistant(self, spacing, expected):
        np.testing.assert_allclose(equidistant_s(1.0, spacing), expected, atol=1e-15)
        p = smooth_path(poses([(0, 0), (1, 0)]), 0.05)
        out = sample_equidistant(p, spacing)
        assert len(out) == math.ceil(1.0 / spacing) + 1 if spacing < 1 else len(out) == 2
        np.testing.assert_allclose([q.position[0] for q in out], expected, atol=1e-15)

    def test_shrinking_deviation_converges_to_polyline(self):
        pts = np.array([(0, 0), (1, 0), (1.3, 0.8)])
        previous = math.inf
        for delta in (1e-2, 1e-4, 1e-6):
            p = smooth_path(poses(pts), delta)
            s = np.linspace(0, p.length, 2001)
            gap = max(polyline_distance(pts, q) for q in p.positions(s))
            corner = p.geometry.distance_to(pts[1])
            assert gap <= delta + 1e-12
            assert corner == pytest.approx(delta, rel=1e-6)
            assert corner < previous
            previous = corner


class TestProperties:
    @given(waypoint_sets())
    def test_c1_and_connected(self, data):
        pts, delta = data
        g = smooth_path(poses(pts), delta).geometry
        entry, exit_ = segment_end_tangents(g)
        first, last = segment_endpoints(g)
        assert np.all(np.linalg.norm(exit_[:-1] - entry[1:], axis=1) < 1e-9)
        assert np.all(np.linalg.norm(last[:-1] - first[1:], axis=1) < 1e-9)
        np.testing.assert_array_equal(first[0], pts[0])
        np.testing.assert_allclose(last[-1], pts[-1], atol=1e-12)
        assert np.all(g.radius[g.kind == ARC] > 0)
        assert np.all(g.seg_length[g.kind == ARC] / g.radius[g.kind == ARC] < math.pi)

    @given(waypoint_sets())
    def test_deviation_bound(self, data):
        pts, delta = data
        g = smooth_path(poses(pts), delta).geometry
        for q in pts[1:-1]:
            assert g.distance_to(q) <= delta + 1e-9
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        assert np.all(g.corner_trim <= np.minimum(seg[:-1], seg[1:]) / 2 + 1e-12)

    @given(waypoint_sets())
    def test_arc_length_parameterization(self, data):
        pts, delta = data
        p = smooth_path(poses(pts), delta)
        # sub-grid per segment so tiny arcs are resolved too
        cl = p.cumulative_length
        s = np.unique(np.concatenate([np.linspace(a, b, 400) for a, b in zip(cl[:-1], cl[1:])]))
        chords = np.linalg.norm(np.diff(p.positions(s), axis=0), axis=1).sum()
        assert chords == pytest.approx(p.length, rel=1e-6)
        assert np.all(np.diff(p.cumulative_length) > 0)
        np.testing.assert_array_equal(p.positions([0.0, p.length]), [pts[0], pts[-1]])

    @given(waypoint_sets())
    def test_unit_speed(self, data):
        pts, delta = data
        g = smooth_path(poses(pts), delta).geometry
        s = np.linspace(0.0, g.length, 257)
        np.testing.assert_allclose(np.linalg.norm(g.evaluate(s, 1), axis=1), 1.0, atol=1e-12)
