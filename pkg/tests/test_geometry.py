import math

import numpy as np
import pytest

from oracles import oracle_distance, oracle_inside

from handmaps.geometry import (
    Segment,
    in_limb_rectangle,
    point_segment_distance,
    rectangle_membership,
    segment_distances,
)


class TestPointSegmentDistance:
    def test_zero_on_interior(self):
        seg = Segment((0.0, 0.0), (2.0, 0.0))
        assert point_segment_distance((1.3, 0.0), seg) == 0.0

    def test_perpendicular(self):
        seg = Segment((0.0, 0.0), (2.0, 0.0))
        assert point_segment_distance((0.0, 1.0), seg) == 1.0

    def test_beyond_endpoint(self):
        # nearest point is the endpoint (2, 0)
        seg = Segment((0.0, 0.0), (2.0, 0.0))
        assert point_segment_distance((3.0, 1.0), seg) == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_degenerate_segment(self):
        seg = Segment((1.0, 1.0), (1.0, 1.0))
        assert point_segment_distance((4.0, 5.0), seg) == 5.0

    def test_endpoint_order_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            a, b = rng.uniform(-10, 10, 2), rng.uniform(-10, 10, 2)
            p = rng.uniform(-10, 10, 2)
            fwd = point_segment_distance(p, Segment(tuple(a), tuple(b)))
            rev = point_segment_distance(p, Segment(tuple(b), tuple(a)))
            assert fwd == pytest.approx(rev, rel=1e-12, abs=1e-12)

    def test_lipschitz_in_point(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            seg = Segment(tuple(rng.uniform(-5, 5, 2)), tuple(rng.uniform(-5, 5, 2)))
            p1, p2 = rng.uniform(-8, 8, 2), rng.uniform(-8, 8, 2)
            d1 = point_segment_distance(p1, seg)
            d2 = point_segment_distance(p2, seg)
            assert abs(d1 - d2) <= np.linalg.norm(p1 - p2) + 1e-12

    def test_matches_oracle(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(-20, 20, (200, 2))
        starts = rng.uniform(-20, 20, (50, 2))
        ends = rng.uniform(-20, 20, (50, 2))
        got = segment_distances(pts, starts, ends)
        for i in [0, 17, 99, 199]:
            for j in [0, 9, 49]:
                want = oracle_distance(*pts[i], *starts[j], *ends[j])
                assert got[i, j] == pytest.approx(want, rel=1e-12, abs=1e-12)


class TestRectangleMembership:
    def test_midpoint_inside(self):
        seg = Segment((0.0, 0.0), (4.0, 2.0))
        assert in_limb_rectangle((2.0, 1.0), seg, 0.01)

    def test_double_width_outside(self):
        seg = Segment((0.0, 0.0), (4.0, 0.0))
        assert not in_limb_rectangle((2.0, 2.0), seg, 1.0)

    def test_beyond_endpoint_outside(self):
        seg = Segment((0.0, 0.0), (4.0, 0.0))
        assert not in_limb_rectangle((4.0 + 1e-9, 0.0), seg, 1.0)
        assert not in_limb_rectangle((-1e-9, 0.0), seg, 1.0)

    def test_degenerate_is_disk(self):
        seg = Segment((1.0, 1.0), (1.0, 1.0))
        assert in_limb_rectangle((1.5, 1.0), seg, 0.5)
        assert not in_limb_rectangle((1.6, 1.0), seg, 0.5)

    def test_rejects_nonpositive_width(self):
        seg = Segment((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(ValueError, match="half_width"):
            in_limb_rectangle((0.0, 0.0), seg, 0.0)
        with pytest.raises(ValueError, match="half_width"):
            rectangle_membership(np.zeros((1, 2)), np.zeros((1, 2)), np.ones((1, 2)), -1.0)

    def test_agrees_with_oracle_random(self):
        rng = np.random.default_rng(14)
        pts = rng.uniform(-30, 30, (100, 2))
        starts = rng.uniform(-30, 30, (100, 2))
        ends = rng.uniform(-30, 30, (100, 2))
        widths = rng.uniform(0.05, 8.0, 100)
        for j in range(100):
            got = rectangle_membership(pts, starts[j:j + 1], ends[j:j + 1], widths[j])[:, 0]
            for i in range(100):
                want = oracle_inside(*pts[i], *starts[j], *ends[j], widths[j])
                assert got[i] == want

    def test_dense_grid_agrees_with_oracle(self):
        # full rasterization comparison on a pixel lattice
        rng = np.random.default_rng(15)
        ys, xs = np.indices((40, 40))
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
        for _ in range(10):
            a, b = rng.uniform(0, 39, 2), rng.uniform(0, 39, 2)
            w = rng.uniform(0.3, 5.0)
            got = rectangle_membership(pts, a[None], b[None], w)[:, 0]
            want = np.array([oracle_inside(px, py, *a, *b, w) for px, py in pts])
            assert np.array_equal(got, want)
