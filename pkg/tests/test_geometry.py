import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunnelnav.geometry import (IntersectionSolution, build_tunnel, contains,
                                has_los, pose_at, pull_location,
                                ray_segment_intersection, segment_blocked)


class TestBuildTunnel:
    def test_straight(self):
        topo = build_tunnel([(0, 0), (400, 0)], 20.0)
        assert topo.length == 400.0
        assert topo.turns == []
        np.testing.assert_allclose(topo.left_wall[:, 1], 10.0)
        np.testing.assert_allclose(topo.right_wall[:, 1], -10.0)

    def test_l_tunnel(self, l_tunnel):
        assert l_tunnel.length == 200.0
        assert len(l_tunnel.turns) == 1
        turn = l_tunnel.turns[0]
        assert turn.s == 100.0
        assert turn.angle == pytest.approx(-math.pi / 2)  # right turn
        np.testing.assert_allclose(turn.inner_corner, [90.0, -10.0])

    def test_three_turn_tunnel(self, turns_400):
        assert turns_400.length == pytest.approx(400.0)
        assert len(turns_400.turns) == 3

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            build_tunnel([(0, 0), (0, 0), (10, 0)], 5.0)
        with pytest.raises(ValueError):
            build_tunnel([(0, 0), (10, 0)], 0.0)
        with pytest.raises(ValueError):
            build_tunnel([(0, 0)], 5.0)
        with pytest.raises(ValueError):  # reversal corner
            build_tunnel([(0, 0), (10, 0), (0, 0.0000001)], 5.0)

    def test_offset_distance_property(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = rng.integers(2, 6)
            angles = rng.uniform(-1.1, 1.1, size=max(n - 2, 0))
            lengths = rng.uniform(30, 120, size=n - 1)
            pts = [(0.0, 0.0)]
            heading = rng.uniform(-math.pi, math.pi)
            for i, length in enumerate(lengths):
                if i > 0:
                    heading += angles[i - 1]
                pts.append((pts[-1][0] + length * math.cos(heading),
                            pts[-1][1] + length * math.sin(heading)))
            width = rng.uniform(10, 30)
            topo = build_tunnel(pts, width)
            # non-corner wall vertices sit exactly width/2 from the centerline
            for wall in (topo.left_wall, topo.right_wall):
                for idx in (0, -1):
                    v = wall[idx]
                    p = topo.centerline[idx]
                    assert math.hypot(v[0] - p[0], v[1] - p[1]) == \
                        pytest.approx(width / 2, abs=1e-9)
            # miter vertices lie on both adjacent offset lines
            for t in topo.turns:
                for wall, sign in ((topo.left_wall, 1.0), (topo.right_wall, -1.0)):
                    m = wall[t.index]
                    for seg in (t.index - 1, t.index):
                        p0 = topo.centerline[seg]
                        p1 = topo.centerline[seg + 1]
                        d = p1 - p0
                        d = d / np.hypot(*d)
                        nvec = np.array([-d[1], d[0]])
                        dist = float(nvec @ (m - p0))
                        assert dist == pytest.approx(sign * width / 2, abs=1e-9)


class TestPoseAt:
    def test_start(self):
        topo = build_tunnel([(0, 0), (400, 0)], 20.0)
        point, heading = pose_at(topo, 0.0)
        np.testing.assert_allclose(point, [0, 0])
        assert heading == 0.0

    def test_l_tunnel_past_corner(self, l_tunnel):
        point, heading = pose_at(l_tunnel, 150.0)
        np.testing.assert_allclose(point, [100.0, -50.0], atol=1e-12)
        assert heading == pytest.approx(-math.pi / 2)

    def test_corner_uses_outgoing_heading(self, l_tunnel):
        _, heading = pose_at(l_tunnel, 100.0)
        assert heading == pytest.approx(-math.pi / 2)

    def test_end(self, l_tunnel):
        point, _ = pose_at(l_tunnel, 200.0)
        np.testing.assert_allclose(point, [100.0, -100.0], atol=1e-12)

    def test_out_of_range(self, l_tunnel):
        with pytest.raises(ValueError):
            pose_at(l_tunnel, -1.0)
        with pytest.raises(ValueError):
            pose_at(l_tunnel, 201.0)


class TestHasLos:
    def test_straight_tunnel_interior(self):
        topo = build_tunnel([(0, 0), (400, 0)], 20.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = (rng.uniform(0, 400), rng.uniform(-9.9, 9.9))
            q = (rng.uniform(0, 400), rng.uniform(-9.9, 9.9))
            assert has_los(p, q, topo)

    def test_corner_blocks(self, l_tunnel):
        assert not has_los((50, 0), (100, -50), l_tunnel)

    def test_same_point(self, l_tunnel):
        assert has_los((50, 0), (50, 0), l_tunnel)

    def test_outside_rejected(self, l_tunnel):
        with pytest.raises(ValueError):
            has_los((50, 50), (60, 0), l_tunnel)

    def test_symmetry_and_oracle(self, l_tunnel):
        # brute-force oracle: proper crossing against every wall segment
        def cross2(v, w):
            return v[0] * w[1] - v[1] * w[0]

        def oracle(p, q):
            crossings = 0
            for ax, ay, bx, by in l_tunnel.wall_segments:
                pq = (q[0] - p[0], q[1] - p[1])
                ab = (bx - ax, by - ay)
                d1 = cross2(pq, (ax - p[0], ay - p[1]))
                d2 = cross2(pq, (bx - p[0], by - p[1]))
                d3 = cross2(ab, (p[0] - ax, p[1] - ay))
                d4 = cross2(ab, (q[0] - ax, q[1] - ay))
                if d1 * d2 < -1e-12 and d3 * d4 < -1e-12:
                    crossings += 1
            return crossings == 0

        rng = np.random.default_rng(1)
        pts = []
        while len(pts) < 40:
            cand = (rng.uniform(2, 98), rng.uniform(-8, 8))
            if contains(l_tunnel, cand):
                pts.append(cand)
            cand2 = (rng.uniform(92, 108), rng.uniform(-98, -12))
            if contains(l_tunnel, cand2):
                pts.append(cand2)
        for i in range(0, len(pts) - 1, 2):
            p, q = pts[i], pts[i + 1]
            assert has_los(p, q, l_tunnel) == has_los(q, p, l_tunnel)
            assert has_los(p, q, l_tunnel) == oracle(p, q)


class TestRaySegment:
    def test_axis_aligned(self):
        sol = ray_segment_intersection((0, 0), (1, 0), (2, -1), (2, 1))
        assert sol.alpha == pytest.approx(2.0)
        assert sol.beta == pytest.approx(0.5)
        np.testing.assert_allclose(sol.point, [2, 0], atol=1e-12)

    def test_behind_ray(self):
        assert ray_segment_intersection((0, 0), (1, 0), (-2, -1), (-2, 1)) is None

    def test_derived_case(self):
        sol = ray_segment_intersection((60, -8), (90, -10), (100, -10), (100, -110))
        assert sol is not None
        assert sol.alpha == pytest.approx(math.sqrt(40 ** 2 + (8 / 3) ** 2), abs=1e-9)
        np.testing.assert_allclose(sol.point, [100.0, -32.0 / 3.0], atol=1e-9)
        # residual of the defining linear system
        u = np.array([30.0, -2.0]) / math.hypot(30, 2)
        lhs = np.array([60.0, -8.0]) + sol.alpha * u
        rhs = sol.beta * np.array([100.0, -10.0]) + (1 - sol.beta) * np.array([100.0, -110.0])
        assert np.linalg.norm(lhs - rhs) <= 1e-9

    def test_parallel_disjoint(self):
        assert ray_segment_intersection((0, 0), (1, 0), (0, 1), (5, 1)) is None

    def test_collinear_overlap_returns_min_alpha(self):
        sol = ray_segment_intersection((0, 0), (1, 0), (7, 0), (3, 0))
        assert sol.alpha == pytest.approx(3.0)
        np.testing.assert_allclose(sol.point, [3, 0], atol=1e-12)
        # overlap containing the origin clamps to alpha = 0
        sol = ray_segment_intersection((0, 0), (1, 0), (5, 0), (-5, 0))
        assert sol.alpha == 0.0

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            ray_segment_intersection((0, 0), (0, 0), (1, 0), (2, 0))
        with pytest.raises(ValueError):
            ray_segment_intersection((0, 0), (1, 0), (2, 0), (2, 0))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        o = rng.uniform(-10, 10, 2)
        th = o + rng.uniform(-5, 5, 2)
        if np.hypot(*(th - o)) < 1e-6:
            th = o + np.array([1.0, 0.0])
        a = rng.uniform(-10, 10, 2)
        b = a + rng.uniform(-8, 8, 2)
        if np.hypot(*(b - a)) < 1e-6:
            b = a + np.array([0.0, 1.0])
        sol = ray_segment_intersection(o, th, a, b)
        # oracle: direct 2x2 solve of alpha*u - beta*(a - b) = b - o
        u = (th - o) / np.hypot(*(th - o))
        mat = np.column_stack([u, b - a])
        ok = abs(np.linalg.det(mat)) > 1e-9
        if ok:
            alpha, beta = np.linalg.solve(mat, b - o)
            feasible = alpha >= -1e-9 and -1e-9 <= beta <= 1 + 1e-9
            if feasible:
                assert sol is not None
                assert sol.alpha == pytest.approx(max(alpha, 0.0), abs=1e-6)
                point = o + sol.alpha * u
                assert np.linalg.norm(point - (sol.beta * a + (1 - sol.beta) * b)) <= 1e-9
            else:
                assert sol is None


class TestPullLocation:
    def test_derived_l_tunnel(self, l_tunnel):
        res = pull_location((60, 8), (60, -8), l_tunnel, l_tunnel.turns[0])
        assert res is not None
        point, s_pull = res
        np.testing.assert_allclose(point, [100.0, -32.0 / 3.0], atol=1e-9)
        assert s_pull == pytest.approx(100.0 + 32.0 / 3.0, abs=1e-9)

    def test_pull_is_los_boundary(self, l_tunnel):
        point, s_pull = pull_location((60, 8), (60, -8), l_tunnel,
                                      l_tunnel.turns[0])
        lm = (60.0, -8.0)  # inner landmark of the right turn
        for ds in (0.5, 2.0, 5.0):
            before, _ = pose_at(l_tunnel, s_pull - ds)
            after, _ = pose_at(l_tunnel, min(s_pull + ds, l_tunnel.length))
            assert has_los(before, lm, l_tunnel)
            assert not has_los(after, lm, l_tunnel)

    def test_dropped_at_corner_no_pull(self, l_tunnel):
        corner = l_tunnel.turns[0].inner_corner
        res = pull_location((90, 10), tuple(corner), l_tunnel, l_tunnel.turns[0])
        assert res is None

    def test_wrong_turn_rejected(self, l_tunnel, straight_400):
        with pytest.raises(ValueError):
            pull_location((60, 8), (60, -8), straight_400, l_tunnel.turns[0])


class TestContains:
    def test_inside_outside(self, l_tunnel):
        assert contains(l_tunnel, (50, 0))
        assert contains(l_tunnel, (100, -50))
        assert not contains(l_tunnel, (50, 30))
        assert not contains(l_tunnel, (-20, 0))
        # boundary within tolerance counts as inside
        assert contains(l_tunnel, (50, 10.0))

    def test_segment_blocked_no_precondition(self, l_tunnel):
        # works even for points outside the polygon (open tunnel ends)
        assert not segment_blocked((-5, 0), (5, 0), l_tunnel)
        assert segment_blocked((50, 5), (50, 30), l_tunnel)
