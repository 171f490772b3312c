"""Tunnel geometry: arc-length parameterized centerline, offset walls,
line-of-sight tests, and the ray/segment solve behind landmark pull locations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GEOM_TOL = 1e-9
INSIDE_TOL = 1e-6


@dataclass(frozen=True)
class Turn:
    """A corner of the centerline polyline."""

    index: int            # waypoint index of the corner
    angle: float          # signed turn angle in radians, + = left
    s: float              # arc length of the corner from the tunnel start
    inner_corner: np.ndarray  # wall vertex on the inside of the turn


@dataclass(frozen=True)
class IntersectionSolution:
    """Solution of ray = segment: point = origin + alpha*u = beta*s_fr + (1-beta)*s_to."""

    alpha: float
    beta: float
    point: np.ndarray


class TunnelTopology:
    """Rectangular-cross-section tunnel around a polyline centerline.

    Walls are the centerline offset by +-width/2 with miter joins at corners,
    so corner wall vertices are sharp points usable as LOS shadow pivots.
    """

    def __init__(self, centerline: np.ndarray, width: float,
                 left_wall: np.ndarray, right_wall: np.ndarray,
                 turns: list[Turn], cum_s: np.ndarray):
        self.centerline = centerline
        self.width = width
        self.left_wall = left_wall
        self.right_wall = right_wall
        self.turns = turns
        self.cum_s = cum_s
        self.length = float(cum_s[-1])
        # flat (m, 4) array of wall segments [ax, ay, bx, by] for LOS loops
        segs = []
        for wall in (left_wall, right_wall):
            segs.append(np.hstack([wall[:-1], wall[1:]]))
        self.wall_segments = np.vstack(segs)
        # closed polygon for inside tests: left wall then reversed right wall
        self.polygon = np.vstack([left_wall, right_wall[::-1]])

    def __repr__(self):
        return (f"TunnelTopology(waypoints={len(self.centerline)}, "
                f"width={self.width}, length={self.length:.3f}, "
                f"turns={len(self.turns)})")


def build_tunnel(waypoints, width: float) -> TunnelTopology:
    """Build a tunnel topology from centerline waypoints and a fixed width.

    Rejects degenerate polylines (coincident consecutive waypoints),
    non-positive widths, and reversal corners (|turn angle| ~ pi).
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("centerline needs at least 2 two-dimensional waypoints")
    if width <= 0:
        raise ValueError("tunnel width must be positive")
    diffs = np.diff(pts, axis=0)
    seg_lens = np.hypot(diffs[:, 0], diffs[:, 1])
    if np.any(seg_lens < GEOM_TOL):
        raise ValueError("coincident consecutive waypoints in centerline")
    dirs = diffs / seg_lens[:, None]
    cum_s = np.concatenate([[0.0], np.cumsum(seg_lens)])

    half = width / 2.0
    # left normal of direction (dx, dy) is (-dy, dx)
    normals = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)

    left = [pts[0] + half * normals[0]]
    right = [pts[0] - half * normals[0]]
    turns: list[Turn] = []
    for i in range(1, len(pts) - 1):
        u1, u2 = dirs[i - 1], dirs[i]
        cosang = float(np.dot(u1, u2))
        sinang = float(u1[0] * u2[1] - u1[1] * u2[0])
        angle = math.atan2(sinang, cosang)
        if abs(angle) > math.pi - 1e-6:
            raise ValueError(f"reversal corner at waypoint {i} (angle ~ pi)")
        n1, n2 = normals[i - 1], normals[i]
        # miter point: offset corner on both adjacent offset lines
        miter_l = pts[i] + half * (n1 + n2) / (1.0 + cosang)
        miter_r = pts[i] - half * (n1 + n2) / (1.0 + cosang)
        left.append(miter_l)
        right.append(miter_r)
        if abs(angle) > 1e-9:
            inner = miter_l if angle > 0 else miter_r
            turns.append(Turn(index=i, angle=angle, s=float(cum_s[i]),
                              inner_corner=inner.copy()))
    left.append(pts[-1] + half * normals[-1])
    right.append(pts[-1] - half * normals[-1])

    return TunnelTopology(pts, float(width), np.array(left), np.array(right),
                          turns, cum_s)


def segment_index_at(topology: TunnelTopology, s: float) -> int:
    """Index of the centerline segment containing arc length s.

    A corner belongs to the outgoing segment.
    """
    cum = topology.cum_s
    if s < -GEOM_TOL or s > topology.length + GEOM_TOL:
        raise ValueError(f"arc length {s} outside [0, {topology.length}]")
    i = int(np.searchsorted(cum, s, side="right")) - 1
    return min(max(i, 0), len(cum) - 2)


def pose_at(topology: TunnelTopology, s: float):
    """Centerline point and heading at arc length s."""
    i = segment_index_at(topology, s)
    p0 = topology.centerline[i]
    p1 = topology.centerline[i + 1]
    seg_len = topology.cum_s[i + 1] - topology.cum_s[i]
    t = (min(max(s, 0.0), topology.length) - topology.cum_s[i]) / seg_len
    point = p0 + t * (p1 - p0)
    heading = math.atan2(p1[1] - p0[1], p1[0] - p0[0])
    return point, heading


def arclength_of(topology: TunnelTopology, point, seg_index: int) -> float:
    """Arc length of a point known to lie on centerline segment seg_index."""
    p0 = topology.centerline[seg_index]
    return float(topology.cum_s[seg_index] + np.hypot(point[0] - p0[0], point[1] - p0[1]))


def _point_in_polygon(poly: np.ndarray, x: float, y: float) -> bool:
    # even-odd crossing test
    inside = False
    n = len(poly)
    j = n - 1
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if (yi > y) != (yj > y):
            xc = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xc:
                inside = not inside
        j = i
    return inside


def _dist_point_segment(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    seg2 = vx * vx + vy * vy
    t = 0.0 if seg2 == 0.0 else min(max((wx * vx + wy * vy) / seg2, 0.0), 1.0)
    dx, dy = wx - t * vx, wy - t * vy
    return math.hypot(dx, dy)


def contains(topology: TunnelTopology, point, tol: float = INSIDE_TOL) -> bool:
    """True if the point lies inside the tunnel region (boundary within tol counts)."""
    x, y = float(point[0]), float(point[1])
    if _point_in_polygon(topology.polygon, x, y):
        return True
    poly = topology.polygon
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        if _dist_point_segment(x, y, a[0], a[1], b[0], b[1]) <= tol:
            return True
    return False


def _segments_cross(px, py, qx, qy, ax, ay, bx, by) -> bool:
    # strict interior crossing; contact within GEOM_TOL meters of any endpoint
    # does not block (measure-zero grazing is treated as visible)
    rx, ry = qx - px, qy - py
    sx, sy = bx - ax, by - ay
    denom = rx * sy - ry * sx
    len_r = math.hypot(rx, ry)
    len_s = math.hypot(sx, sy)
    if len_r < GEOM_TOL or len_s < GEOM_TOL:
        return False
    if abs(denom) < 1e-14 * len_r * len_s:
        return False  # parallel or collinear: no proper crossing
    wx, wy = ax - px, ay - py
    t = (wx * sy - wy * sx) / denom
    u = (wx * ry - wy * rx) / denom
    tol_t = GEOM_TOL / len_r
    tol_u = GEOM_TOL / len_s
    return (tol_t < t < 1.0 - tol_t) and (tol_u < u < 1.0 - tol_u)


def segment_blocked(p, q, topology: TunnelTopology) -> bool:
    """True iff segment pq properly crosses some wall segment (no
    inside-the-tunnel precondition; endpoint grazing does not block)."""
    px, py = float(p[0]), float(p[1])
    qx, qy = float(q[0]), float(q[1])
    if math.hypot(qx - px, qy - py) < GEOM_TOL:
        return False
    for ax, ay, bx, by in topology.wall_segments:
        if _segments_cross(px, py, qx, qy, ax, ay, bx, by):
            return True
    return False


def has_los(p, q, topology: TunnelTopology) -> bool:
    """True iff the open segment pq crosses no wall segment.

    Both points must be inside the tunnel (within 1e-6 m).
    """
    for name, pt in (("p", p), ("q", q)):
        if not contains(topology, pt):
            raise ValueError(f"point {name}={tuple(float(c) for c in pt)} outside tunnel")
    return not segment_blocked(p, q, topology)


def ray_segment_intersection(origin, through, s_fr, s_to):
    """Intersect the ray origin->through with segment [s_fr, s_to].

    Solves origin + alpha*unit(through - origin) = beta*s_fr + (1 - beta)*s_to
    for alpha >= 0 and beta in [0, 1]. Returns None when no such pair exists;
    a collinear overlap returns the solution with minimum alpha.
    """
    o = np.asarray(origin, dtype=float)
    th = np.asarray(through, dtype=float)
    a = np.asarray(s_fr, dtype=float)
    b = np.asarray(s_to, dtype=float)
    d = th - o
    ray_len = math.hypot(d[0], d[1])
    seg = a - b
    seg_len = math.hypot(seg[0], seg[1])
    if ray_len < GEOM_TOL:
        raise ValueError("ray direction has zero length")
    if seg_len < GEOM_TOL:
        raise ValueError("segment has zero length")
    u = d / ray_len
    # alpha*u - beta*(a - b) = b - origin, point = b + beta*(a - b)
    rhs = b - o
    det = u[0] * seg[1] - u[1] * seg[0]
    if abs(det) < 1e-12 * seg_len:
        # parallel; collinear iff origin offset from the segment line is ~0
        off = rhs[0] * u[1] - rhs[1] * u[0]
        if abs(off) > GEOM_TOL:
            return None
        alpha_fr = float(np.dot(a - o, u))
        alpha_to = float(np.dot(b - o, u))
        lo, hi = min(alpha_fr, alpha_to), max(alpha_fr, alpha_to)
        if hi < -GEOM_TOL:
            return None
        alpha = max(lo, 0.0)
        if alpha_fr == alpha_to:
            beta = 1.0
        else:
            beta = (alpha - alpha_to) / (alpha_fr - alpha_to)
        beta = min(max(beta, 0.0), 1.0)
        point = o + alpha * u
        return IntersectionSolution(alpha=alpha, beta=float(beta), point=point)
    alpha = (rhs[0] * seg[1] - rhs[1] * seg[0]) / det
    beta = (u[1] * rhs[0] - u[0] * rhs[1]) / det
    tol_b = GEOM_TOL / seg_len
    if alpha < -GEOM_TOL or beta < -tol_b or beta > 1.0 + tol_b:
        return None
    alpha = max(alpha, 0.0)
    beta = min(max(beta, 0.0), 1.0)
    point = o + alpha * u
    return IntersectionSolution(alpha=float(alpha), beta=float(beta), point=point)


def pull_location(lm_left, lm_right, topology: TunnelTopology, turn: Turn):
    """Post-turn point where LOS to the inner landmark of the last pre-turn
    pair is first lost, with its arc-length coordinate.

    The inner landmark (left landmark for a left turn, right for a right turn)
    loses LOS first; the shadow boundary is the ray from that landmark through
    the inner wall corner, intersected with the post-turn centerline segment.
    Returns None when the ray misses that segment (no pull needed).
    """
    if not any(t is turn or (t.index == turn.index and t.s == turn.s)
               for t in topology.turns):
        raise ValueError("turn does not belong to this topology")
    inner_lm = np.asarray(lm_left if turn.angle > 0 else lm_right, dtype=float)
    corner = turn.inner_corner
    if math.hypot(inner_lm[0] - corner[0], inner_lm[1] - corner[1]) < GEOM_TOL:
        return None  # dropped essentially at the corner: no pull
    s_fr = topology.centerline[turn.index]
    s_to = topology.centerline[turn.index + 1]
    sol = ray_segment_intersection(inner_lm, corner, s_fr, s_to)
    if sol is None:
        return None
    s_pull = arclength_of(topology, sol.point, turn.index)
    return sol.point, s_pull


def cast_ray_distance(topology: TunnelTopology, origin, direction) -> float:
    """Distance from origin along a unit direction to the nearest wall segment.

    Returns inf when the ray escapes through an open tunnel end.
    """
    ox, oy = float(origin[0]), float(origin[1])
    dx, dy = float(direction[0]), float(direction[1])
    best = math.inf
    for ax, ay, bx, by in topology.wall_segments:
        sx, sy = bx - ax, by - ay
        denom = dx * sy - dy * sx
        if abs(denom) < 1e-14:
            continue
        wx, wy = ax - ox, ay - oy
        t = (wx * sy - wy * sx) / denom
        u = (wx * dy - wy * dx) / denom
        if t > GEOM_TOL and -1e-12 <= u <= 1.0 + 1e-12 and t < best:
            best = t
    return best
