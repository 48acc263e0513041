"""Point-to-segment metrics and oriented-rectangle membership.

All computation is double precision. The array variants take a batch of
query points and a batch of segments at once and broadcast to a
(points, segments) result, which is what the mask rasterizer uses.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class Segment(NamedTuple):
    """Line segment between two keypoints; coincident endpoints allowed."""

    a: tuple[float, float]
    b: tuple[float, float]


def segment_distance_rows(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Euclidean distance of each point to each segment, (L, P) layout.

    points: (P, 2), starts/ends: (L, 2). A segment whose endpoints
    coincide degenerates to a point and the distance to that point is
    returned. Segments-outer/pixels-inner keeps every inner loop long and
    contiguous; the rasterizer calls this on every pixel of every record.
    """
    points = np.asarray(points, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    px = np.ascontiguousarray(points[:, 0])
    py = np.ascontiguousarray(points[:, 1])
    dx = starts[:, 0:1] - ends[:, 0:1]                        # (L, 1)
    dy = starts[:, 1:2] - ends[:, 1:2]
    len2 = dx * dx + dy * dy
    safe_len2 = np.where(len2 > 0.0, len2, 1.0)

    # four reused (L, P) planes keep the working set cache-sized
    shape = (starts.shape[0], points.shape[0])
    pbx = np.subtract(px[None, :], ends[:, 0:1])
    pby = np.subtract(py[None, :], ends[:, 1:2])
    t = np.empty(shape)
    scratch = np.empty(shape)
    np.multiply(pbx, dx, out=t)
    np.multiply(pby, dy, out=scratch)
    t += scratch
    t /= safe_len2
    np.clip(t, 0.0, 1.0, out=t)
    t[(len2 == 0.0)[:, 0], :] = 0.0
    np.multiply(t, dx, out=scratch)                           # p - (b + t*(a-b))
    pbx -= scratch
    np.multiply(t, dy, out=scratch)
    pby -= scratch
    np.multiply(pbx, pbx, out=t)
    np.multiply(pby, pby, out=scratch)
    t += scratch
    return np.sqrt(t, out=t)


def segment_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Euclidean distance of each point to each segment, (P, L) result."""
    return segment_distance_rows(points, starts, ends).T


def rectangle_membership_rows(
    points: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    half_width: float,
) -> np.ndarray:
    """Whether each point lies in the fixed-width rectangle around each segment.

    The rectangle spans the segment lengthwise and extends ``half_width``
    to both sides: with a, b the endpoints, membership requires
    0 <= (p-b)^T (a-b) <= ||a-b||^2 and |(p-b)^T u_perp| <= half_width.
    Degenerate segments fall back to a disk of radius ``half_width``.
    Returns an (L, P) boolean array.
    """
    if half_width <= 0.0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    points = np.asarray(points, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    px = np.ascontiguousarray(points[:, 0])
    py = np.ascontiguousarray(points[:, 1])
    dx = starts[:, 0:1] - ends[:, 0:1]
    dy = starts[:, 1:2] - ends[:, 1:2]
    len2 = dx * dx + dy * dy

    shape = (starts.shape[0], points.shape[0])
    pbx = np.subtract(px[None, :], ends[:, 0:1])
    pby = np.subtract(py[None, :], ends[:, 1:2])
    t_num = np.empty(shape)
    scratch = np.empty(shape)
    np.multiply(pbx, dx, out=t_num)
    np.multiply(pby, dy, out=scratch)
    t_num += scratch
    inside = (t_num >= 0.0) & (t_num <= len2)
    # |(p-b)^T u_perp| * ||a-b|| == |cross(p-b, a-b)|, compared unscaled to
    # avoid dividing by degenerate lengths
    np.multiply(pbx, dy, out=t_num)                           # cross product
    np.multiply(pby, dx, out=scratch)
    t_num -= scratch
    np.abs(t_num, out=t_num)
    inside &= t_num <= half_width * np.sqrt(len2)
    degenerate = (len2 == 0.0)[:, 0]
    if degenerate.any():
        np.multiply(pbx, pbx, out=t_num)
        np.multiply(pby, pby, out=scratch)
        t_num += scratch
        disk = t_num <= half_width * half_width
        inside[degenerate] = disk[degenerate]
    return inside


def rectangle_membership(
    points: np.ndarray,
    starts: np.ndarray,
    ends: np.ndarray,
    half_width: float,
) -> np.ndarray:
    """Rectangle membership with a (P, L) result; see the rows variant."""
    return rectangle_membership_rows(points, starts, ends, half_width).T


def point_segment_distance(p, segment: Segment) -> float | np.ndarray:
    """Distance from a point (or (..., 2) array of points) to one segment."""
    if np.ndim(p) == 1:
        # plain-float path; single queries are hot in evaluation loops
        (ax, ay), (bx, by) = segment
        px, py = float(p[0]), float(p[1])
        dx, dy = ax - bx, ay - by
        len2 = dx * dx + dy * dy
        pbx, pby = px - bx, py - by
        t = (pbx * dx + pby * dy) / len2 if len2 > 0.0 else 0.0
        t = min(1.0, max(0.0, t))
        ox, oy = pbx - t * dx, pby - t * dy
        return math.sqrt(ox * ox + oy * oy)
    p = np.asarray(p, dtype=np.float64)
    flat = np.atleast_2d(p.reshape(-1, 2))
    dist = segment_distances(flat, np.asarray([segment.a]), np.asarray([segment.b]))[:, 0]
    return dist.reshape(p.shape[:-1])


def in_limb_rectangle(p, segment: Segment, half_width: float) -> bool | np.ndarray:
    """Rectangle membership for a point (or point array) and one segment."""
    if np.ndim(p) == 1:
        if half_width <= 0.0:
            raise ValueError(f"half_width must be positive, got {half_width}")
        (ax, ay), (bx, by) = segment
        px, py = float(p[0]), float(p[1])
        dx, dy = ax - bx, ay - by
        len2 = dx * dx + dy * dy
        pbx, pby = px - bx, py - by
        if len2 == 0.0:
            return pbx * pbx + pby * pby <= half_width * half_width
        t_num = pbx * dx + pby * dy
        if t_num < 0.0 or t_num > len2:
            return False
        return abs(pbx * dy - pby * dx) <= half_width * math.sqrt(len2)
    p = np.asarray(p, dtype=np.float64)
    flat = np.atleast_2d(p.reshape(-1, 2))
    inside = rectangle_membership(
        flat, np.asarray([segment.a]), np.asarray([segment.b]), half_width
    )[:, 0]
    return inside.reshape(p.shape[:-1])
