"""
Vectorized planar geometry: distances, ray casting and rectangle tests
"""
import math
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]"""
    return math.pi - (math.pi - a) % TWO_PI


def normalize_angles(a: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - a, TWO_PI)


def polygon_edges(vertices: Sequence[Sequence[float]]) -> np.ndarray:
    """Closed polygon -> (K, 4) array of edges x0 y0 x1 y1"""
    v = np.asarray(vertices, dtype=float)
    return np.hstack([v, np.roll(v, -1, axis=0)])


def points_to_segments(points: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """
    Euclidean distance from every point to every segment

    Args:
        points: (N, 2) array
        segs: (S, 4) array of x0 y0 x1 y1

    Returns:
        (N, S) distance matrix
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(segs) == 0:
        return np.full((len(points), 0), np.inf)
    p0 = segs[:, 0:2]
    e = segs[:, 2:4] - p0
    ee = np.einsum("sk,sk->s", e, e)
    rel = points[:, None, :] - p0[None, :, :]
    t = np.einsum("nsk,sk->ns", rel, e) / np.where(ee > 0, ee, 1.0)
    t = np.clip(np.where(ee > 0, t, 0.0), 0.0, 1.0)
    closest = p0[None, :, :] + t[..., None] * e[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def closest_points_on_segments(points: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """(N, S, 2) closest point on each segment for each point"""
    p0 = segs[:, 0:2]
    e = segs[:, 2:4] - p0
    ee = np.einsum("sk,sk->s", e, e)
    rel = points[:, None, :] - p0[None, :, :]
    t = np.einsum("nsk,sk->ns", rel, e) / np.where(ee > 0, ee, 1.0)
    t = np.clip(np.where(ee > 0, t, 0.0), 0.0, 1.0)
    return p0[None, :, :] + t[..., None] * e[None, :, :]


def points_in_polygon(points: np.ndarray, vertices: Sequence[Sequence[float]]) -> np.ndarray:
    """Even-odd rule containment for (N, 2) points"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    x, y = points[:, 0:1], points[:, 1:2]
    x0, y0 = v[:, 0][None, :], v[:, 1][None, :]
    x1, y1 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    crosses = (y0 > y) != (y1 > y)
    dy = np.where(y1 - y0 == 0, 1.0, y1 - y0)
    x_int = x0 + (y - y0) * (x1 - x0) / dy
    return (np.count_nonzero(crosses & (x < x_int), axis=1) % 2) == 1


def ray_segment_hits(origin: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """
    Distance along each unit ray to the first segment it meets

    Args:
        origin: (2,) ray origin
        dirs: (R, 2) unit directions
        segs: (S, 4) segments

    Returns:
        (R,) distances, inf where nothing is hit
    """
    if len(segs) == 0:
        return np.full(len(dirs), np.inf)
    p = segs[:, 0:2] - origin[None, :]
    e = segs[:, 2:4] - segs[:, 0:2]
    dx, dy = dirs[:, 0:1], dirs[:, 1:2]
    denom = dx * e[None, :, 1] - dy * e[None, :, 0]
    ok = np.abs(denom) > 1e-12
    safe = np.where(ok, denom, 1.0)
    t = (p[None, :, 0] * e[None, :, 1] - p[None, :, 1] * e[None, :, 0]) / safe
    u = (p[None, :, 0] * dy - p[None, :, 1] * dx) / safe
    hit = ok & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf).min(axis=1)


def ray_circle_hits(origin: np.ndarray, dirs: np.ndarray, circles: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to the nearest circle; 0 when the origin is inside one"""
    if len(circles) == 0:
        return np.full(len(dirs), np.inf)
    oc = origin[None, :] - circles[:, 0:2]
    b = dirs @ oc.T
    cc = np.einsum("ck,ck->c", oc, oc) - circles[:, 2] ** 2
    disc = b * b - cc[None, :]
    root = np.sqrt(np.maximum(disc, 0.0))
    t1 = -b - root
    t2 = -b + root
    t = np.where(t1 >= 0.0, t1, np.where(t2 >= 0.0, 0.0, np.inf))
    t = np.where(cc[None, :] <= 0.0, 0.0, t)
    t = np.where(disc >= 0.0, t, np.inf)
    return t.min(axis=1)


def points_to_rects(points: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Distance from each point to each closed axis-aligned rect (x0 y0 x1 y1); (N, M)"""
    points = np.atleast_2d(points)
    dx = np.maximum(np.maximum(rects[None, :, 0] - points[:, 0:1], points[:, 0:1] - rects[None, :, 2]), 0.0)
    dy = np.maximum(np.maximum(rects[None, :, 1] - points[:, 1:2], points[:, 1:2] - rects[None, :, 3]), 0.0)
    return np.hypot(dx, dy)


def segment_intersects_rects(seg: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Liang-Barsky clip of one segment against (M, 4) rects"""
    x0, y0, x1, y1 = seg
    t_lo = np.zeros(len(rects))
    t_hi = np.ones(len(rects))
    ok = np.ones(len(rects), dtype=bool)
    for p, d, lo, hi in ((x0, x1 - x0, rects[:, 0], rects[:, 2]), (y0, y1 - y0, rects[:, 1], rects[:, 3])):
        if d == 0.0:
            ok &= (p >= lo) & (p <= hi)
        else:
            ta = (lo - p) / d
            tb = (hi - p) / d
            t_lo = np.maximum(t_lo, np.minimum(ta, tb))
            t_hi = np.minimum(t_hi, np.maximum(ta, tb))
    return ok & (t_lo <= t_hi)


def segment_to_rects(seg: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Distance between one segment and each rect; 0 when they intersect"""
    seg = np.asarray(seg, dtype=float)
    ends = points_to_rects(seg.reshape(2, 2), rects).min(axis=0)
    corners = np.concatenate([
        rects[:, [0, 1]], rects[:, [2, 1]], rects[:, [2, 3]], rects[:, [0, 3]],
    ])
    corner_d = points_to_segments(corners, seg[None, :])[:, 0].reshape(4, len(rects)).min(axis=0)
    d = np.minimum(ends, corner_d)
    return np.where(segment_intersects_rects(seg, rects), 0.0, d)


def relative_polar(pose: Sequence[float], point: Sequence[float]):
    """(distance, bearing) of a world point in the frame of pose (x, y, heading)"""
    dx = point[0] - pose[0]
    dy = point[1] - pose[1]
    return math.hypot(dx, dy), normalize_angle(math.atan2(dy, dx) - pose[2])


def polar_to_world(pose: Sequence[float], d: float, theta: float):
    a = pose[2] + theta
    return pose[0] + d * math.cos(a), pose[1] + d * math.sin(a)
