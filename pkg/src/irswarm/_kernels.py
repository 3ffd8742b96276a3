"""Numeric inner loops for channel geometry.

Everything here is trig-free scalar arithmetic over float64 (headings enter
as unit vectors, cone width as a precomputed cosine), so the JIT-compiled
and interpreted paths produce bit-identical results.

The functions are compiled with numba's ``@njit`` when it is importable,
unless the environment variable ``IRSWARM_NUMBA`` is set to ``0``/``off``/
``false``, in which case the plain Python definitions below run as-is.
``NUMBA_ENABLED`` records which path is active; an active dispatcher keeps
the interpreted original on its ``py_func`` attribute.
"""

from __future__ import annotations

import math
import os

import numpy as np


def segment_blocks(ax, ay, bx, by, x1, y1, x2, y2):
    """True if the closed segment (x1,y1)-(x2,y2) meets the open segment a-b.

    Touching either endpoint of a-b does not count; touching an endpoint of
    the blocking segment does.  a and b must be distinct points.
    """
    rx = bx - ax
    ry = by - ay
    sx = x2 - x1
    sy = y2 - y1
    qx = x1 - ax
    qy = y1 - ay
    denom = rx * sy - ry * sx
    if denom != 0.0:
        t = (qx * sy - qy * sx) / denom
        u = (qx * ry - qy * rx) / denom
        return 0.0 < t < 1.0 and 0.0 <= u <= 1.0
    if qx * ry - qy * rx != 0.0:
        return False
    # collinear: project the blocker onto a-b and test interval overlap
    rr = rx * rx + ry * ry
    t0 = (qx * rx + qy * ry) / rr
    t1 = t0 + (sx * rx + sy * ry) / rr
    lo = min(t0, t1)
    hi = max(t0, t1)
    return hi > 0.0 and lo < 1.0


def los_clear(ax, ay, bx, by, obstacles):
    """True if no row of obstacles (x1, y1, x2, y2) blocks the open segment a-b."""
    for k in range(obstacles.shape[0]):
        if segment_blocks(
            ax, ay, bx, by,
            obstacles[k, 0], obstacles[k, 1], obstacles[k, 2], obstacles[k, 3],
        ):
            return False
    return True


def ray_nearest_hit(px, py, dx, dy, obstacles):
    """Nearest forward intersection of a ray with the obstacle rows.

    (dx, dy) must be a unit vector.  Returns (distance, row index), or
    (inf, -1) when nothing is hit.  Rays parallel to a segment never hit it
    (an edge-on surface has zero cross-section).  Ties go to the earlier row.
    """
    best_t = math.inf
    best_k = -1
    for k in range(obstacles.shape[0]):
        x1 = obstacles[k, 0]
        y1 = obstacles[k, 1]
        sx = obstacles[k, 2] - x1
        sy = obstacles[k, 3] - y1
        denom = dx * sy - dy * sx
        if denom == 0.0:
            continue
        qx = x1 - px
        qy = y1 - py
        t = (qx * sy - qy * sx) / denom
        u = (qx * dy - qy * dx) / denom
        if t >= 0.0 and 0.0 <= u <= 1.0 and t < best_t:
            best_t = t
            best_k = k
    return best_t, best_k


def reach_table(ex, ey, edx, edy, rx, ry, obstacles, max_range, cos_half_angle):
    """Which emitters reach which receivers, and at what distance.

    Emitter j reaches receiver i when the receiver lies within max_range,
    inside the emission cone (dot product against the emitter's unit heading
    (edx, edy) at least cos_half_angle), and in line of sight.  A receiver
    coincident with the emitter is always reached.  Returns a (receivers x
    emitters) bool matrix plus the matching distance matrix.
    """
    n_r = rx.shape[0]
    n_e = ex.shape[0]
    reaches = np.zeros((n_r, n_e), dtype=np.bool_)
    dists = np.zeros((n_r, n_e), dtype=np.float64)
    for i in range(n_r):
        for j in range(n_e):
            vx = rx[i] - ex[j]
            vy = ry[i] - ey[j]
            d = math.sqrt(vx * vx + vy * vy)
            dists[i, j] = d
            if d > max_range:
                continue
            if d == 0.0:
                reaches[i, j] = True
                continue
            if edx[j] * vx + edy[j] * vy < cos_half_angle * d:
                continue
            if los_clear(ex[j], ey[j], rx[i], ry[i], obstacles):
                reaches[i, j] = True
    return reaches, dists


def _numba_requested() -> bool:
    return os.environ.get("IRSWARM_NUMBA", "auto").strip().lower() not in (
        "0",
        "off",
        "false",
    )


NUMBA_ENABLED = False

if _numba_requested():
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        # Rebind in dependency order so the later kernels call the compiled
        # versions of the earlier ones.
        segment_blocks = njit(cache=True)(segment_blocks)
        los_clear = njit(cache=True)(los_clear)
        ray_nearest_hit = njit(cache=True)(ray_nearest_hit)
        reach_table = njit(cache=True)(reach_table)
        NUMBA_ENABLED = True
