"""Independent reference implementations used by several test modules."""

import math

import numpy as np


def segment_hits_box(ax, ay, bx, by, x0, y0, x1, y1) -> bool:
    """Liang-Barsky clip of segment a->b against the closed box [x0,x1]x[y0,y1]."""
    dx, dy = bx - ax, by - ay
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, ax - x0), (dx, x1 - ax), (-dy, ay - y0), (dy, y1 - ay)):
        if p == 0:
            if q < 0:
                return False
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return False
    return True


def exact_segment_feasible(feasible, res, a, b) -> bool:
    h, w = feasible.shape
    for i in range(h):
        for j in range(w):
            if not feasible[i, j] and segment_hits_box(a[0], a[1], b[0], b[1],
                                                       j * res, i * res, (j + 1) * res, (i + 1) * res):
                return False
    return True


def dense_segment_feasible(feasible, res, a, b, n=1000) -> bool:
    for t in np.linspace(0.0, 1.0, n):
        x = a[0] + t * (b[0] - a[0])
        y = a[1] + t * (b[1] - a[1])
        i, j = math.floor(y / res), math.floor(x / res)
        if not feasible[i, j]:
            return False
    return True


def brute_argmax(pmap, x_start, x_prev, w):
    """Score every feasible, directly reachable cell center from scratch."""
    res = pmap.resolution
    claimed = np.argwhere(pmap.claimed)
    cx = pmap.origin[0] + (claimed[:, 1] + 0.5) * res
    cy = pmap.origin[1] + (claimed[:, 0] + 0.5) * res
    best = None
    h, wd = pmap.shape
    for i in range(h):
        for j in range(wd):
            if not pmap.feasible[i, j]:
                continue
            x = (pmap.origin[0] + (j + 0.5) * res, pmap.origin[1] + (i + 0.5) * res)
            if not exact_segment_feasible(pmap.feasible, res, x_start, x):
                continue
            S = np.hypot(cx - x[0], cy - x[1]).min() if len(cx) else math.inf
            D = math.dist(x, x_start)
            H = 0.0 if x_prev is None else math.dist(x, x_prev)
            q = (w[0] * S if w[0] else 0.0) - w[1] * D - w[2] * pmap.U[i, j] - w[3] * H
            key = (-q, D, x[0], x[1])
            if best is None or key < best[0]:
                best = (key, x)
    return None if best is None else best[1]
