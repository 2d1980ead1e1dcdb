"""Pure-Python hot kernels.

Reference implementation of the grid traversal kernels. ``_ckernels.pyx`` mirrors
every arithmetic step of this file so the two backends agree bit for bit; keep
them in lockstep when editing either one.

Grid convention shared by all kernels: arrays are indexed ``[row, col]`` with
``row`` along +y and ``col`` along +x; cell ``(i, j)`` covers
``[ox + j*res, ox + (j+1)*res) x [oy + i*res, oy + (i+1)*res)``.
"""

import heapq
import math

import numpy as np

INF = math.inf
SQRT2 = math.sqrt(2.0)
TIE_EPS = 1e-12


def _grid_hit(occ, ox, oy, res, px, py, dx, dy, max_range):
    h, w = occ.shape
    fx = (px - ox) / res
    fy = (py - oy) / res
    j = math.floor(fx)
    i = math.floor(fy)
    if i < 0 or i >= h or j < 0 or j >= w:
        return INF
    if occ[i, j]:
        return 0.0
    if dx > 0.0:
        sx = 1
        tmx = ((j + 1) - fx) * res / dx
        tdx = res / dx
    elif dx < 0.0:
        sx = -1
        tmx = (j - fx) * res / dx
        tdx = -res / dx
    else:
        sx = 0
        tmx = INF
        tdx = INF
    if dy > 0.0:
        sy = 1
        tmy = ((i + 1) - fy) * res / dy
        tdy = res / dy
    elif dy < 0.0:
        sy = -1
        tmy = (i - fy) * res / dy
        tdy = -res / dy
    else:
        sy = 0
        tmy = INF
        tdy = INF
    while True:
        if tmx < tmy:
            t = tmx
            j += sx
            tmx += tdx
        else:
            t = tmy
            i += sy
            tmy += tdy
        if t > max_range:
            return INF
        if i < 0 or i >= h or j < 0 or j >= w:
            return INF
        if occ[i, j]:
            return t


def cast_rays(occ, ox, oy, res, px, py, angles, max_range, discs):
    """Range to the first static cell or disc along each beam.

    Returns ``(ranges, source)``: ``ranges[k]`` is ``inf`` when nothing is hit within
    ``max_range``; ``source[k]`` is -1 for a static cell, the disc row index for a
    disc, and -2 for no hit.
    """
    n = angles.shape[0]
    m = discs.shape[0]
    ranges = np.full(n, INF)
    source = np.full(n, -2, dtype=np.int64)
    for k in range(n):
        a = angles[k]
        dx = math.cos(a)
        dy = math.sin(a)
        best = _grid_hit(occ, ox, oy, res, px, py, dx, dy, max_range)
        src = -1 if best != INF else -2
        for q in range(m):
            ex = discs[q, 0] - px
            ey = discs[q, 1] - py
            rad = discs[q, 2]
            c = ex * ex + ey * ey - rad * rad
            if c <= 0.0:
                t = 0.0
            else:
                b = ex * dx + ey * dy
                if b <= 0.0:
                    continue
                disc = b * b - c
                if disc < 0.0:
                    continue
                t = b - math.sqrt(disc)
            if t <= max_range and t < best:
                best = t
                src = q
        ranges[k] = best
        source[k] = src
    return ranges, source


def integrate_rays(tsdf, weight, free_mark, occ_mark, ox, oy, res, px, py,
                   points, dynamic, tau, w_new, w_max):
    """Fuse one frame of rays into the TSDF arrays in place.

    Static rays update every traversed cell out to ``r + tau``; the cell holding the
    return is marked occupied and the cells before it free. Dynamic rays only
    contribute the free stretch in front of the return.
    """
    h, w = tsdf.shape
    n = points.shape[0]
    for k in range(n):
        ex = points[k, 0] - px
        ey = points[k, 1] - py
        r = math.sqrt(ex * ex + ey * ey)
        if r <= 0.0:
            continue
        dx = ex / r
        dy = ey / r
        is_dyn = dynamic[k] != 0
        t_end = r if is_dyn else r + tau
        fx = (px - ox) / res
        fy = (py - oy) / res
        j = math.floor(fx)
        i = math.floor(fy)
        if dx > 0.0:
            sx = 1
            tmx = ((j + 1) - fx) * res / dx
            tdx = res / dx
        elif dx < 0.0:
            sx = -1
            tmx = (j - fx) * res / dx
            tdx = -res / dx
        else:
            sx = 0
            tmx = INF
            tdx = INF
        if dy > 0.0:
            sy = 1
            tmy = ((i + 1) - fy) * res / dy
            tdy = res / dy
        elif dy < 0.0:
            sy = -1
            tmy = (i - fy) * res / dy
            tdy = -res / dy
        else:
            sy = 0
            tmy = INF
            tdy = INF
        t_in = 0.0
        while True:
            if i < 0 or i >= h or j < 0 or j >= w:
                break
            t_out = tmx if tmx < tmy else tmy
            if t_out < r:
                phase = 0
            elif t_in <= r:
                phase = 1
            else:
                phase = 2
            if phase == 1 and is_dyn:
                break
            cx = ox + (j + 0.5) * res
            cy = oy + (i + 0.5) * res
            sdf = r - ((cx - px) * dx + (cy - py) * dy)
            if sdf > tau:
                sdf = tau
            elif sdf < -tau:
                sdf = -tau
            w0 = weight[i, j]
            tsdf[i, j] = (tsdf[i, j] * w0 + sdf * w_new) / (w0 + w_new)
            w1 = w0 + w_new
            weight[i, j] = w1 if w1 < w_max else w_max
            if phase == 0:
                free_mark[i, j] = 1
            elif phase == 1:
                occ_mark[i, j] = 1
            if tmx < tmy:
                t_in = tmx
                j += sx
                tmx += tdx
            else:
                t_in = tmy
                i += sy
                tmy += tdy
            if t_in > t_end:
                break


def _cell_blocks(feasible, hard, i, j, state):
    # state[0]: still inside the escape prefix; state[1]: first cell pending
    h, w = feasible.shape
    if i < 0 or i >= h or j < 0 or j >= w:
        return True
    first = state[1]
    state[1] = False
    if state[0]:
        if feasible[i, j]:
            state[0] = False
            return False
        return (not first) and hard[i, j] != 0
    return not feasible[i, j]


def segment_feasible(feasible, hard, ox, oy, res, ax, ay, bx, by, escape):
    """Supercover test of the segment a->b against the feasible mask.

    Every cell the closed segment touches must be feasible. With ``escape`` the
    leading run of infeasible cells is tolerated as long as none of them (other
    than the starting cell) is marked ``hard``.
    """
    fx = (ax - ox) / res
    fy = (ay - oy) / res
    gx = (bx - ox) / res
    gy = (by - oy) / res
    j = math.floor(fx)
    i = math.floor(fy)
    state = [bool(escape), True]
    if _cell_blocks(feasible, hard, i, j, state):
        return False
    ex = gx - fx
    ey = gy - fy
    if ex > 0.0:
        sx = 1
        tmx = ((j + 1) - fx) / ex
        tdx = 1.0 / ex
    elif ex < 0.0:
        sx = -1
        tmx = (j - fx) / ex
        tdx = -1.0 / ex
    else:
        sx = 0
        tmx = INF
        tdx = INF
    if ey > 0.0:
        sy = 1
        tmy = ((i + 1) - fy) / ey
        tdy = 1.0 / ey
    elif ey < 0.0:
        sy = -1
        tmy = (i - fy) / ey
        tdy = -1.0 / ey
    else:
        sy = 0
        tmy = INF
        tdy = INF
    while True:
        tmin = tmx if tmx < tmy else tmy
        if tmin > 1.0:
            return True
        if abs(tmx - tmy) < TIE_EPS:
            if _cell_blocks(feasible, hard, i, j + sx, state):
                return False
            if _cell_blocks(feasible, hard, i + sy, j, state):
                return False
            i += sy
            j += sx
            tmx += tdx
            tmy += tdy
        elif tmx < tmy:
            j += sx
            tmx += tdx
        else:
            i += sy
            tmy += tdy
        if _cell_blocks(feasible, hard, i, j, state):
            return False


def grid_dijkstra(passable, cost, res, lam, si, sj, gi, gj):
    """8-connected shortest path between two cells.

    Entering cell ``v`` costs ``step_length + lam * cost[v]``; diagonal moves may not
    cut the corner of an impassable cell. Returns an ``(n, 2)`` int array of cells
    from start to goal, empty when the goal is unreachable.
    """
    h, w = passable.shape
    size = h * w
    dist = np.full(size, INF)
    prev = np.full(size, -1, dtype=np.int64)
    s = si * w + sj
    g = gi * w + gj
    dist[s] = 0.0
    heap = [(0.0, s)]
    diag = res * SQRT2
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        if u == g:
            break
        ui = u // w
        uj = u - ui * w
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                vi = ui + di
                vj = uj + dj
                if vi < 0 or vi >= h or vj < 0 or vj >= w:
                    continue
                if not passable[vi, vj]:
                    continue
                if di != 0 and dj != 0:
                    if not passable[ui + di, uj] or not passable[ui, uj + dj]:
                        continue
                    step = diag
                else:
                    step = res
                nd = d + step + lam * cost[vi, vj]
                v = vi * w + vj
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = u
                    heapq.heappush(heap, (nd, v))
    if dist[g] == INF:
        return np.zeros((0, 2), dtype=np.int64)
    cells = []
    u = g
    while u != -1:
        cells.append((u // w, u % w))
        u = prev[u]
    cells.reverse()
    return np.array(cells, dtype=np.int64)
