# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; a line-for-line port of ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, floor, fabs, INFINITY
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

cdef double TIE_EPS = 1e-12


cdef double _grid_hit(const unsigned char[:, :] occ, double ox, double oy, double res,
                      double px, double py, double dx, double dy, double max_range) noexcept nogil:
    cdef Py_ssize_t h = occ.shape[0], w = occ.shape[1]
    cdef double fx = (px - ox) / res
    cdef double fy = (py - oy) / res
    cdef long j = <long>floor(fx)
    cdef long i = <long>floor(fy)
    cdef long sx, sy
    cdef double tmx, tmy, tdx, tdy, t
    if i < 0 or i >= h or j < 0 or j >= w:
        return INFINITY
    if occ[i, j]:
        return 0.0
    if dx > 0.0:
        sx = 1
        tmx = (<double>(j + 1) - fx) * res / dx
        tdx = res / dx
    elif dx < 0.0:
        sx = -1
        tmx = (<double>j - fx) * res / dx
        tdx = -res / dx
    else:
        sx = 0
        tmx = INFINITY
        tdx = INFINITY
    if dy > 0.0:
        sy = 1
        tmy = (<double>(i + 1) - fy) * res / dy
        tdy = res / dy
    elif dy < 0.0:
        sy = -1
        tmy = (<double>i - fy) * res / dy
        tdy = -res / dy
    else:
        sy = 0
        tmy = INFINITY
        tdy = INFINITY
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
            return INFINITY
        if i < 0 or i >= h or j < 0 or j >= w:
            return INFINITY
        if occ[i, j]:
            return t


def cast_rays(const unsigned char[:, :] occ, double ox, double oy, double res,
              double px, double py, const double[:] angles, double max_range,
              const double[:, :] discs):
    cdef Py_ssize_t n = angles.shape[0], m = discs.shape[0], k, q
    ranges_arr = np.full(n, np.inf)
    source_arr = np.full(n, -2, dtype=np.int64)
    cdef double[:] ranges = ranges_arr
    cdef long long[:] source = source_arr
    cdef double a, dx, dy, best, ex, ey, rad, c, b, disc, t
    cdef long long src
    with nogil:
        for k in range(n):
            a = angles[k]
            dx = cos(a)
            dy = sin(a)
            best = _grid_hit(occ, ox, oy, res, px, py, dx, dy, max_range)
            src = -1 if best != INFINITY else -2
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
                    t = b - sqrt(disc)
                if t <= max_range and t < best:
                    best = t
                    src = q
            ranges[k] = best
            source[k] = src
    return ranges_arr, source_arr


def integrate_rays(double[:, :] tsdf, double[:, :] weight, unsigned char[:, :] free_mark,
                   unsigned char[:, :] occ_mark, double ox, double oy, double res,
                   double px, double py, const double[:, :] points,
                   const unsigned char[:] dynamic, double tau, double w_new, double w_max):
    cdef Py_ssize_t h = tsdf.shape[0], w = tsdf.shape[1], n = points.shape[0], k
    cdef double ex, ey, r, dx, dy, t_end, fx, fy, tmx, tmy, tdx, tdy, t_in, t_out
    cdef double cx, cy, sdf, w0, w1
    cdef long i, j, sx, sy
    cdef int phase
    cdef bint is_dyn
    with nogil:
        for k in range(n):
            ex = points[k, 0] - px
            ey = points[k, 1] - py
            r = sqrt(ex * ex + ey * ey)
            if r <= 0.0:
                continue
            dx = ex / r
            dy = ey / r
            is_dyn = dynamic[k] != 0
            t_end = r if is_dyn else r + tau
            fx = (px - ox) / res
            fy = (py - oy) / res
            j = <long>floor(fx)
            i = <long>floor(fy)
            if dx > 0.0:
                sx = 1
                tmx = (<double>(j + 1) - fx) * res / dx
                tdx = res / dx
            elif dx < 0.0:
                sx = -1
                tmx = (<double>j - fx) * res / dx
                tdx = -res / dx
            else:
                sx = 0
                tmx = INFINITY
                tdx = INFINITY
            if dy > 0.0:
                sy = 1
                tmy = (<double>(i + 1) - fy) * res / dy
                tdy = res / dy
            elif dy < 0.0:
                sy = -1
                tmy = (<double>i - fy) * res / dy
                tdy = -res / dy
            else:
                sy = 0
                tmy = INFINITY
                tdy = INFINITY
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
                cx = ox + (<double>j + 0.5) * res
                cy = oy + (<double>i + 0.5) * res
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


cdef inline bint _cell_blocks(const unsigned char[:, :] feasible, const unsigned char[:, :] hard,
                              long i, long j, bint* prefix, bint* first) noexcept nogil:
    cdef Py_ssize_t h = feasible.shape[0], w = feasible.shape[1]
    cdef bint was_first
    if i < 0 or i >= h or j < 0 or j >= w:
        return True
    was_first = first[0]
    first[0] = False
    if prefix[0]:
        if feasible[i, j]:
            prefix[0] = False
            return False
        return (not was_first) and hard[i, j] != 0
    return not feasible[i, j]


def segment_feasible(const unsigned char[:, :] feasible, const unsigned char[:, :] hard,
                     double ox, double oy, double res, double ax, double ay,
                     double bx, double by, bint escape):
    cdef double fx = (ax - ox) / res
    cdef double fy = (ay - oy) / res
    cdef double gx = (bx - ox) / res
    cdef double gy = (by - oy) / res
    cdef long j = <long>floor(fx)
    cdef long i = <long>floor(fy)
    cdef long sx, sy
    cdef double ex, ey, tmx, tmy, tdx, tdy, tmin
    cdef bint prefix = escape
    cdef bint first = True
    if _cell_blocks(feasible, hard, i, j, &prefix, &first):
        return False
    ex = gx - fx
    ey = gy - fy
    if ex > 0.0:
        sx = 1
        tmx = (<double>(j + 1) - fx) / ex
        tdx = 1.0 / ex
    elif ex < 0.0:
        sx = -1
        tmx = (<double>j - fx) / ex
        tdx = -1.0 / ex
    else:
        sx = 0
        tmx = INFINITY
        tdx = INFINITY
    if ey > 0.0:
        sy = 1
        tmy = (<double>(i + 1) - fy) / ey
        tdy = 1.0 / ey
    elif ey < 0.0:
        sy = -1
        tmy = (<double>i - fy) / ey
        tdy = -1.0 / ey
    else:
        sy = 0
        tmy = INFINITY
        tdy = INFINITY
    while True:
        tmin = tmx if tmx < tmy else tmy
        if tmin > 1.0:
            return True
        if fabs(tmx - tmy) < TIE_EPS:
            if _cell_blocks(feasible, hard, i, j + sx, &prefix, &first):
                return False
            if _cell_blocks(feasible, hard, i + sy, j, &prefix, &first):
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
        if _cell_blocks(feasible, hard, i, j, &prefix, &first):
            return False


ctypedef pair[double, long long] QItem


def grid_dijkstra(const unsigned char[:, :] passable, const double[:, :] cost, double res,
                  double lam, long si, long sj, long gi, long gj):
    cdef long h = passable.shape[0], w = passable.shape[1]
    cdef long long size = h * w
    dist_arr = np.full(size, np.inf)
    prev_arr = np.full(size, -1, dtype=np.int64)
    cdef double[:] dist = dist_arr
    cdef long long[:] prev = prev_arr
    cdef long long s = si * w + sj
    cdef long long g = gi * w + gj
    # max-heap over negated (cost, index) pops in the same order as heapq
    cdef priority_queue[QItem] heap
    cdef QItem top
    cdef double d, nd, step
    cdef double diag = res * sqrt(2.0)
    cdef long long u, v
    cdef long ui, uj, vi, vj, di, dj
    dist[s] = 0.0
    heap.push(QItem(-0.0, -s))
    with nogil:
        while not heap.empty():
            top = heap.top()
            heap.pop()
            d = -top.first
            u = -top.second
            if d > dist[u]:
                continue
            if u == g:
                break
            ui = <long>(u // w)
            uj = <long>(u - ui * w)
            for di in range(-1, 2):
                for dj in range(-1, 2):
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
                        heap.push(QItem(-nd, -v))
    if dist[g] == np.inf:
        return np.zeros((0, 2), dtype=np.int64)
    cells = []
    u = g
    while u != -1:
        cells.append((u // w, u % w))
        u = prev[u]
    cells.reverse()
    return np.array(cells, dtype=np.int64)
