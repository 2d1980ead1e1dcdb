"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the same inputs in both backends; outputs are checked for
exact equality before timings are reported.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from yieldnav import _pykernels as py

try:
    from yieldnav import _ckernels as cy
except ImportError:  # extension not built
    cy = None


def _room(n: int = 120, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    occ = np.zeros((n, n), dtype=np.uint8)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = 1
    for _ in range(25):
        i, j = rng.integers(5, n - 12, size=2)
        h, w = rng.integers(2, 10, size=2)
        occ[i:i + h, j:j + w] = 1
    occ[n // 2 - 2:n // 2 + 2, n // 2 - 2:n // 2 + 2] = 0
    return occ


def cases(res: float = 0.1):
    occ = _room()
    n = occ.shape[0]
    c = n * res / 2
    angles = np.ascontiguousarray(0.3 + 2 * math.pi / 720 * np.arange(720))
    discs = np.array([[c + 2.0, c + 0.5, 0.25], [c - 3.0, c - 1.0, 0.3]])

    def cast(k):
        return k.cast_rays(occ, 0.0, 0.0, res, c, c, angles, 12.0, discs)

    ranges, _ = cast(py)
    hit = np.isfinite(ranges)
    pts = np.column_stack((c + ranges[hit] * np.cos(angles[hit]), c + ranges[hit] * np.sin(angles[hit])))
    dyn = np.zeros(len(pts), dtype=np.uint8)
    dyn[::7] = 1

    def integrate(k):
        tsdf = np.zeros(occ.shape)
        w = np.zeros(occ.shape)
        free = np.zeros(occ.shape, dtype=np.uint8)
        hitm = np.zeros(occ.shape, dtype=np.uint8)
        k.integrate_rays(tsdf, w, free, hitm, 0.0, 0.0, res, c, c, pts, dyn, 3 * res, 1.0, 100.0)
        return tsdf, w, free, hitm

    feas = (1 - occ).astype(np.uint8)
    hard = occ.copy()
    rng = np.random.default_rng(1)
    segs = rng.uniform(0.05, n * res - 0.05, size=(2000, 4))

    def segments(k):
        return np.array([k.segment_feasible(feas, hard, 0.0, 0.0, res, *s, False) for s in segs])

    cost = np.ascontiguousarray(rng.uniform(0.0, 50.0, size=occ.shape))
    si = sj = n // 2
    free_cells = np.argwhere(feas == 1)
    goal = free_cells[len(free_cells) // 3]

    def dijkstra(k):
        return k.grid_dijkstra(feas, cost, res, 0.01, si, sj, int(goal[0]), int(goal[1]))

    return {"cast_rays": cast, "integrate_rays": integrate,
            "segment_feasible x2000": segments, "grid_dijkstra": dijkstra}


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def _time(fn, mod, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(mod)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<24}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}  equal")
    for name, fn in cases().items():
        tp = _time(fn, py, args.repeat)
        if cy is None:
            print(f"{name:<24}{tp * 1e3:>14.2f}{'-':>14}{'-':>10}  -")
            continue
        tc = _time(fn, cy, args.repeat)
        eq = _same(fn(py), fn(cy))
        print(f"{name:<24}{tp * 1e3:>14.2f}{tc * 1e3:>14.2f}{tp / tc:>9.1f}x  {eq}")


if __name__ == "__main__":
    main()
