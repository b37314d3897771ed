"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends run the same inputs: the case3 dilated map, random disc-center
queries, random box tests, hybrid A* arc rollouts and QP column deletions.
"""
import argparse
import importlib
import math
import timeit

import numpy as np

from tunnelpark import _kernels_py
from tunnelpark.geometry import OrientedBox
from tunnelpark.scenario import DilatedMap, load_bundled


def _cases(dmap, rng):
    packed = dmap.packed
    xmin, ymin, xmax, ymax = dmap.scenario.bounds
    pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(2000, 2))
    boxes = [OrientedBox((rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)),
                         rng.uniform(-math.pi, math.pi), rng.uniform(0.1, 1.5, size=4)).vertices
             for _ in range(300)]
    poses = rng.uniform((xmin, ymin, -math.pi), (xmax, ymax, math.pi), size=(500, 3))
    off_f, off_r = dmap.disc_offsets
    r = dmap.r_c
    q = 40
    R0 = np.triu(rng.normal(size=(q, q))) + 5.0 * np.eye(q)
    J0 = np.ascontiguousarray(np.linalg.qr(rng.normal(size=(120, 120)))[0])

    def point_clear(k):
        for x, y in pts:
            k.point_clear(x, y, packed.verts, packed.offsets, packed.aabbs, r)

    def box_clear(k):
        for b in boxes:
            k.box_clear(b, packed.verts, packed.offsets, packed.aabbs, r)

    def polygon_distance(k):
        for b in boxes[:100]:
            for obs in dmap.scenario.obstacles:
                k.polygon_distance(b, obs.vertices)

    def arc_rollout(k):
        for x, y, th in poses:
            k.arc_rollout(x, y, th, 0.6, 0.25, 6, off_f, off_r,
                          packed.verts, packed.offsets, packed.aabbs, r)

    def givens_drop(k):
        for j in range(0, q - 1, 3):
            k.givens_drop(R0.copy(), J0.copy(), j, q)

    return {"point_clear x2000": point_clear, "box_clear x300": box_clear,
            "polygon_distance x100*obs": polygon_distance, "arc_rollout x500": arc_rollout,
            "givens_drop x13": givens_drop}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        compiled = importlib.import_module("tunnelpark._kernels")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the Python kernels only")
    dmap = DilatedMap(load_bundled("case3"))
    cases = _cases(dmap, np.random.default_rng(0))
    print(f"{'kernel':28s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in cases.items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:28s} {t_py:12.2f}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {t_py:12.2f} {t_cy:12.2f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
