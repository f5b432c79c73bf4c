#!/usr/bin/env python3
"""Benchmark the compiled assembly kernels against the numpy fallback.

Times interior_energy and interior_gradient on square meshes of growing
size and reports the speedup plus the worst relative disagreement. Run:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from glvlab import _kernels_py, kernels
from glvlab.geometry import build_polygon, triangulate

try:
    from glvlab import _kernels as compiled
except ImportError:
    compiled = None


def _time(fn, *args, repeat=20):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    print(f"active backend: {kernels.backend_name()}")
    if compiled is None:
        print("compiled extension not available; nothing to compare")
        return

    rng = np.random.default_rng(7)
    square = build_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    inv_eps2 = 1.0 / 0.05 ** 2
    print(f"{'nodes':>8} {'tris':>8} | {'E py':>9} {'E cy':>9} {'x':>5} | "
          f"{'gradE py':>9} {'gradE cy':>9} {'x':>5} | {'max rel diff':>12}")
    for h in (0.05, 0.02, 0.01, 0.005):
        mesh = triangulate(square, h)
        tris = np.ascontiguousarray(mesh.triangles, dtype=np.int32)
        bmat = np.ascontiguousarray(mesh.bmat())
        areas = np.ascontiguousarray(mesh.areas())
        u = rng.normal(size=(mesh.n_nodes, 2))
        out_py = np.empty_like(u)
        out_cy = np.empty_like(u)

        e_py = _kernels_py.interior_energy(tris, bmat, areas, u, inv_eps2)
        e_cy = compiled.interior_energy(tris, bmat, areas, u, inv_eps2)
        _kernels_py.interior_gradient(tris, bmat, areas, u, inv_eps2, out_py)
        compiled.interior_gradient(tris, bmat, areas, u, inv_eps2, out_cy)
        scale = np.abs(out_py).max()
        diff = max(abs(e_py - e_cy) / abs(e_py),
                   np.abs(out_py - out_cy).max() / scale)

        t_epy = _time(_kernels_py.interior_energy, tris, bmat, areas, u, inv_eps2)
        t_ecy = _time(compiled.interior_energy, tris, bmat, areas, u, inv_eps2)
        t_gpy = _time(_kernels_py.interior_gradient, tris, bmat, areas, u,
                      inv_eps2, out_py)
        t_gcy = _time(compiled.interior_gradient, tris, bmat, areas, u,
                      inv_eps2, out_cy)
        print(f"{mesh.n_nodes:>8} {len(tris):>8} | "
              f"{t_epy * 1e3:>8.2f}m {t_ecy * 1e3:>8.2f}m {t_epy / t_ecy:>4.1f}x | "
              f"{t_gpy * 1e3:>8.2f}m {t_gcy * 1e3:>8.2f}m {t_gpy / t_gcy:>4.1f}x | "
              f"{diff:>12.2e}")


if __name__ == "__main__":
    main()
