"""Compare the compiled and pure-Python element kernels.

    python3 benchmarks/bench_kernel.py [--seeds 200 800 3200] [--repeat 3]

Times the batched local operators (``element_batch``) and the per-element
estimator residuals on Lloyd-relaxed Voronoi meshes, and checks that both
backends agree.
"""

import argparse
import time

import numpy as np

from platevem.backend import BACKENDS, element_batch
from platevem.mesh import generate_voronoi


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[200, 800, 3200])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if "compiled" not in BACKENDS:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'seeds':>6} {'elements':>8} {'kernel':>8} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8} {'max rel diff':>13}")
    for n in args.seeds:
        mesh = generate_voronoi(n, lloyd_iters=3, rng_seed=0)
        u = np.random.default_rng(0).standard_normal(3 * mesh.num_vertices)
        res = {}
        for name in ("python", "compiled"):
            t_b, batch = best_of(lambda: element_batch(mesh, backend=name), args.repeat)
            t_r, resid = best_of(lambda: batch.residuals(u), args.repeat)
            res[name] = (t_b, t_r, batch, resid)
        (pb, pr, bp, rp), (cb, cr, bc, rc) = res["python"], res["compiled"]
        diff_b = np.abs(bp.A - bc.A).max() / np.abs(bp.A).max()
        diff_r = max(np.abs(x - y).max() / max(np.abs(x).max(), 1e-300) for x, y in zip(rp, rc))
        print(f"{n:>6} {mesh.num_polygons:>8} {'batch':>8} {pb:>11.4f} {cb:>13.4f} {pb / cb:>8.1f} {diff_b:>13.2e}")
        print(f"{'':>6} {'':>8} {'residual':>8} {pr:>11.4f} {cr:>13.4f} {pr / cr:>8.1f} {diff_r:>13.2e}")


if __name__ == "__main__":
    main()
