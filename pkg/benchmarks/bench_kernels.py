"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both paths are called directly, so the comparison runs in one process
regardless of MHOF_DISABLE_NUMBA. Results are checked for agreement first.
"""

import argparse
import time

import numpy as np

from mhof import _kernels as K
from mhof.plant import OptimizerState, ProblemSpec
from mhof.schemes import SchemeConfig, run


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    for dim, n in ((2, 200), (3, 60), (4, 25), (5, 15)):
        pts = rng.uniform(0.0, 1.0, size=(n, dim))
        # points on a curved front keep most of them non-dominated
        pts[:, -1] = np.clip(1.0 - np.linalg.norm(pts[:, :-1], axis=1) / np.sqrt(dim - 1), 0.0, 0.99)
        yield dim, n, np.ascontiguousarray(pts), np.ones(dim)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=10**6)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is unavailable or disabled; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'case':<14}{'numpy s':>12}{'numba s':>12}{'speedup':>10}")
    for dim, n, pts, ref in cases(rng):
        mask = K.nondominated_mask_np(pts)
        assert np.array_equal(mask, K.nondominated_mask_nb(pts))
        front = np.ascontiguousarray(pts[mask])
        a, b = K.hv_np(front, ref), K.hv_nb(front, ref)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
        lo = pts.min(axis=0)
        assert K.mc_count_np(pts, lo, ref, 1000, 1) == K.mc_count_nb(pts, lo, ref, 1000, 1)
        label = f"d+1={dim} n={n}"
        rows = [
            ("nondominated_mask", lambda: K.nondominated_mask_np(pts), lambda: K.nondominated_mask_nb(pts)),
            ("hv sweep", lambda: K.hv_np(front, ref), lambda: K.hv_nb(front, ref)),
            ("mc count", lambda: K.mc_count_np(pts, lo, ref, args.samples, 1),
             lambda: K.mc_count_nb(pts, lo, ref, args.samples, 1)),
        ]
        for name, f_np, f_nb in rows:
            t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
            print(f"{name:<22}{label:<14}{t_np:>12.5f}{t_nb:>12.5f}{t_np / t_nb:>9.1f}x")

    # end to end: a full run spends most of its eHV time in the kernels
    spec = ProblemSpec("quadratic", d=3, p=4, seed=0)
    cfg = SchemeConfig("mhof", B=500)
    timings = {}
    for backend in ("numpy", "numba"):
        saved = K.set_backend(backend)
        try:
            run(spec, OptimizerState(), SchemeConfig("mhof", B=5), 0)
            timings[backend] = best_of(lambda: run(spec, OptimizerState(), cfg, 0), max(1, args.repeat // 2))
        finally:
            K.set_backend(saved)
    print(f"{'run (d=3, B=500)':<22}{'':<14}{timings['numpy']:>12.5f}{timings['numba']:>12.5f}"
          f"{timings['numpy'] / timings['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
