"""Compiled vs numpy kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py [--reps 5]
"""

import argparse
import time

import numpy as np

from rapidmem import kernels
from rapidmem.sensitivity import failure_alerts, random_orders
from rapidmem.topology import neighbors_from_rings, ring_orders


def best_of(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(seed=0):
    rng = np.random.default_rng(seed)
    n, K = 1000, 10
    obs, _ = neighbors_from_rings(ring_orders(rng.integers(0, 2 ** 64, n, dtype=np.uint64), K))
    failed = rng.choice(n, size=8, replace=False)
    subj, slot, sobs = failure_alerts(obs, failed)
    orders = random_orders(rng, n - 8, len(subj))
    nbrs = np.concatenate([obs, neighbors_from_rings(ring_orders(
        rng.integers(0, 2 ** 64, n, dtype=np.uint64), K))[1]], axis=1)
    X = rng.standard_normal((n, 4))
    return (orders, subj, slot, sobs, 8, 3), (nbrs, X)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    cd_args, ns_args = cases()
    backends = [("python", kernels.python)]
    if kernels.compiled is not None:
        backends.append(("compiled", kernels.compiled))
    else:
        print("compiled kernels not built; showing the fallback only")
    print(f"{'kernel':<22}{'backend':<10}{'best (ms)':>12}")
    timings = {}
    for name, mod in backends:
        timings[("cut_detection_batch", name)] = best_of(
            lambda: mod.cut_detection_batch(*cd_args), args.reps)
        timings[("neighbor_sum", name)] = best_of(
            lambda: mod.neighbor_sum(*ns_args), args.reps * 20)
    for (kernel, name), t in timings.items():
        print(f"{kernel:<22}{name:<10}{t * 1e3:>12.3f}")
    if kernels.compiled is not None:
        for kernel in ("cut_detection_batch", "neighbor_sum"):
            speedup = timings[(kernel, "python")] / timings[(kernel, "compiled")]
            print(f"{kernel}: compiled is {speedup:.1f}x the fallback")


if __name__ == "__main__":
    main()
