"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from mixed_traffic import _fallback

try:
    from mixed_traffic._ext import kernels as _compiled
except ImportError:
    _compiled = None


def cases(rng):
    n = 400
    v = rng.uniform(0, 15, n)
    gap = rng.uniform(1, 80, n)
    lead = rng.uniform(0, 15, n)
    has = (rng.random(n) < 0.8).astype(np.uint8)
    idm = (v, gap, lead, has, 15.0, 1.0, 2.0, 2.6, 4.5, 4.0, 8.0)

    base = 1 << 16
    tree = np.zeros(2 * base)
    leaves = rng.integers(0, 50_000, 32).astype(np.int64)
    values = rng.random(32)
    targets = rng.random(32) * 0.5

    probs = rng.random((32, 51))
    probs /= probs.sum(axis=1, keepdims=True)
    proj = (probs, rng.uniform(-1, 1, 32), (rng.random(32) < 0.1).astype(np.uint8),
            0.99, -20.0, 20.0)

    m = 600_000
    adam = (rng.random(m), rng.normal(size=m), np.zeros(m), np.zeros(m),
            5e-4, 0.9, 0.999, 0.1, 0.001, 1e-8)
    return {
        "idm_batch (400 vehicles)": ("idm_batch", idm),
        "sumtree_update (32 leaves)": ("sumtree_update", (tree, base, leaves, values)),
        "sumtree_find (32 draws)": ("sumtree_find", (tree, base, targets)),
        "categorical_projection (32x51)": ("categorical_projection", proj),
        "adam_update (600k params)": ("adam_update", adam),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    table = cases(rng)
    _fallback.sumtree_update(*table["sumtree_update (32 leaves)"][1])
    print(f"{'kernel':34s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for label, (name, call_args) in table.items():
        t_py = min(timeit.repeat(lambda: getattr(_fallback, name)(*call_args),
                                 number=args.repeat, repeat=3)) / args.repeat * 1e6
        if _compiled is None:
            print(f"{label:34s} {t_py:10.1f} {'n/a':>10s} {'':>8s}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(_compiled, name)(*call_args),
                                 number=args.repeat, repeat=3)) / args.repeat * 1e6
        print(f"{label:34s} {t_py:10.1f} {t_cy:10.1f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
