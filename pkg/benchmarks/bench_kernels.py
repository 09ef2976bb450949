"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--quick] [--repeat N]

Each row times one kernel on both backends, reports the speed-up and checks
that the two produced identical output.
"""

import argparse
import sys
import time

import numpy as np

from kbresize._backend import compiled, fallback


def _best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, (int, float)):
        return a == b
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases(quick):
    rng = np.random.default_rng(0)
    k = 1024 if quick else 4096
    n = 20_000 if quick else 100_000
    dim = 16

    v = rng.normal(scale=0.5, size=(k, dim))
    pts = v * (np.tanh(np.linalg.norm(v, axis=1)) / np.linalg.norm(v, axis=1))[:, None]
    oms = 1.0 - np.einsum("ij,ij->i", pts, pts)
    root = int(np.argmax(oms))
    yield f"prim_mst K={k}", lambda m: m.prim_mst(pts, oms, root)

    x = rng.normal(scale=0.5, size=(n, dim))
    kb = np.ascontiguousarray(x[rng.choice(n, k, replace=False)])
    yield f"nearest N={n} K={k}", lambda m: m.nearest(x, kb)

    u = np.random.default_rng(1).random(256)
    yield f"kmeans++ N={n} K=256", lambda m: m.kmeanspp_indices(x, u)

    start = x[rng.choice(n, 256, replace=False)]
    yield f"lloyd N={n} K=256 (10 iter)", lambda m: m.lloyd(x, start.copy(), 10, 0.0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats per backend (best is kept)")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'kernel':<30} {'compiled':>10} {'python':>10} {'speed-up':>9}  identical")
    ok = True
    for name, fn in cases(args.quick):
        tc, oc = _best_of(lambda: fn(compiled), args.repeat)
        tp, op = _best_of(lambda: fn(fallback), args.repeat)
        same = _same(oc, op)
        ok &= same
        print(f"{name:<30} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>8.1f}x  {same}")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
