"""Timings of the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from grasq import _pykernels
from grasq.rng import SplitMix64

try:
    from grasq import _ckernels
except ImportError:
    _ckernels = None


def random_terms(rng, n, count, degree):
    out = {}
    while len(out) < count:
        mask = 0
        for i in rng.sample(n, degree):
            mask |= 1 << i
        out[mask] = rng.normal()
    return out


def cases(rng):
    a = random_terms(rng, 24, 300, 3)
    b = random_terms(rng, 24, 300, 3)
    sig = rng.antisymmetric(24, 0.5).astype(complex)
    even = random_terms(rng, 24, 200, 6)
    mats = [rng.antisymmetric(n, 1.0).astype(complex) for n in (8, 16, 32)]
    yield "wedge 300x300 terms, 24 gens", lambda k: k.wedge(a, b, -1)
    yield "wedge truncated at degree 4", lambda k: k.wedge(a, b, 4)
    for m in mats:
        yield f"pfaffian n={m.shape[0]}", lambda k, m=m: k.pfaffian(m)
    yield "wick_eval 200 degree-6 terms", lambda k: k.wick_eval(even, sig)
    yield "wick_eval_product 40x40", lambda k: k.wick_eval_product(dict(list(a.items())[:40]),
                                                                  dict(list(b.items())[:40]), sig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = SplitMix64(1)
    print(f"{'case':34s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, fn in cases(rng):
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:34s} {tp:12.3f} {'n/a':>14s} {'':>8s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:34s} {tp:12.3f} {tc:14.3f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
