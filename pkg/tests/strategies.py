"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from grasq.exterior import AlgebraElement


def masks(n):
    return st.integers(min_value=0, max_value=(1 << n) - 1)


def int_coeffs():
    # small integers keep products exact in floating point
    return st.integers(min_value=-4, max_value=4).filter(lambda c: c != 0).map(float)


def term_dicts(n, max_terms=6):
    return st.dictionaries(masks(n), int_coeffs(), max_size=max_terms)


def elements(ctx, max_terms=6, parity=None):
    def build(d):
        if parity == "even":
            d = {m: c for m, c in d.items() if not m.bit_count() & 1}
        elif parity == "odd":
            d = {m: c for m, c in d.items() if m.bit_count() & 1}
        return AlgebraElement(ctx, d)

    return term_dicts(ctx.n, max_terms).map(build)


def homogeneous(ctx, degree, max_terms=4):
    ms = st.sampled_from([m for m in range(1 << ctx.n) if m.bit_count() == degree])
    return st.dictionaries(ms, int_coeffs(), max_size=max_terms).map(lambda d: AlgebraElement(ctx, d))


def antisymmetric(n, scale=1.0):
    vals = st.lists(st.floats(-scale, scale, allow_nan=False), min_size=n * n, max_size=n * n)

    def build(v):
        m = np.array(v).reshape(n, n)
        return m - m.T

    return vals.map(build)
