"""The compiled kernels against the pure-Python reference implementation."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasq import _pykernels
from grasq.pfaffian import pfaffian_pairings

ck = pytest.importorskip("grasq._ckernels")


def wide_terms(bits, max_terms=8):
    m = st.integers(min_value=0, max_value=(1 << bits) - 1)
    c = st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False)
    return st.dictionaries(m, c, max_size=max_terms)


def sparse_masks(bits, k=6):
    # few set bits spread over a wide range
    return st.lists(st.integers(0, bits - 1), max_size=k).map(lambda ids: sum(1 << i for i in set(ids)))


def sparse_terms(bits):
    c = st.integers(-3, 3).filter(bool).map(float)
    return st.dictionaries(sparse_masks(bits), c, max_size=6)


def _close(a, b):
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0) - b.get(k, 0)) <= 1e-12 * (1 + abs(b.get(k, 0))) for k in keys)


@given(wide_terms(10), wide_terms(10), st.integers(-1, 10))
def test_wedge_matches_reference(ta, tb, md):
    assert _close(ck.wedge(ta, tb, md), _pykernels.wedge(ta, tb, md))


@given(sparse_terms(128), sparse_terms(128))
def test_wedge_matches_reference_on_128_bit_masks(ta, tb):
    assert ck.wedge(ta, tb, -1) == _pykernels.wedge(ta, tb, -1)


@given(sparse_terms(300), sparse_terms(300))
def test_wedge_beyond_128_bits_delegates(ta, tb):
    assert ck.wedge(ta, tb, -1) == _pykernels.wedge(ta, tb, -1)


@given(st.integers(1, 10), st.integers(0, 2 ** 32))
def test_pfaffian_matches_reference_and_pairings(half, seed):
    rng = np.random.default_rng(seed)
    n = 2 * half if half <= 4 else 2 * half - 1
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    m = m - m.T
    a, b = ck.pfaffian(m), _pykernels.pfaffian(m)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(b))
    if n <= 8:
        assert abs(a - pfaffian_pairings(m)) <= 1e-10 * max(1.0, abs(a))
    if n % 2:
        assert a == 0
    else:
        scale = np.linalg.norm(m, 2) ** n
        assert abs(a * a - np.linalg.det(m)) <= 1e-10 * max(1.0, scale)


@given(wide_terms(8, 10), st.integers(0, 2 ** 32))
def test_wick_eval_matches_reference(terms, seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(8, 8))
    s = s - s.T
    a, b = ck.wick_eval(terms, s), _pykernels.wick_eval(terms, s)
    assert abs(a - b) <= 1e-10 * (1 + abs(b))


@given(wide_terms(8, 6), wide_terms(8, 6), st.integers(0, 2 ** 32))
def test_wick_product_matches_reference(ta, tb, seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(8, 8))
    s = s - s.T
    a = ck.wick_eval_product(ta, tb, s)
    b = _pykernels.wick_eval_product(ta, tb, s)
    c = _pykernels.wick_eval(_pykernels.wedge(ta, tb, -1), s)
    assert abs(a - b) <= 1e-10 * (1 + abs(b))
    assert abs(b - c) <= 1e-10 * (1 + abs(c))


def test_prefix_parity_and_merge_sign():
    # merge sign of v0v2 (x) v1: v1 passes v2 once
    assert _pykernels.merge_sign(0b101, 0b010) == -1
    assert _pykernels.merge_sign(0b011, 0b100) == 1
    assert _pykernels.merge_sign(0b011, 0b001) == 0
    assert _pykernels.prefix_parity(0b1) == -2  # bits above 0 flip parity


def test_backend_selection_flag():
    import subprocess
    import sys

    code = "from grasq.kernels import BACKEND; print(BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"GRASQ_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
