import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasq.exterior import CapacityError
from grasq.trees import (LEAF, BranchError, DenseMildPath, MajorantSpec, MildPath, Tree, TreeExpansion,
                         domination_check, drift_vanishes, enumerate_trees, majorant_solve, newton_onset,
                         order_coefficients, picard_reference, product_norm_decay, repeated_field_product,
                         series_sum, ternary_count, trees_with)

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
C3 = np.array([[0.0, 1.0, 0.3], [-1.0, 0.0, 0.5], [-0.3, -0.5, 0.0]])


def cubic3():
    c = np.zeros((3, 3, 3, 3))
    c[0, 0, 1, 2] = 1.0
    c[1, 2, 0, 1] = -0.5
    c[2, 1, 1, 2] = 0.7  # vanishes: repeated generator
    return c


# ------------------------------------------------------------ tree combinatorics

@pytest.mark.parametrize("m", range(6))
def test_tree_counts_are_ternary_numbers(m):
    assert len(trees_with(m)) == ternary_count(m)
    assert len(set(trees_with(m))) == ternary_count(m)


def test_first_ternary_numbers():
    assert [ternary_count(m) for m in range(6)] == [1, 1, 3, 12, 55, 273]
    assert len(enumerate_trees(3)) == 1 + 1 + 3 + 12


@given(st.integers(0, 4), st.data())
def test_tree_shape_invariants(m, data):
    t = data.draw(st.sampled_from(trees_with(m)))
    assert t.internal() == m
    assert t.leaves() == 2 * m + 1
    assert t.size() == 3 * m + 1
    assert Tree.parse(str(t)) == t


def test_tree_parse_rejects_bad_input():
    assert Tree.parse("[...]") == Tree((LEAF, LEAF, LEAF))
    for bad in ("[..]", "[....]", "..", "x"):
        with pytest.raises((ValueError, IndexError)):
            Tree.parse(bad)
    with pytest.raises(ValueError):
        Tree((LEAF, LEAF))


# ------------------------------------------------------------ tree expansion

def test_drift_vanishes_at_two_generators():
    c = np.zeros((2, 2, 2, 2))
    c[0, 0, 0, 1] = 1.0
    c[1, 1, 0, 1] = 0.5
    assert drift_vanishes(c)
    assert not drift_vanishes(cubic3())


def test_vanishing_drift_gives_zero_trees():
    c = np.zeros((2, 2, 2, 2))
    c[0, 0, 0, 1] = 1.0
    path = MildPath(J2, 1.0, 4)
    for shortcut in (True, False):
        ex = TreeExpansion(c, path, shortcut=shortcut)
        for t in trees_with(1) + trees_with(2):
            assert all(x.is_zero() for row in ex.eval(t) for x in row)


def test_leaf_is_the_base_path():
    path = MildPath(C3, 1.0, 3)
    assert TreeExpansion(cubic3(), path).eval(LEAF) is path.images


def test_series_matches_picard_fixed_point():
    path = MildPath(C3, 1.0, 4)
    lam = 0.05
    ref = picard_reference(cubic3(), lam, path).images[-1]
    res = series_sum(4, cubic3(), lam, path)
    err = max((x - y).max_abs() for x, y in zip(res["sum"], ref))
    # remainder is O(lam^5) times the order-5 coefficient
    assert err < 1e-6
    for m, p in enumerate(res["partial"]):
        e = max((x - y).max_abs() for x, y in zip(p, ref))
        assert e <= 10 * lam ** (m + 1)


def test_order_coefficients_are_the_tree_sums():
    path = MildPath(C3, 1.0, 3)
    Z = order_coefficients(cubic3(), path, 2)
    ex = TreeExpansion(cubic3(), path)
    for m in (1, 2):
        blk = [sum((ex.eval(t)[-1][a] for t in trees_with(m)), path.ctx.zero()) for a in range(3)]
        assert max((Z[-1][a][m] - blk[a]).max_abs() for a in range(3)) < 1e-12


def test_series_table_and_envelope_fields():
    path = MildPath(C3, 1.0, 3)
    res = series_sum(3, cubic3(), 0.1, path)
    assert len(res["table"]) == sum(ternary_count(m) for m in range(4))
    assert res["envelope_holds"] in (True, False)
    assert res["order_norms"][0] > 0 and not res["diverging"]


# ------------------------------------------------------------ exclusion principle

def test_dense_path_capacity():
    with pytest.raises(CapacityError):
        DenseMildPath(J2, 1.0, 10)


def test_repeated_field_vanishes_and_decay():
    path = DenseMildPath(J2, 1.0, 4)
    assert repeated_field_product(path, 2, 1) < 1e-12
    res = product_norm_decay(path, [1, 2, 4, 6, 8], samples=6)
    rows = res["rows"]
    assert all(r["measured"] <= r["naive"] * (1 + 1e-9) for r in rows)
    assert rows[-1]["naive_ratio"] < rows[0]["naive_ratio"]


# ------------------------------------------------------------ majorant

@given(st.floats(0.1, 3.0), st.floats(0.1, 2.0))
def test_majorant_coefficients_are_fuss_catalan(p, c):
    K = MajorantSpec([0, 0, 0, p], c).coefficients(8)
    exact = [ternary_count(n) * p ** n * c ** (2 * n + 1) for n in range(9)]
    assert np.allclose(K, exact, rtol=1e-12)


@given(st.floats(0.1, 3.0), st.floats(0.1, 2.0))
def test_critical_coupling_of_cubic_majorant(p, c):
    assert MajorantSpec([0, 0, 0, p], c).critical_lambda() == pytest.approx(4 / (27 * p * c * c), rel=1e-10)


def test_affine_majorant_has_no_critical_point():
    assert MajorantSpec([1.0, 2.0], 1.0).critical_lambda() == math.inf
    with pytest.raises(ValueError):
        MajorantSpec([0, -1.0], 1.0)


def test_majorant_branch_and_newton_onset():
    spec = MajorantSpec([0, 0, 0, 1.0], 1.0)
    lam_star = 4 / 27
    out = majorant_solve(spec, 0.5 * lam_star)
    K = out["K"]
    assert K == pytest.approx(0.5 * lam_star * K ** 3 + 1.0, abs=1e-13)
    with pytest.raises(BranchError):
        majorant_solve(spec, 1.01 * lam_star)
    onset = newton_onset(spec, 0.5 * lam_star, 2 * lam_star)
    assert abs(onset - lam_star) < 1e-6


def test_discrete_series_is_dominated_by_majorant():
    path = MildPath(C3, 1.0, 3)
    res = domination_check(cubic3(), path, n_max=4)
    assert res["dominated"]
    assert res["lambda_star"] == pytest.approx(4 / (27 * res["p"] * res["c"] ** 2))
