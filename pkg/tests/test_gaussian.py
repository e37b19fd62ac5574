import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasq.exterior import GeneratorContext
from grasq.fock import build_complex_gaussian, build_fock, creation_operators, dense_from_state, tensor_join
from grasq.pfaffian import AntisymmetryError, pfaffian, pfaffian_pairings
from grasq.rng import SplitMix64
from grasq.rv import (CompatibilityError, GrassmannRV, gv_norm, gv_norm_sup, hom_eval, symmetrization_sides,
                      linear_rv, rv_sum, symbolic_gaussian, taylor_bound, taylor_remainder)
from grasq.wick import CovarianceMatrix, WickState, gaussian_state

from strategies import antisymmetric


# ------------------------------------------------------------ Pfaffian

def test_pfaffian_small_examples():
    assert pfaffian([[0, 2.5], [-2.5, 0]]) == 2.5
    a = SplitMix64(3).antisymmetric(4)
    expect = a[0, 1] * a[2, 3] - a[0, 2] * a[1, 3] + a[0, 3] * a[1, 2]
    for method in ("recursive", "elimination", "pairings"):
        assert abs(pfaffian(a, method) - expect) < 1e-13
    assert pfaffian(SplitMix64(4).antisymmetric(5)) == 0


def test_pfaffian_rejects_non_antisymmetric():
    with pytest.raises(AntisymmetryError):
        pfaffian([[0, 1], [1, 0]])


@given(antisymmetric(6), st.lists(st.floats(-2, 2), min_size=36, max_size=36))
def test_pfaffian_congruence(a, b):
    # Pf(B A B^T) = det(B) Pf(A)
    b = np.array(b).reshape(6, 6)
    lhs = pfaffian(b @ a @ b.T, "elimination")
    rhs = np.linalg.det(b) * pfaffian(a, "recursive")
    scale = max(1.0, np.linalg.norm(b, 2) ** 6 * np.linalg.norm(a, 2) ** 3)
    assert abs(lhs - rhs) <= 1e-10 * scale


@given(antisymmetric(8))
def test_pfaffian_methods_agree(a):
    r = pfaffian(a, "recursive")
    assert abs(r - pfaffian(a, "elimination")) <= 1e-10 * max(1, abs(r))
    assert abs(r - pfaffian_pairings(a)) <= 1e-10 * max(1, abs(r))
    assert abs(r * r - np.linalg.det(a)) <= 1e-9 * max(1, np.linalg.norm(a, 2) ** 8)


# ------------------------------------------------------------ Wick states

def test_wick_examples():
    s = SplitMix64(5).antisymmetric(4)
    st_ = WickState(s)
    g = st_.ctx.gens()
    assert st_.expect(st_.ctx.one()) == 1
    assert st_.expect(3.0 * g[0] * g[1]) == pytest.approx(3.0 * s[0, 1])
    four = st_.expect(g[0] * g[1] * g[2] * g[3])
    assert four == pytest.approx(s[0, 1] * s[2, 3] - s[0, 2] * s[1, 3] + s[0, 3] * s[1, 2])
    assert st_.moment([0, 1, 2]) == 0
    assert st_.moment([1, 1]) == 0
    assert st_.moment([2, 0]) == pytest.approx(s[2, 0])


@given(antisymmetric(6), st.lists(st.integers(0, 5), min_size=0, max_size=6))
def test_moment_pairing_oracle(s, ids):
    st_ = WickState(s)
    a, b = st_.moment(ids), st_.moment_pairings(ids)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


@given(antisymmetric(6), st.integers(0, 2 ** 16))
def test_expect_product_matches_expanded_product(s, seed):
    st_ = WickState(s)
    rng = SplitMix64(seed)
    ctx = st_.ctx
    a = sum((rng.normal() * ctx.monomial(rng.sample(6, k)) for k in (1, 2, 3)), ctx.zero())
    b = sum((rng.normal() * ctx.monomial(rng.sample(6, k)) for k in (1, 2, 3)), ctx.zero())
    assert abs(st_.expect_product(a, b) - st_.expect(a * b)) < 1e-10


def test_state_join_is_block_diagonal():
    a = WickState([[0, 1.0], [-1.0, 0]])
    b = WickState([[0, 2.0], [-2.0, 0]])
    j = a.join(b)
    assert j.M == 4
    assert j.moment([0, 2]) == 0
    assert j.moment([0, 1, 2, 3]) == pytest.approx(2.0)


def test_covariance_flavors():
    with pytest.raises(AntisymmetryError):
        CovarianceMatrix([[1.0, 0], [0, 0]])
    K = np.array([[0, 1], [1, 0]], dtype=complex)
    S = np.array([[0, 1 + 2j], [-(1 + 2j), 0]])
    cov = CovarianceMatrix(K @ S, flavor="kappa", kappa=K)
    v = np.array([1 + 1j, 2 - 1j])
    assert np.allclose(cov.re_kappa(v) + 1j * cov.im_kappa(v), v)
    # kappa is an involution, Re and Im are kappa-real
    assert np.allclose(cov.apply_kappa(cov.re_kappa(v)), cov.re_kappa(v))
    with pytest.raises(ValueError):
        CovarianceMatrix(K @ S, flavor="kappa", kappa=[[1, 1], [0, 1]])


# ------------------------------------------------------------ dense Fock

def test_creation_operators_satisfy_car():
    cr = creation_operators(3)
    for i, j in itertools.product(range(3), repeat=2):
        anti = (cr[i] @ cr[j].T + cr[j].T @ cr[i]).toarray()
        target = np.eye(8) if i == j else np.zeros((8, 8))
        assert np.allclose(anti, target)
        assert np.allclose((cr[i] @ cr[j] + cr[j] @ cr[i]).toarray(), 0)


@given(antisymmetric(4, 0.8))
def test_dense_moments_equal_wick(c):
    rep, X = build_fock(c)
    st_ = WickState(c)
    assert rep.anticommutator_residual() < 1e-12
    for k in range(5):
        for ids in itertools.combinations(range(4), k):
            a = X.expect(X.vctx.monomial(list(ids)))
            b = st_.expect(st_.ctx.monomial(list(ids)))
            assert abs(a - b) < 1e-12


def test_complex_gaussian_two_point():
    rng = SplitMix64(11)
    K = np.array([[0, 1], [1, 0]], dtype=complex)
    for _ in range(5):
        z = complex(rng.normal(), rng.normal())
        cov = CovarianceMatrix(K @ np.array([[0, z], [-z, 0]]), flavor="kappa", kappa=K)
        rep, X = build_complex_gaussian(cov)
        v = np.array([complex(rng.normal(), rng.normal()) for _ in range(2)])
        w = np.array([complex(rng.normal(), rng.normal()) for _ in range(2)])
        assert abs(rep.expect(X.apply(v) @ X.apply(w)) - cov.pairing(v, w)) < 1e-12


def test_tensor_join_independent_blocks():
    _, x1 = build_fock([[0, 0.5], [-0.5, 0]])
    _, x2 = build_fock([[0, 0.3], [-0.3, 0]])
    joined, left, right = tensor_join(x1, x2)
    ctx = GeneratorContext(4)
    # independence: the four-point function factorizes
    four = joined.expect(ctx.monomial([0, 1, 2, 3]))
    assert four == pytest.approx(0.5 * 0.3)
    assert joined.expect(ctx.monomial([0, 2])) == pytest.approx(0.0)
    assert rv_sum(left, right, check=True) is not None


def test_dense_from_state_matches_symbolic():
    st_ = WickState(SplitMix64(2).antisymmetric(4, 0.5))
    _, X = dense_from_state(st_)
    g = st_.ctx.monomial([0, 1, 2, 3])
    assert X.expect(X.vctx.monomial([0, 1, 2, 3])) == pytest.approx(st_.expect(g))


# ------------------------------------------------------------ random variables

def _pair(seed, n=3):
    """Compatible symbolic X and Y on one Gaussian state over 2n generators."""
    rng = SplitMix64(seed)
    st_ = WickState(rng.antisymmetric(2 * n, 0.5))
    ctx = st_.ctx
    gens = ctx.gens()

    def image(i):
        lin = ctx.linear(rng.normal(2 * n))
        cubic = float(rng.integer(3) - 1) * gens[i] * gens[n + i] * gens[(i + 1) % (2 * n)]
        return lin + cubic

    X = GrassmannRV([image(i) for i in range(n)], st_, ambient_norms=np.full(2 * n, 1.5))
    Y = GrassmannRV([image(i) for i in range(n)], st_, ambient_norms=np.full(2 * n, 1.5))
    return X, Y


def _integer_pair(seed, n=3):
    rng = SplitMix64(seed)
    st_ = WickState(np.zeros((2 * n, 2 * n)))
    ctx = st_.ctx
    X = GrassmannRV([ctx.linear(np.array([rng.integer(5) - 2 for _ in range(2 * n)], float)) for _ in range(n)], st_)
    Y = GrassmannRV([ctx.linear(np.array([rng.integer(5) - 2 for _ in range(2 * n)], float)) for _ in range(n)], st_)
    return X, Y


def test_hom_eval_examples():
    X, _ = _pair(1)
    V = X.vctx
    assert hom_eval(X, V.one()) == X.unit()
    assert hom_eval(X, V.gen(1)) == X.images[1]
    assert (hom_eval(X, V.monomial([0, 1])) + hom_eval(X, V.monomial([1, 0]))).is_zero()


@given(st.integers(0, 2 ** 20))
def test_hom_eval_is_multiplicative(seed):
    X, _ = _pair(seed)
    rng = SplitMix64(seed + 1)
    V = X.vctx
    a = V.linear(rng.normal(3)) + V.monomial([0, 1], rng.normal())
    b = V.monomial([2], rng.normal()) + 1.0
    lhs = hom_eval(X, a * b)
    rhs = hom_eval(X, a) * hom_eval(X, b)
    assert (lhs - rhs).max_abs() < 1e-12


def test_rv_sum_compatibility():
    X, Y = _pair(2)
    assert rv_sum(X, X.scale(0.0)).images == X.images
    st2 = WickState(np.zeros((6, 6)))
    Z = GrassmannRV([st2.ctx.gen(i) for i in range(3)], st2)
    with pytest.raises(CompatibilityError):
        rv_sum(X, Z)
    # odd images in a Grassmann ambient always anticommute
    ctx = X.state.ctx
    odd = GrassmannRV([ctx.gen(0) * ctx.gen(4) * ctx.gen(5) + ctx.gen(1)] * 3, X.state)
    assert rv_sum(X, odd).images[0] == X.images[0] + odd.images[0]
    _, d1 = build_fock([[0, 1.0], [-1.0, 0]])
    _, d2 = build_fock([[0, 1.0], [-1.0, 0]])
    with pytest.raises(CompatibilityError):
        rv_sum(d1, d2)


def test_dense_sum_requires_anticommuting_images():
    rep, X = build_fock([[0, 1.0], [-1.0, 0]])
    Y = GrassmannRV([X.images[1], X.images[0]], rep, backend="dense")
    Z = GrassmannRV([rep.identity, rep.identity], rep, backend="dense")
    assert rv_sum(X, Y) is not None
    with pytest.raises(CompatibilityError):
        rv_sum(X, Z)


def test_gv_norm_bounds():
    rep, X = build_fock([[0, 0.6], [-0.6, 0]])
    up, lo = gv_norm(X)
    sup = gv_norm_sup(X)
    assert lo - 1e-12 <= sup <= up + 1e-12
    zero = X.scale(0.0)
    assert gv_norm(zero) == (0.0, 0.0)


@given(st.integers(0, 2 ** 20))
def test_taylor_remainder_vanishes_at_degree(seed):
    X, Y = _integer_pair(seed)
    rng = SplitMix64(seed)
    V = X.vctx
    g = sum((float(rng.integer(5) - 2) * V.monomial(ids)
             for k in range(4) for ids in itertools.combinations(range(3), k)), V.zero())
    r = taylor_remainder(g, X, Y, max(g.degree(), 0))
    assert r.is_zero()


def test_taylor_remainder_linear_and_cubic_examples():
    X, Y = _integer_pair(7)
    V = X.vctx
    assert taylor_remainder(V.linear([1.0, -2.0, 3.0]), X, Y, 1).is_zero()
    assert taylor_remainder(V.monomial([0, 1, 2]), X, Y, 3).is_zero()


@given(st.integers(0, 2 ** 20), st.integers(1, 3))
def test_symmetrization_identity(seed, k):
    X, Y = _pair(seed)
    V = X.vctx
    lhs, rhs = symmetrization_sides(V.monomial([0, 1, 2]) + 0.5 * V.monomial([0, 2, 1]), X, Y, k)
    assert (lhs - rhs).max_abs() <= 1e-12


@given(st.integers(0, 2 ** 20), st.integers(0, 2))
def test_remainder_bound_holds(seed, n):
    X, Y = _pair(seed)
    rng = SplitMix64(seed)
    V = X.vctx
    g = V.monomial([0, 1, 2], rng.normal()) + V.monomial([0, 1], rng.normal()) + V.gen(2) * rng.normal()
    r = taylor_remainder(g, X, Y, n)
    assert X.norm_of(r) <= taylor_bound(g, X, Y, n) * (1 + 1e-12)


def test_symbolic_gaussian_norm_default():
    X = symbolic_gaussian([[0, 0.5], [-0.5, 0]])
    assert np.allclose(X.ambient_norms, 1.5)
    st_ = WickState(np.zeros((2, 2)))
    Y = linear_rv(np.eye(2), st_)
    assert Y.images[1] == st_.ctx.gen(1)
