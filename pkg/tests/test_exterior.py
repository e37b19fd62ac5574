import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasq.exterior import (AlgebraElement, CapacityError, ContextError, GeneratorContext, all_monomials,
                            coproduct, counit, exp_nilpotent, left_derive, max_generators, multiply_slots,
                            pair_contract, pi_norm, power, q_contract, right_derive, tensor_product_graded,
                            wedge, wedge_all, weighted_norm)

from strategies import elements, homogeneous

CTX = GeneratorContext(5, "V")
v = CTX.gens()


def test_generator_squares_to_zero():
    assert (v[0] * v[0]).is_zero()


def test_generators_anticommute():
    assert v[1] * v[0] == -(v[0] * v[1])


def test_bilinear_expansion():
    assert (v[0] + v[1]) * (v[0] - v[1]) == -2 * (v[0] * v[1])


def test_monomial_sign_of_reordering():
    assert CTX.monomial([2, 0, 1]) == v[0] * v[1] * v[2]
    assert CTX.monomial([1, 0]) == -(v[0] * v[1])
    assert CTX.monomial([1, 1]).is_zero()


def test_mixed_contexts_rejected():
    other = GeneratorContext(5)
    with pytest.raises(ContextError):
        v[0] * other.gen(0)
    with pytest.raises(ContextError):
        v[0] + other.gen(0)


def test_capacity(monkeypatch):
    with pytest.raises(CapacityError):
        GeneratorContext(129)
    assert GeneratorContext(200, cap=200).n == 200
    monkeypatch.setenv("GRASQ_MAX_GENERATORS", "8")
    assert max_generators() == 8
    with pytest.raises(CapacityError):
        GeneratorContext(9)
    monkeypatch.setenv("GRASQ_MAX_GENERATORS", "many")
    with pytest.raises(CapacityError):
        max_generators()


def test_wide_masks_beyond_128_bits():
    ctx = GeneratorContext(200, cap=200)
    a = ctx.gen(150) + ctx.gen(3)
    b = ctx.gen(199) * ctx.gen(3)
    assert wedge(a, b) == ctx.monomial([150, 199, 3])
    assert wedge(b, a) == ctx.monomial([199, 3, 150])


def test_parity_and_grades():
    a = v[0] * v[1] + 2.0
    assert a.parity() == "even"
    assert v[2].parity() == "odd"
    assert (a + v[2]).parity() == "mixed"
    assert CTX.zero().parity() == "zero"
    assert a.grade(2) == v[0] * v[1]
    assert a.degree() == 2 and a.min_degree() == 0


def test_dump_lists_terms_by_mask():
    a = 3.0 * v[1] * v[2] - 0.5 * v[0] + 1.0
    assert a.dump().splitlines() == ["+1.0 * 1", "-0.5 * v0", "+3.0 * v1^v2"]


def test_exp_of_even_nilpotent():
    a = v[0] * v[1] + v[2] * v[3]
    e = exp_nilpotent(a)
    assert e == 1.0 + a + v[0] * v[1] * v[2] * v[3]
    assert exp_nilpotent(a) * exp_nilpotent(a, -1.0) == CTX.one()
    with pytest.raises(ValueError):
        exp_nilpotent(a + 1.0)


def test_power_terminates():
    a = v[0] * v[1] + v[2] * v[3] + v[0] * v[4]
    assert power(a, 3).is_zero()


@given(elements(CTX), elements(CTX), elements(CTX))
def test_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(elements(CTX), elements(CTX), elements(CTX))
def test_distributive(a, b, c):
    assert a * (b + c) == a * b + a * c


@given(st.integers(0, 5), st.integers(0, 5), st.data())
def test_graded_commutativity(p, q, data):
    a = data.draw(homogeneous(CTX, p))
    b = data.draw(homogeneous(CTX, q))
    assert a * b == (-1) ** (p * q) * (b * a)


@given(elements(CTX, parity="odd"))
def test_odd_elements_square_to_zero_when_monomial_free(a):
    # a^2 = 0 for any odd a made of degree-one terms
    lin = a.grade(1)
    assert (lin * lin).is_zero()


@given(elements(CTX, max_terms=4), st.integers(0, 3))
def test_truncated_wedge(a, k):
    b = a + v[4]
    assert wedge(a, b, k) == (a * b).truncate(k)


# ------------------------------------------------------------ coproduct

def _as_dict(el):
    return dict(el.terms)


def test_coproduct_examples():
    assert coproduct(CTX.one()) == {(0, 0): 1.0}
    assert coproduct(v[0]) == {(1, 0): 1.0, (0, 1): 1.0}
    # Delta(v1 v2) = v1v2 (x) 1 + v1 (x) v2 - v2 (x) v1 + 1 (x) v1v2
    assert coproduct(v[0] * v[1]) == {(3, 0): 1.0, (1, 2): 1.0, (2, 1): -1.0, (0, 3): 1.0}


@given(elements(CTX, max_terms=4), elements(CTX, max_terms=4))
def test_coproduct_is_multiplicative(a, b):
    assert coproduct(a * b) == tensor_product_graded(coproduct(a), coproduct(b))


@given(elements(CTX))
def test_counit_laws(a):
    d = coproduct(a)
    left, right = {}, {}
    for (f, g), c in d.items():
        if g == 0:
            left[f] = left.get(f, 0.0) + c
        if f == 0:
            right[g] = right.get(g, 0.0) + c
    assert AlgebraElement(CTX, left) == a
    assert AlgebraElement(CTX, right) == a
    assert counit(a) == a.scalar_part()


# ------------------------------------------------------------ derivatives

def test_right_derivative_example():
    # d_R(v1 v2 v3) = v2v3 (x) v1 - v1v3 (x) v2 + v1v2 (x) v3
    t = right_derive(CTX.monomial([0, 1, 2]))
    assert dict(t.terms) == {(0b110, 0): 1.0, (0b101, 1): -1.0, (0b011, 2): 1.0}


def test_second_right_derivative_example():
    # v2 (x) v3 (x) v1 - v3 (x) v2 (x) v1 - v1 (x) v3 (x) v2 + v3 (x) v1 (x) v2
    # + v1 (x) v2 (x) v3 - v2 (x) v1 (x) v3
    t = right_derive(CTX.monomial([0, 1, 2]), 2)
    expect = {(0b010, 2, 0): 1.0, (0b100, 1, 0): -1.0, (0b001, 2, 1): -1.0,
              (0b100, 0, 1): 1.0, (0b001, 1, 2): 1.0, (0b010, 0, 2): -1.0}
    assert dict(t.terms) == expect


def test_right_derivative_of_scalar_is_zero():
    assert right_derive(CTX.scalar(3.0)).is_zero()


def test_left_derivative_examples():
    assert dict(left_derive(v[0]).terms) == {(0, 0): 1.0}
    assert dict(left_derive(v[0] * v[1]).terms) == {(0b10, 0): 1.0, (0b01, 1): -1.0}
    assert left_derive(CTX.scalar(2.0)).is_zero()


@given(elements(CTX))
def test_right_derivative_euler_identity(a):
    # multiplying the slot back gives sum_k k a_k
    back = {}
    for (f, g), c in multiply_slots(right_derive(a)).items():
        prod = wedge(AlgebraElement(CTX, {f: 1.0}), AlgebraElement(CTX, {g: 1.0}))
        for m, s in prod.terms.items():
            back[m] = back.get(m, 0.0) + c * s
    euler = AlgebraElement(CTX, {m: c * m.bit_count() for m, c in a.terms.items()})
    assert AlgebraElement(CTX, back) == euler


@given(elements(CTX), elements(CTX))
def test_right_derivative_graded_leibniz(a, b):
    # d_R(ab) = a d_R(b) + (-1)^{|b|} d_R(a) b for homogeneous b
    b = b.grade(b.degree()) if not b.is_zero() else b
    parity = b.degree() & 1 if not b.is_zero() else 0
    w = np.arange(1, CTX.n + 1, dtype=float)
    lhs = pair_contract(right_derive(a * b), w)
    rhs = a * pair_contract(right_derive(b), w) + (-1) ** parity * pair_contract(right_derive(a), w) * b
    assert lhs == rhs


def test_pair_contract_examples():
    ctx = GeneratorContext(3)
    t = right_derive(ctx.monomial([0, 1, 2]))
    # <v1v2 (x) v3, v3> picks the term whose slot is v3
    assert pair_contract(t, [0, 0, 1]) == ctx.monomial([0, 1])
    assert pair_contract(right_derive(ctx.gen(0)), [0, 1, 0]).is_zero()


def test_pair_contract_with_operator():
    ctx = GeneratorContext(2)
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    t = right_derive(ctx.monomial([0, 1]))  # v1 (x) v2 - v2 (x) v1
    # the operator acts on the slot vector through M^T w
    assert pair_contract(t, [0.0, 1.0], J) == ctx.gen(1)
    assert pair_contract(t, [1.0, 0.0], J) == ctx.gen(0)


def test_q_contract_examples():
    ctx = GeneratorContext(2)
    c = np.array([[0.0, 0.7], [-0.7, 0.0]])
    one_v1_v2 = right_derive(ctx.monomial([0, 1]), 2)
    assert q_contract(one_v1_v2, c) == ctx.scalar(2 * 0.7)
    assert q_contract(one_v1_v2, np.zeros((2, 2))).is_zero()


# ------------------------------------------------------------ norms

def test_pi_norm_examples():
    assert pi_norm(CTX.zero()) == 0.0
    assert pi_norm(-2.5 * v[0] * v[1]) == 2.5
    assert pi_norm(v[0] + 2 * v[1] * v[2]) == 3.0


@given(elements(CTX), elements(CTX), st.lists(st.floats(0.1, 3.0), min_size=5, max_size=5))
def test_weighted_norm_submultiplicative(a, b, nu):
    assert weighted_norm(a * b, nu) <= weighted_norm(a, nu) * weighted_norm(b, nu) * (1 + 1e-12) + 1e-12


def test_all_monomials_count():
    assert len(all_monomials(6)) == 2 ** 6
    assert len(all_monomials(6, [2])) == math.comb(6, 2)


def test_wedge_all_empty_needs_context():
    assert wedge_all([], CTX) == CTX.one()
    with pytest.raises(ValueError):
        wedge_all([])
