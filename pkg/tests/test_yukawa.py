import math

import numpy as np
import pytest

from grasq.exterior import power, wedge
from grasq.sde import StationaryConfig
from grasq.yukawa import (DiracData, ModeGaussian, TorusSpec, YukawaModel, build_mode_gaussian,
                          first_order_compare, n_sweep, potential_V, potential_quadrature, schwinger_compare,
                          two_point_modes, zero_mode_potential)

ONE = TorusSpec(cutoff=0.0, m_f=1.2, m_b=1.0)
FIVE = TorusSpec(cutoff=1.0, m_f=1.2, m_b=1.0)


def test_clifford_relations():
    assert DiracData().clifford_residual() < 1e-15


@pytest.mark.parametrize("bad", [dict(m_f=0.0), dict(m_b=-1.0), dict(R=0.0), dict(cutoff=-1.0), dict(eps=-0.1)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        TorusSpec(**bad)


def test_mode_sets_are_symmetric():
    for cutoff, count in ((0.0, 1), (1.0, 5), (1.5, 9), (2.0, 13)):
        ks = TorusSpec(cutoff=cutoff).modes()
        assert len(ks) == count
        assert set(ks) == {(-a, -b) for a, b in ks}
        assert ks[0] == (0, 0)


def test_mode_gaussian_structure():
    g, st = build_mode_gaussian(FIVE)
    assert g.n == 20
    assert g.antisymmetry_residual() < 1e-14
    assert g.inversion_residual() < 1e-14
    assert g.support_violation() == 0.0


def test_regularization_damps_high_modes():
    g = ModeGaussian(TorusSpec(cutoff=1.0, eps=0.5))
    assert np.all(g.multipliers <= 1.0)
    i = 4 * g.index[(1, 0)]
    assert np.max(np.abs(g.sigma[i:i + 4])) < np.max(np.abs(g.sigma_raw[i:i + 4]))


def test_two_point_is_translation_invariant():
    g = ModeGaussian(FIVE)
    a = two_point_modes(g, (0.3, -0.2), (1.1, 0.4))
    b = two_point_modes(g, (0.3 + 0.7, -0.2 - 0.5), (1.1 + 0.7, 0.4 - 0.5))
    assert np.allclose(a, b, atol=1e-14)


def test_single_mode_potential_matches_hand_computation():
    g = ModeGaussian(ONE)
    ctx, ref = zero_mode_potential(ONE)
    V = potential_V(g)
    assert V.terms.keys() == ref.terms.keys()
    assert all(abs(V.terms[m] - ref.terms[m]) < 1e-15 for m in ref.terms)


def test_quadrature_reproduces_mode_space_potential():
    g = ModeGaussian(FIVE)
    exact = potential_V(g)
    quad = potential_quadrature(g, points=6)
    assert (exact - quad).max_abs() < 1e-12 * max(exact.max_abs(), 1.0)


def test_potential_is_even_quartic_and_terminates():
    m = YukawaModel(FIVE)
    assert m.V.parity() == "even"
    assert m.V.min_degree() == 4 and m.V.degree() == 4
    assert power(m.V, 20 // 4 + 1).is_zero()


def test_gaussian_expectation_of_potential_is_real():
    m = YukawaModel(FIVE)
    val = m.gauss.state().expect(m.V)
    assert abs(val.imag) < 1e-14 * max(abs(val), 1.0)


def test_gibbs_at_zero_coupling_is_gaussian():
    m = YukawaModel(ONE)
    G = m.schwinger_element([m.test_vector((0, 0), 0), m.test_vector((0, 0), 2)])
    num, Z = m.gibbs(G, 0.0)
    assert Z == 1.0
    assert num == pytest.approx(m.gauss.state().expect(G))


def test_truncated_gibbs_series_is_exact_past_termination():
    m = YukawaModel(ONE)
    G = m.schwinger_element([m.test_vector((0, 0), 0), m.test_vector((0, 0), 2)])
    full = m.gibbs(G, 0.3)
    cut = m.gibbs(G, 0.3, order=1)  # V^2 = 0 at four generators
    assert np.allclose(full, cut, atol=1e-15)


def test_first_order_remainder_scales_quadratically():
    m = YukawaModel(ONE)
    vecs = [m.test_vector((0, 0), 0), m.test_vector((0, 0), 2)]
    res = first_order_compare(m, 0.05, vecs, panels=40, panel_nodes=10)
    assert res["remainder_ratio"] == pytest.approx(4.0, rel=0.05)


def test_single_mode_schwinger_coarse():
    m = YukawaModel(ONE)
    cfg = StationaryConfig(T_trunc=3.0, h=0.25, order=3)
    lam = 0.5 * m.lambda0(cfg)
    vecs = [m.test_vector((0, 0), 0), m.test_vector((0, 0), 2)]
    res = schwinger_compare(m, lam, vecs, cfg)
    assert res["rel_err"] < 1e-4


def test_sweep_reports_consecutive_discrepancies():
    specs = [TorusSpec(cutoff=c, m_f=1.2, m_b=1.0) for c in (0.0, 1.0)]
    vf = lambda model: [model.test_vector((0, 0), 0), model.test_vector((0, 0), 2)]
    rows = n_sweep(specs, vf, 0.01, order=2)
    assert [r["generators"] for r in rows] == [4, 20]
    assert "discrepancy" in rows[1] and rows[1]["discrepancy"] >= 0
