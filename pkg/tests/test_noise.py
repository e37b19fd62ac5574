import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grasq.noise import (GridError, NodeFamily, OUSpec, SpectralError, TimeGrid, WhiteNoise, brownian,
                         lyapunov_CA, lyapunov_residual, node_weights, ou_cross_closed, ou_exact, ou_linear,
                         ou_stationary, stationary_norm_bound, stationary_two_time, truncation_window,
                         van_loan_integral)
from grasq.rng import SplitMix64

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_grid_validation():
    with pytest.raises(GridError):
        TimeGrid(0, 1, 0)
    with pytest.raises(GridError):
        TimeGrid(1, 1, 3)
    g = TimeGrid(0, 1, 4)
    assert np.allclose(g.cell_fractions(0.1, 0.5), [0.6, 1.0, 0.0, 0.0])
    with pytest.raises(GridError):
        g.cell_fractions(0.0, 1.5)


def test_brownian_covariance_is_min_of_times():
    wn = WhiteNoise(J, TimeGrid(0.0, 1.0, 8))
    st_ = wn.state
    v, w = np.array([1.0, 0.3]), np.array([-0.2, 1.0])
    for t, s in [(0.25, 0.75), (0.5, 0.5), (1.0, 0.3)]:
        got = st_.expect(brownian(wn, t, v) * brownian(wn, s, w))
        assert abs(got - (v @ J @ w) * min(t, s)) < 1e-13
    assert brownian(wn, 0.0, v).is_zero()


def test_lyapunov_examples():
    assert np.allclose(lyapunov_CA(-np.eye(2), J), J / 2)
    A = np.array([[-2.0, 0.5], [-0.5, -2.0]])  # commutes with J
    assert np.allclose(lyapunov_CA(A, J), -np.linalg.solve(A + A.T, J))
    with pytest.raises(SpectralError):
        lyapunov_CA(np.eye(2), J)
    with pytest.raises(SpectralError):
        OUSpec([[0.0, 1.0], [-1.0, 0.0]])


@given(st.integers(0, 2 ** 20), st.integers(2, 5))
def test_lyapunov_residual_and_antisymmetry(seed, n):
    rng = SplitMix64(seed)
    A = rng.stable_matrix(n, shift=1.0)
    C = rng.antisymmetric(n)
    X = lyapunov_CA(A, C)
    assert lyapunov_residual(A, C, X) <= 1e-10 * max(1.0, np.abs(C).max())
    assert np.allclose(X, -X.T, atol=1e-12)


def test_van_loan_converges_to_stationary_covariance():
    A = np.array([[-1.0, 0.5], [-0.3, -0.7]])
    assert np.allclose(van_loan_integral(A, J, 40.0), lyapunov_CA(A, J), atol=1e-12)
    assert np.allclose(van_loan_integral(A, J, 0.0), 0.0)


def test_cross_covariance_antisymmetry():
    A = np.array([[-1.0, 0.5], [-0.3, -0.7]])
    s0 = 0.3 * J
    a = ou_cross_closed(A, J, s0, 0.4, 0.9)
    b = ou_cross_closed(A, J, s0, 0.9, 0.4)
    assert np.allclose(a, -b.T)


@given(st.integers(3, 24), st.floats(0.05, 1.0), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_node_weights_exact_for_cubics(n, h, c):
    W = node_weights(n, h)
    x = h * np.arange(n + 1)
    f = c[0] + c[1] * x + c[2] * x ** 2 + c[3] * x ** 3
    exact = c[0] * x + c[1] * x ** 2 / 2 + c[2] * x ** 3 / 3 + c[3] * x ** 4 / 4
    assert np.allclose(W @ f, exact, atol=1e-10 * max(1.0, np.abs(exact).max()))


def test_ou_initial_and_zero_drift():
    g = TimeGrid(0.0, 1.0, 5)
    wn = WhiteNoise(J, g, initial=0.5 * J)
    x0 = ou_exact(None, wn, -np.eye(2), 0.0)
    assert x0.images == wn.initial_rv().images
    # A = 0: Psi_t = Psi0 + B_t
    x = ou_exact(None, wn, np.zeros((2, 2)), 0.6)
    for a in range(2):
        e = np.eye(2)[a]
        assert (x.images[a] - wn.initial_rv().images[a] - brownian(wn, 0.6, e)).max_abs() < 1e-14


def test_ou_linear_covariance_matches_closed_form():
    A = np.array([[-1.0, 0.5], [-0.3, -0.7]])
    s0 = 0.4 * J
    wn = WhiteNoise(J, TimeGrid(0.0, 1.0, 2000), initial=s0)
    X = ou_linear(wn, A, 1.0)
    assert np.max(np.abs(X.covariance() - ou_cross_closed(A, J, s0, 1.0, 1.0))) < 1e-7


def test_ou_stationary_window():
    A = -np.eye(2)
    T = truncation_window(A, 1e-8)
    wn = WhiteNoise(J, TimeGrid(0.0, T, 4000))
    X = ou_stationary(wn, A, T, T)
    h = wn.grid.h
    # midpoint sum of e^{-2s}: h e^{-h} / (1 - e^{-2h}) = h / (2 sinh h), up to the e^{-2T} tail
    assert np.max(np.abs(X.covariance() - J * h / (2 * math.sinh(h)))) < 1e-9
    assert np.max(np.abs(X.covariance() - J / 2)) < h ** 2 / 12 * 1.01
    assert X.tail_bound == pytest.approx(math.exp(-T))


def test_node_family_two_time_structure():
    A = np.array([[-1.0, 0.5], [-0.3, -0.7]])
    fam = NodeFamily(A, J, TimeGrid(-1.0, 0.0, 4))
    CA = lyapunov_CA(A, J)
    N = 2
    for i, j in [(0, 0), (3, 1), (1, 3)]:
        blk = fam.sigma[fam.gen_id(i, 0):fam.gen_id(i, 0) + N, fam.gen_id(j, 0):fam.gen_id(j, 0) + N]
        assert np.allclose(blk, stationary_two_time(A, CA, fam.nodes[i], fam.nodes[j]))
    assert np.allclose(fam.sigma, -fam.sigma.T)


def test_stationary_norm_bound_for_minus_identity():
    nu, L = stationary_norm_bound(-np.eye(2), J)
    assert L == pytest.approx(2.0 / math.sqrt(2.0))
    assert np.allclose(nu, L)
