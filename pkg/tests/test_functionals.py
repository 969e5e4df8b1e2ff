import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telab.functionals import (det, f_calib, f_k_q, f_k_q_grad, f_k_q_hess, f_k_reg, f_star, frob_sq,
                               from_q, g_quad, g_quad_q, is_trace_free, legendre_oracle, phi_sigma,
                               sigma_opt, to_q, trace)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
mats = st.lists(finite, min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


def test_q_coordinates_of_simple_matrices():
    assert np.allclose(to_q(np.eye(2)), [np.sqrt(2), 0, 0, 0], atol=1e-15)
    assert np.allclose(to_q([[0, 1], [-1, 0]]), [0, 0, 0, np.sqrt(2)], atol=1e-15)


@settings(deadline=None, max_examples=200)
@given(mats)
def test_q_round_trip_and_isometry(M):
    assert np.allclose(from_q(to_q(M)), M, atol=1e-14 * max(1, np.abs(M).max()))
    assert np.isclose((to_q(M) ** 2).sum(), frob_sq(M), rtol=1e-13, atol=1e-13)


def test_g_examples():
    assert g_quad(np.zeros((2, 2))) == 0
    assert np.isclose(g_quad(np.eye(2)), 1.0, atol=1e-15)
    assert np.isclose(g_quad([[1, 2], [3, 4]]), 15 + np.sqrt(221), rtol=1e-14)
    assert np.isclose(g_quad_q(to_q([[1, 2], [3, 4]])), 15 + np.sqrt(221), rtol=1e-14)


@settings(deadline=None, max_examples=200)
@given(mats)
def test_g_bounds_and_q_form(M):
    n2 = frob_sq(M)
    assert n2**2 - 4 * det(M) ** 2 >= -1e-9 * max(1.0, n2**2)
    g = g_quad(M)
    assert 0.5 * n2 - 1e-12 * (1 + n2) <= g <= n2 + 1e-12 * (1 + n2)
    assert np.isclose(g, g_quad_q(to_q(M)), rtol=1e-10, atol=1e-10)


def test_f_examples():
    assert f_calib(np.eye(2)) == 0
    assert f_calib([[0, 1], [0, 0]]) == 1


@settings(deadline=None, max_examples=200)
@given(mats)
def test_f_is_g_of_trace_free_part(M):
    A = M - 0.5 * trace(M) * np.eye(2)
    assert np.isclose(f_calib(M), g_quad(A), rtol=1e-12, atol=1e-12 * (1 + frob_sq(M)))


def test_f_star_examples():
    assert f_star([[0, 1], [0, 0]]) == 0.25
    assert f_star(np.eye(2)) == np.inf
    assert is_trace_free([[1e-12, 0], [0, 0]])
    assert not is_trace_free([[1e-6, 0], [0, 0]])


def test_f_k_examples():
    assert np.isclose(f_k_q([0, 0, 0, 1], 1), 1 + np.sqrt(0.75), rtol=1e-14)
    assert f_k_reg(np.zeros((2, 2)), 3) == 0
    with pytest.raises(ValueError):
        f_k_reg(np.eye(2), 0.5)


def test_f_k_limit_and_monotonicity():
    rng = np.random.default_rng(4)
    M = rng.standard_normal((2000, 2, 2))
    f = f_calib(M)
    prev = f_k_reg(M, 1)
    for k in (2, 5, 10, 100):
        cur = f_k_reg(M, k)
        assert np.all(cur <= prev + 1e-12)
        assert np.all(cur >= f - 1e-12)
        prev = cur
    # |sqrt(x + e) - sqrt(x)| <= sqrt(e) with e = |q|^2 / 2k gives this bound
    for k in (1e2, 1e6):
        bound = frob_sq(M) * (2 / np.sqrt(k) + 1 / k)
        assert np.all(f_k_reg(M, k) - f <= bound + 1e-12)


def test_f_k_close_to_f_for_large_k():
    # holds where both square roots in f_k stay away from zero
    for M in (np.zeros((2, 2)), np.eye(2), [[0, 1], [0, 0]], [[0, 2], [0, 0]], [[0.5, 1], [0, -0.5]]):
        assert abs(f_k_reg(M, 1e6) - f_calib(M)) < 1e-4


def test_f_k_worst_direction_converges_like_inverse_root_k():
    # q = (0, 1, 0, 0): f = 1/2 while f_k - f ~ 1 / sqrt(2k)
    q = np.array([0.0, 1.0, 0.0, 0.0])
    gaps = [f_k_q(q, k) - 0.5 for k in (1e4, 1e6)]
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=0.01)
    assert gaps[1] == pytest.approx(1 / np.sqrt(2e6), rel=1e-3)


def test_homogeneity():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((500, 2, 2))
    for t in (-3.0, 0.5, 7.0):
        assert np.allclose(g_quad(t * M), t * t * g_quad(M), rtol=1e-12)
        assert np.allclose(f_calib(t * M), t * t * f_calib(M), rtol=1e-12, atol=1e-13)
        assert np.allclose(f_k_reg(t * M, 10), t * t * f_k_reg(M, 10), rtol=1e-12)


def test_midpoint_convexity_on_many_pairs():
    rng = np.random.default_rng(6)
    M = rng.standard_normal((100_000, 2, 2))
    N = rng.standard_normal((100_000, 2, 2))
    for fn in (g_quad, lambda X: f_k_reg(X, 7)):
        lhs = fn(0.5 * (M + N))
        rhs = 0.5 * (fn(M) + fn(N))
        assert np.all(lhs <= rhs + 1e-12 * (1 + rhs))


def test_interpolation_inequality():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((20_000, 2, 2))
    N = rng.standard_normal((20_000, 2, 2))
    s = 1 + rng.exponential(size=20_000)
    t = s / (s - 1)
    lhs = g_quad(M + N)
    rhs = s * g_quad(M) + t * g_quad(N)
    assert np.all(lhs <= rhs + 1e-10 * (1 + rhs))


def test_f_k_gradient_and_hessian_against_differences():
    rng = np.random.default_rng(8)
    q = rng.standard_normal((20, 4))
    k, h = 10.0, 1e-6
    v, g, H = f_k_q_hess(q, k)
    assert np.allclose(v, f_k_q(q, k))
    assert np.allclose(g, f_k_q_grad(q, k)[1])
    for i in range(4):
        e = np.eye(4)[i] * h
        assert np.allclose(g[:, i], (f_k_q(q + e, k) - f_k_q(q - e, k)) / (2 * h), rtol=1e-6, atol=1e-7)
        dg = (f_k_q_grad(q + e, k)[1] - f_k_q_grad(q - e, k)[1]) / (2 * h)
        assert np.allclose(H[:, :, i], dg, rtol=1e-5, atol=1e-6)


def test_sigma_opt_examples():
    s0, g = sigma_opt(0.6 * np.eye(2))
    assert s0 == pytest.approx(1.0) and g == pytest.approx(0.36)
    s0, g = sigma_opt(np.diag([1.0, 0.0]))
    assert s0 == 0 and g == 1 and phi_sigma(np.diag([1.0, 0.0]), s0) == 1
    with pytest.raises(ValueError, match="undefined"):
        sigma_opt(np.zeros((2, 2)))


@settings(deadline=None, max_examples=50)
@given(mats)
def test_sigma_opt_minimizes_phi(L):
    if frob_sq(L) < 1e-6:
        return
    s0, g = sigma_opt(L)
    s = np.linspace(-0.9999, 0.9999, 20001)
    phis = phi_sigma(L, s)
    assert phis.min() >= g * (1 - 1e-9) - 1e-12
    if abs(s0) < 0.99:
        assert phis.min() == pytest.approx(g, rel=1e-6)
    if abs(s0) < 1:
        assert phi_sigma(L, s0) == pytest.approx(g, rel=1e-10)


def test_quadratic_form_characterization():
    rng = np.random.default_rng(9)
    for _ in range(20):
        L = rng.standard_normal((2, 2))
        L /= np.sqrt(g_quad(L)) * (1 + rng.random())
        s0, _ = sigma_opt(L)
        M = rng.standard_normal((5000, 2, 2))
        lhs = np.einsum("kij,ij->k", M, L) ** 2
        rhs = frob_sq(M) + 2 * s0 * det(M)
        assert np.all(lhs <= rhs + 1e-12 * (1 + rhs))


def test_oracle_small_cases():
    r = legendre_oracle(f_calib, np.array([[0.0, 1.0], [0.0, 0.0]]), samples=20_000)
    assert r.value == pytest.approx(0.25, rel=1e-3) and not r.divergent
    r = legendre_oracle(f_calib, np.eye(2), samples=20_000)
    assert r.divergent
    N = np.array([[0.3, -1.0], [2.0, 0.5]])
    r = legendre_oracle(lambda M: 0.5 * frob_sq(M), N, samples=20_000)
    assert r.value == pytest.approx(0.5 * frob_sq(N), rel=1e-6) and not r.divergent
    with pytest.raises(ValueError, match="under-resolved"):
        legendre_oracle(f_calib, N, samples=50)
