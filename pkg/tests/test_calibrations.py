from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telab import potentials as pt
from telab.calibrations import (PdeCriterionError, PdeInputs, b_coeffs, build_h_phi, coeffs_backward,
                                coeffs_forward, constant_inputs, inputs_for, pde_lower_bound,
                                poly_coeffs, poly_second_partials, polynomial_inputs, verify_poly_bounds,
                                wave_inputs, zero_inputs)
from telab.fields import PolyField, zero_field
from telab.poly import Poly2

VERT = pt.SegmentSpec((0, -1), (0, 1))


def test_small_coefficient_lists():
    assert list(poly_coeffs(1).coeffs) == [Fraction(1, 5), 1]
    assert list(poly_coeffs(2).coeffs) == [Fraction(1, 9), Fraction(2, 3), 1]


def test_order_zero_is_the_explicit_quartic():
    r2 = Poly2.radial_sq()
    expected = Fraction(1, 2) * r2 - Fraction(1, 12) * r2 * r2 - Fraction(1, 3) * Poly2.monomial(2, 2)
    assert poly_coeffs(0).P == expected
    t = np.linspace(-2, 2, 41)
    _, d22 = poly_second_partials(poly_coeffs(0), np.stack([0 * t, t], -1))
    assert np.allclose(d22, 1 - t**2, atol=1e-14)


@pytest.mark.parametrize("n", range(1, 13))
def test_coefficient_identities_exact(n):
    c = coeffs_forward(n)
    assert c == coeffs_backward(n)
    assert c[0] == Fraction(1, 4 * n + 1)
    assert c[n - 1] == Fraction(2 * n * n - n, 4 * n + 1)
    assert c[n] == 1
    assert all(ck > 0 for ck in c)
    # the binomial bound is equivalent to b_k <= 1/(4n+1) and only concerns k < n (c_n = 1)
    assert all(c[k] <= Fraction(2 * k + 1, 4 * n + 1) * comb(n, k) for k in range(n))
    assert c[n] > Fraction(2 * n + 1, 4 * n + 1)
    b = b_coeffs(c)
    assert b[0] == b[n - 1] == Fraction(1, 4 * n + 1)
    assert all(bk <= Fraction(1, 4 * n + 1) for bk in b)
    # first non-increasing, then non-decreasing
    d = [b[k + 1] - b[k] for k in range(n - 1)]
    turn = next((i for i, x in enumerate(d) if x > 0), len(d))
    assert all(x <= 0 for x in d[:turn]) and all(x >= 0 for x in d[turn:])


@pytest.mark.parametrize("n", range(0, 7))
def test_symmetry_and_axis_equality(n):
    PC = poly_coeffs(n)
    assert PC.P.is_symmetric()
    assert PC.P11 == PC.P22.swap()
    for t in (Fraction(0), Fraction(1, 3), Fraction(-5, 4), Fraction(2)):
        assert PC.P22.eval_exact(Fraction(0), t) == t ** (2 * n) * (1 - t * t)


@pytest.mark.parametrize("n", range(0, 7))
def test_second_partial_bounds_on_grid(n):
    rep = verify_poly_bounds(poly_coeffs(n), 3.0, 256)
    assert rep["violations"] == []
    assert rep["axis_slack_max"] <= 1e-10


def test_bounds_at_origin_and_grid_guard():
    PC = poly_coeffs(3)
    d11, d22 = poly_second_partials(PC, [0.0, 0.0])
    assert d11 == 0 and d22 == 0
    with pytest.raises(ValueError):
        verify_poly_bounds(PC, 3.0, 16)


@settings(deadline=None, max_examples=60)
@given(st.integers(1, 8), st.floats(-2, 2), st.floats(-2, 2))
def test_kernel_between_zero_and_radial_power(n, y1, y2):
    PC = poly_coeffs(n)
    y = np.array([y1, y2])
    K = PC.kernel()(y)
    r = (y1 * y1 + y2 * y2) ** n
    assert -1e-12 <= K <= r * (1 + 1e-12) + 1e-12


def test_pde_bounds_for_known_families():
    assert pde_lower_bound(build_h_phi(wave_inputs(), VERT), VERT) == pytest.approx(4 / 3, abs=1e-10)
    assert pde_lower_bound(build_h_phi(constant_inputs(1.0), VERT), VERT) == pytest.approx(2, abs=1e-12)
    for (n, m), val in {(1, 1): 4 / 15, (1, 2): 8 / 21, (2, 1): 4 / 35}.items():
        P = pt.power_annulus(n, m)
        D = build_h_phi(polynomial_inputs(n, m), VERT, potential=P)
        assert D.max_residual <= 1e-6
        assert pde_lower_bound(D, VERT) == pytest.approx(val, abs=1e-10)
    D = build_h_phi(zero_inputs(pt.aviles_giga()), VERT)
    assert pde_lower_bound(D, VERT) == 0


def test_pde_bound_matches_segment_energy_where_kappa_is_one():
    for P in (pt.aviles_giga(), pt.power_annulus(1, 1), pt.power_annulus(2, 2), pt.constant(0.25)):
        D = build_h_phi(inputs_for(P), VERT, potential=P)
        assert pde_lower_bound(D, VERT) == pytest.approx(pt.segment_energy(P, VERT), abs=1e-9)


def test_h_and_phi_identities():
    D = build_h_phi(polynomial_inputs(1, 1), VERT)
    rng = np.random.default_rng(3)
    y = rng.uniform(-1.5, 1.5, (40, 2))
    lw = D.inputs.lambda_w
    h = 1e-4
    e1 = np.array([h, 0.0])
    d11 = (D.h(y + e1) - 2 * D.h(y) + D.h(y - e1)) / h**2
    assert np.allclose(d11, -lw(y), atol=1e-5)
    assert np.allclose(D.h11(y), -lw(y))
    e2 = np.array([0.0, h])
    assert np.allclose((D.h2(y + e2) - D.h2(y - e2)) / (2 * h), D.h22(y), atol=1e-7)
    assert D.fd_error <= 1e-5


def test_base_height_does_not_change_bound():
    a = pde_lower_bound(build_h_phi(wave_inputs(), VERT, b=-1.0), VERT)
    b = pde_lower_bound(build_h_phi(wave_inputs(), VERT, b=0.4), VERT)
    assert a == pytest.approx(b, abs=1e-14)


def test_pde_violation_is_reported():
    w = PolyField(1 - Poly2.radial_sq())
    bad = PdeInputs(w=w, iota_w=zero_field(), kappa_w=w, lambda_w=zero_field())
    with pytest.raises(PdeCriterionError, match="PDE criterion violated"):
        build_h_phi(bad, VERT)


def test_inadmissible_coefficients_are_reported():
    # kappa = 1 and lambda = -1 satisfy the PDE for w = 1 but break (1 - kappa)(1 + lambda) >= iota^2
    one = PolyField(Poly2.const(1))
    bad = PdeInputs(w=one, iota_w=PolyField(Poly2.const(Fraction(1, 2))), kappa_w=one,
                    lambda_w=PolyField(Poly2.const(-1)))
    with pytest.raises(PdeCriterionError, match="admissibility"):
        build_h_phi(bad, VERT)


def test_non_vertical_segment_rejected():
    D = build_h_phi(wave_inputs(), VERT)
    with pytest.raises(ValueError, match="rotate"):
        pde_lower_bound(D, pt.SegmentSpec((-1, 0), (1, 0)))


def test_kappa_lambda_in_unit_interval_off_band():
    P = pt.power_annulus(2, 1)
    D = build_h_phi(inputs_for(P), VERT, potential=P)
    g = np.linspace(-2.5, 2.5, 101)
    Y = np.stack(np.meshgrid(g, g), -1)
    w = np.abs(D.inputs.w(Y))
    off = w > 1e-8
    kap = D.inputs.kappa_w(Y)[off] / w[off]
    lam = D.inputs.lambda_w(Y)[off] / w[off]
    assert np.all(np.abs(kap) <= 1 + 1e-9) and np.all(np.abs(lam) <= 1 + 1e-9)
