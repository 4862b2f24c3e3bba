import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, optimize

from latticewalk.specfun import mathieu_char_exponent, mathieu_parameters
from latticewalk.stability import (
    BracketError,
    StabilityDomainError,
    critical_boundary,
    monodromy,
    monodromy_full,
    stability_chart,
)

# lambda*: first zero of the Mathieu characteristic value b_1(q), computed once
# with scipy's Mathieu routines and frozen; 2 lambda*/omega^2 = q*
Q_STAR = 0.9080463337345777


def test_monodromy_free_oscillator():
    # lam = 0: rotation by sqrt(eps0) * period
    w, eps0 = 1.3, 0.7
    m = monodromy(eps0, 0.0, w)
    arg = math.sqrt(eps0) * 2 * math.pi / w
    expected = [[math.cos(arg), math.sin(arg) / math.sqrt(eps0)], [-math.sqrt(eps0) * math.sin(arg), math.cos(arg)]]
    assert np.allclose(m, expected, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(1, 5), st.floats(-0.5, 0.5))
def test_monodromy_unimodular(lam, w, eps0):
    assert abs(monodromy_full(eps0, lam, w).determinant - 1.0) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0.5, 5))
def test_monodromy_unimodular_wide_range(lam, w):
    # strongly unstable cells have entries ~1e4 and lose digits to the
    # cancellation in ad - bc; the bound grows with the squared entries
    mono = monodromy_full(0.0, lam, w)
    big = np.abs(mono.matrix).max() ** 2
    assert abs(mono.determinant - 1.0) <= 1e-8 + 1e-15 * big


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(0.5, 5))
def test_trace_symmetric_in_lambda(lam, w):
    # lam -> -lam is a half-period time shift, so the trace is unchanged
    a = monodromy_full(0.0, lam, w).trace
    b = monodromy_full(0.0, -lam, w).trace
    # absolute on stable cells, relative once |trace| > 1
    assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_monodromy_trivial_cases():
    T = 2 * math.pi / 0.7
    assert np.allclose(monodromy(0.0, 0.0, 0.7), [[1, T], [0, 1]], atol=1e-8)
    assert monodromy_full(1.0, 0.0, 0.7).trace == pytest.approx(2 * math.cos(T), abs=1e-8)


def test_lambda_zero_column_is_marginal():
    chart = stability_chart((-1, 1), (0.2, 5), resolution=17)
    zero = chart.lambda_axis == 0.0
    assert np.allclose(chart.trace[zero], 2.0, atol=1e-8)
    assert chart.stable[zero].all() and np.all(chart.mu_imag[zero] == 0)


def test_stable_iff_mu_imag_zero():
    chart = stability_chart((-5, 5), (0.2, 5), resolution=20)
    assert np.array_equal(chart.stable, chart.mu_imag == 0)
    assert np.all(chart.mu_imag >= 0)


def test_omega_two_row_crosses_boundary():
    lam = np.linspace(0.05, 4.0, 80)
    q = 2 * lam / 4.0
    stable = np.array([monodromy_full(0.0, l, 2.0).stable for l in lam])
    assert stable[q < 0.85].all() and not stable[(q > 0.95) & (q < 1.9)].any()


def test_large_omega_has_no_boundary():
    with pytest.raises(BracketError):
        critical_boundary(0.0, 10.0, (0.5, 1.5))


def test_fast_modulation_stabilizes():
    fast = stability_chart((0.99, 1.0), (5, 20), resolution=(16, 64))
    slow = stability_chart((0.99, 1.0), (0.5, 2), resolution=(16, 64))
    assert fast.stable_fraction() > slow.stable_fraction()


def test_stable_fixture_and_unstable_resonance():
    assert abs(monodromy_full(0.0, 1.0, 2.8).trace) < 2
    # principal parametric resonance at omega = 2 sqrt(eps0)
    assert not monodromy_full(1.0, 0.3, 2.0).stable


def test_huge_growth_keeps_log_scale():
    mono = monodromy_full(-4.0, 5.0, 0.05)
    assert not mono.stable
    assert math.isfinite(mono.log_abs_trace) and mono.log_abs_trace > 100
    assert mono.mu_imag > 0


def test_critical_boundary_matches_mathieu_oracle():
    lam = critical_boundary(0.0, 2.0, (0.5, 3.0))
    assert 2 * lam / 4.0 == pytest.approx(Q_STAR, abs=1e-6)
    lam4 = critical_boundary(0.0, 4.0, (1.0, 12.0))
    assert 2 * lam4 / 16.0 == pytest.approx(Q_STAR, abs=1e-6)


def test_q_star_oracle_is_reproducible():
    q = optimize.brentq(lambda q: special.mathieu_b(1, q), 0.5, 1.5, xtol=1e-14)
    assert q == pytest.approx(Q_STAR, abs=1e-12)


def test_critical_boundary_bracket_error():
    with pytest.raises(BracketError):
        critical_boundary(0.0, 2.0, (0.1, 0.5))


def test_chart_shape_axes_and_validation():
    chart = stability_chart((-2, 2), (0.5, 4), resolution=(16, 20))
    assert chart.shape == (16, 20)
    assert chart.lambda_axis[0] == -2 and chart.omega_axis[-1] == 4
    with pytest.raises(StabilityDomainError):
        stability_chart((-2, 2), (0.0, 4), resolution=16)
    with pytest.raises(StabilityDomainError):
        stability_chart((-2, 2), (0.5, 4), resolution=8)
    with pytest.raises(StabilityDomainError):
        monodromy(0.0, 1.0, 0.0)


def test_chart_parallel_matches_serial():
    a = stability_chart((-5, 5), (0.05, 5), resolution=24, jobs=1)
    b = stability_chart((-5, 5), (0.05, 5), resolution=24, jobs=4)
    assert np.array_equal(a.trace, b.trace) and np.array_equal(a.stable, b.stable)


def test_chart_mirror_symmetry():
    chart = stability_chart((-5, 5), (0.5, 5), resolution=21)
    assert np.array_equal(chart.stable, chart.stable[::-1])
    assert np.allclose(chart.trace, chart.trace[::-1], rtol=1e-6, atol=1e-6)


def test_chart_weak_drive_is_stable():
    chart = stability_chart((-5, 5), (0.05, 5), resolution=64)
    L, W = np.meshgrid(chart.lambda_axis, chart.omega_axis, indexing="ij")
    weak = 2 * np.abs(L) / W**2 < 0.8
    assert chart.stable_fraction(weak) > 0.99


def test_eps0_opens_stable_band_of_width_two_eps0():
    # for slow modulation the stiffness eps0 + lam*cos stays positive only
    # while |lam| < eps0
    a = stability_chart((-0.5, 0.5), (0.05, 1.0), eps0=0.0, resolution=(201, 16))
    b = stability_chart((-0.5, 0.5), (0.05, 1.0), eps0=0.1, resolution=(201, 16))
    assert np.any(a.stable != b.stable)
    band = b.lambda_axis[b.stable[:, 0]]
    assert band.max() - band.min() == pytest.approx(0.2, abs=0.011)
    assert a.stable[:, 0].sum() == 1  # only the marginal lam = 0 cell


def test_chart_agrees_with_char_exponent():
    chart = stability_chart((-3, 3), (0.6, 4), resolution=16)
    for i in range(0, 16, 3):
        for j in range(0, 16, 3):
            a, q = mathieu_parameters(chart.lambda_axis[i], chart.omega_axis[j])
            ce = mathieu_char_exponent(a, q)
            if abs(abs(ce.trace) - 2) > 1e-6:
                assert ce.stable == chart.stable[i, j]
