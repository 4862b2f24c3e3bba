import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.spatial import Delaunay

from latticewalk.analysis import fold_phase_space
from latticewalk.approx import (
    ApproxDomainError,
    ApproxKind,
    ComparisonReport,
    ResonanceError,
    beat_amplitude,
    beat_momentum,
    compare,
    escape_solution,
    evaluate,
    free_flight,
    harmonic_solution,
    parabolic_cylinder_solution,
    pendulum_ensemble,
    pendulum_period,
    pendulum_solution,
    pendulum_state,
)
from latticewalk.integrate import IntegratorConfig, integrate
from latticewalk.model import LatticeParams, PhaseState
from latticewalk.specfun import elliptic_K


def _pendulum_ode(lam, x0, t):
    sol = solve_ivp(lambda s, y: (y[1], -lam * math.sin(y[0])), (0, t[-1]), (x0, 0.0), method="DOP853",
                    t_eval=t, rtol=1e-13, atol=1e-13)
    return sol.y[0]


def test_harmonic_full_period_and_fixed_point():
    p = LatticeParams(2.0, 0.01)
    x, v = harmonic_solution(p, 0.3, 0.2, 2 * math.pi / math.sqrt(2.0))
    assert x == pytest.approx(0.3, abs=1e-14) and v == pytest.approx(0.2, abs=1e-14)
    x, v = harmonic_solution(p, 0.0, 0.0, np.linspace(0, 50, 11))
    assert np.all(x == 0) and np.all(v == 0)
    # measured about the nearest even site
    x, _ = harmonic_solution(p, 2 * math.pi + 0.1, 0.0, math.pi / math.sqrt(2.0))
    assert x == pytest.approx(2 * math.pi - 0.1)
    with pytest.raises(ApproxDomainError):
        harmonic_solution(LatticeParams(0.0, 1.0), 0.1, 0.0, 1.0)


def test_escape_against_linear_ode():
    p = LatticeParams(1.0, 0.3)
    x, _ = escape_solution(p, 1e-3, 0.0, 5.0)
    assert x == pytest.approx(1e-3 * math.cosh(5.0), rel=1e-14)
    sol = solve_ivp(lambda s, y: (y[1], y[0]), (0, 5), (1e-3, 0.0), rtol=1e-12, atol=1e-16)
    assert x == pytest.approx(sol.y[0, -1], rel=1e-9)
    x, v = escape_solution(p, 0.0, 0.0, np.linspace(0, 5, 6))
    assert np.all(x == 0) and np.all(v == 0)


def test_parabolic_cylinder_limits_and_oracle():
    x, v = parabolic_cylinder_solution(LatticeParams(1.0, 1e-4), 0.6, 0.1, 1.0)
    xh, vh = harmonic_solution(LatticeParams(1.0, 1e-4), 0.6, 0.1, 1.0)
    assert abs(x - xh) < 1e-6 and abs(v - vh) < 1e-6
    x, _ = parabolic_cylinder_solution(LatticeParams(1.0, 0.02), 0.6, 0.1, 20.0)
    sol = solve_ivp(lambda s, y: (y[1], -(1 - 0.5 * (0.02 * s) ** 2) * y[0]), (0, 20), (0.6, 0.1),
                    method="DOP853", rtol=1e-13, atol=1e-15)
    assert abs(x - sol.y[0, -1]) < 1e-8


def test_pendulum_start_and_half_period():
    assert pendulum_solution(1.0, 0.4, 0.0) == pytest.approx(0.4, abs=1e-15)
    half = 2 * elliptic_K(math.sin(0.2))
    assert pendulum_solution(1.0, 0.4, half) == pytest.approx(-0.4, abs=1e-12)
    assert pendulum_solution(1.0, 0.4, half) == pytest.approx(_pendulum_ode(1.0, 0.4, [0, half])[-1], abs=1e-9)


def test_pendulum_small_angle():
    t = np.linspace(0, 2 * math.pi, 200)
    assert np.max(np.abs(pendulum_solution(1.0, 0.01, t) - 0.01 * np.cos(t))) < 1e-5


def test_pendulum_domain():
    for bad in (math.pi, -3.5):
        with pytest.raises(ApproxDomainError):
            pendulum_solution(1.0, bad, 1.0)
    with pytest.raises(ApproxDomainError):
        pendulum_solution(0.0, 0.3, 1.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3).filter(lambda v: abs(v) > 1e-3), st.sampled_from([0.5, 1.0, 2.0]))
def test_pendulum_matches_ode_over_ten_periods(x0, lam):
    t = np.linspace(0, 10 * pendulum_period(lam, x0), 2000)
    assert np.max(np.abs(pendulum_solution(lam, x0, t) - _pendulum_ode(lam, x0, t))) < 1e-6


def test_pendulum_momentum_is_derivative():
    t = np.linspace(0, 10, 1001)
    x, p = pendulum_state(1.5, 1.2, t)
    assert np.allclose(np.gradient(x, t)[1:-1], p[1:-1], atol=1e-4)


def test_ensemble_zero_variance_and_determinism():
    ens = pendulum_ensemble(1.0, 0.4, 0.0, 5, seed=9, t=np.linspace(0, 10, 50))
    ref = pendulum_solution(1.0, 0.4, np.linspace(0, 10, 50))
    assert all(np.array_equal(o.x, ref) for o in ens.positive)
    # odd-site branch: same libration measured from x = pi
    assert all(np.allclose(o.x - math.pi, pendulum_solution(1.0, 0.4 - math.pi, o.t)) for o in ens.negative)
    a = pendulum_ensemble(1.0, 0.4, math.pi / 2, 20, seed=123)
    b = pendulum_ensemble(1.0, 0.4, math.pi / 2, 20, seed=123)
    assert np.array_equal(a.x0, b.x0)
    assert all(np.array_equal(u.x, v.x) for u, v in zip(a.orbits, b.orbits))
    assert a.metadata()["rng"] == "pcg64-xsl-rr-128/64"
    with pytest.raises(ApproxDomainError):
        pendulum_ensemble(1.0, 0.0, 1.0, 0, seed=1)


def test_ensemble_hull_covers_strict_simulation():
    ens = pendulum_ensemble(1.0, 0.4, math.pi / 2, 50, seed=0)
    pts = np.concatenate([np.column_stack(fold_phase_space(o.x, o.p)) for o in ens.orbits])
    traj = integrate(LatticeParams(1.0, 0.1), PhaseState(0.4, 0.0), 1000.0, IntegratorConfig(dt=1e-3, sample_every=100))
    strict = np.column_stack(fold_phase_space(traj))
    inside = Delaunay(pts).find_simplex(strict) >= 0
    assert inside.mean() >= 0.8


def test_free_flight():
    x, p = free_flight(0.2, 0.1, 1000.0)
    assert x == pytest.approx(100.2) and p == 0.1


def test_beat_momentum_forms():
    params = LatticeParams(1.0, 10.0)
    p0 = 0.1
    assert beat_momentum(params, p0, 0.0) == p0
    assert beat_momentum(params, p0, 0.0, corrected=False) == pytest.approx(p0 + 1.0 * p0 / (p0**2 - 100.0))
    with pytest.raises(ResonanceError):
        beat_momentum(params, 10.0 + 1e-8, 1.0)
    assert beat_amplitude(params, p0) == pytest.approx(0.5 * (1 / 9.9 + 1 / 10.1))


@settings(max_examples=30)
@given(st.floats(0.1, 3), st.floats(0.2, 5), st.floats(0.05, 4), st.integers(1, 5))
def test_corrected_beat_time_average(lam, w, p0, periods):
    if abs(p0 - w) < 0.05:
        return
    params = LatticeParams(lam, w)
    t = np.linspace(0, periods * 2 * math.pi / abs(p0 - w), 4001)
    p = beat_momentum(params, p0, t)
    bound = lam / (2 * abs(p0 - w)) + lam / (2 * (p0 + w))
    # for p0 > omega the constant offset equals the bound, so the leftover
    # average of the faster cosine (window not a whole number of its periods)
    # has to be allowed for
    leftover = lam / (2 * (p0 + w) ** 2 * t[-1])
    assert abs(np.trapezoid(p, t) / t[-1] - p0) <= bound + leftover + 1e-9


@pytest.mark.parametrize("kind", [k for k in ApproxKind if k is not ApproxKind.BEAT_MOMENTUM])
def test_every_kind_starts_at_initial_state(kind):
    params = LatticeParams(1.0, 0.7)
    initial = PhaseState(0.3, 0.0 if kind is ApproxKind.PENDULUM else 0.2, t=1.5)
    x, p = evaluate(kind, params, initial, [1.5, 2.0])
    if x is not None:
        assert x[0] == initial.x
    assert p[0] == initial.p


def test_compare_free_flight_zero():
    rep = compare("free_flight", LatticeParams(0.0, 1.0), PhaseState(0.2, 0.7), (0.0, 50.0))
    assert rep.l_inf < 1e-12 and rep.rms <= rep.l_inf


def test_compare_harmonic_fig3():
    rep = compare("harmonic", LatticeParams(1.0, 0.02), PhaseState(0.6, 0.1), (0.0, 2 * math.pi))
    assert rep.l_inf < 0.15 and rep.components == "xp"


def test_compare_beat_is_momentum_only():
    rep = compare("beat_momentum_corrected", LatticeParams(1.0, 10.0), PhaseState(0.2, 0.1), (0.0, 30.0))
    assert rep.components == "p" and rep.l_inf >= rep.rms > 0


def test_report_invariant_and_window_check():
    with pytest.raises(ValueError):
        ComparisonReport("harmonic", 0.1, 0.2, (0, 1), 10)
    with pytest.raises(ApproxDomainError):
        compare("harmonic", LatticeParams(1, 1), PhaseState(0, 0, t=2.0), (1.0, 3.0))
    with pytest.raises(ApproxDomainError):
        evaluate("pendulum", LatticeParams(1, 0), PhaseState(0.3, 0.1), [0.0, 1.0])
