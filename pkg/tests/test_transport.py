"""Green's columns, the three moment routes and growth exponents."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymerchain.errors import (FrontEscape, InsufficientRange, InsufficientWindow,
                                 SingularSystem, ValidationError)
from polymerchain.model import JacobiWindow, dimer_ensemble, random_window
from polymerchain.transport import (MomentSeries, cesaro_average, diffusion_exponent,
                                    exponential_average, free_green_origin, free_source,
                                    green_column, log_grid, moment_green, moment_series,
                                    moment_spectral_oracle, periodic_source,
                                    propagate_moments, random_source, time_grid)

DIMER = dimer_ensemble(0.5)


def test_free_green_function_at_origin():
    w = free_source().window(3000)
    for z in (0.3 + 0.5j, -1.9 + 0.2j, 3.0 + 0.1j):
        assert green_column(w, z).at(0) == pytest.approx(free_green_origin(z), abs=1e-13)


def test_green_column_solves_the_resolvent_equation():
    w = random_window(DIMER, -50, 50, 3)
    z = 0.45 + 0.01j
    g = green_column(w, z)
    assert np.max(np.abs(g.residuals())) < 1e-12
    rhs = np.zeros(w.size)
    rhs[50] = 1.0
    dense = np.linalg.solve(w.dense() - z * np.eye(w.size), rhs)
    assert np.allclose(g.values, dense, atol=1e-12)


def test_green_column_errors():
    w = random_window(DIMER, -10, 10, 0)
    with pytest.raises(SingularSystem):
        green_column(w, 0.3)
    with pytest.raises(InsufficientWindow):
        green_column(w, 0.3 + 1j, radius=11)
    with pytest.raises(InsufficientWindow):
        green_column(JacobiWindow(1, np.ones(5), np.zeros(5)), 1j)


def test_green_matches_spectral_oracle():
    w = random_window(DIMER, -100, 100, 4)
    for T in (5.0, 20.0):
        g = moment_green(w, 2, T)
        o = moment_spectral_oracle(w, 2, T)
        assert g == pytest.approx(o, rel=1e-5)


def test_zeroth_moment_is_normalised():
    w = random_window(DIMER, -80, 80, 1)
    assert moment_green(w, 0, 5.0) == pytest.approx(1.0, rel=1e-4)
    assert moment_spectral_oracle(w, 0, 5.0) == pytest.approx(1.0, rel=1e-12)


def test_moments_obey_lyapunov_inequality():
    # q -> M_q^{1/q} is nondecreasing because M_q is an average of |n|^q
    w = random_window(DIMER, -120, 120, 2)
    qs = np.array([0.5, 1.0, 2.0, 3.0])
    M = np.array([moment_spectral_oracle(w, q, 15.0) for q in qs])
    r = M ** (1 / qs)
    assert np.all(np.diff(r) > 0)


def test_decoupled_chain_does_not_spread():
    n = 41
    w = JacobiWindow(-20, np.full(n, 1e-6), np.random.default_rng(0).uniform(-1, 1, n))
    assert moment_spectral_oracle(w, 2, 10.0, check_front=False) < 1e-8


def test_oracle_refuses_small_windows():
    w = random_window(DIMER, -10, 10, 0)
    with pytest.raises(FrontEscape):
        moment_spectral_oracle(w, 2, 50.0)


@pytest.mark.parametrize("method", ["green", "propagation"])
def test_free_chain_second_moment(method):
    T = np.array([4.0, 8.0])
    s = moment_series(free_source(), 2, T, method)
    tol = 2e-3 if method == "green" else 5e-4
    assert np.allclose(s.M, 4 * T ** 2, rtol=tol)


def test_propagation_matches_green():
    src = random_source(DIMER, 5)
    T = np.array([10.0, 20.0])
    g = moment_series(src, 2, T, "green", rtol=1e-5, trunc_rtol=1e-4)
    p = moment_series(src, 2, T, "propagation")
    assert np.allclose(p.M, g.M, rtol=3e-4)


def test_propagation_conserves_norm_and_detects_edges():
    w = random_window(DIMER, -200, 200, 6)
    times = time_grid(40.0)
    m, norm = propagate_moments(w, [0, 2], times)
    assert np.max(np.abs(norm - 1)) < 1e-10
    assert np.allclose(m[:, 0], norm)
    assert np.all(np.diff(m[-20:, 1]) != 0)
    with pytest.raises(FrontEscape):
        propagate_moments(random_window(DIMER, -20, 20, 6), 2, time_grid(40.0))
    with pytest.raises(ValidationError):
        propagate_moments(w, 2, [1.0, 0.5])


def test_time_grid():
    t = time_grid(1000.0)
    assert t[0] == 0 and t[-1] >= 1000
    h = np.diff(t)
    assert h.min() >= 0.25 - 1e-12 and h.max() <= 50 + 1e-12


def test_exponential_average_is_exact_for_linear_pieces():
    T = 7.0
    times = np.linspace(0, 30, 13)
    value, tail = exponential_average(times, times, T)
    assert value == pytest.approx(T, rel=1e-12)
    assert 0 < tail < value
    # a power law tail is continued exactly
    times = np.linspace(0, 5, 11)
    v2, _ = exponential_average(times, 3.0 * times, T, tail_power=1.0)
    assert v2 == pytest.approx(3 * T, rel=1e-12)


def test_cesaro_average():
    t = np.linspace(0, 10, 21)
    assert cesaro_average(t, 2 * t, 4.0) == pytest.approx(4.0)
    with pytest.raises(InsufficientRange):
        cesaro_average(t, t, 11.0)


def test_cesaro_and_exponential_oracles_differ_but_scale_alike():
    Ts = np.array([5.0, 10.0, 20.0])
    # the exponential average has long time tails, the Cesaro mean stops at T
    e = moment_spectral_oracle(free_source().window(1200), 2, Ts)
    c = moment_spectral_oracle(free_source().window(100), 2, Ts, cesaro=True)
    # 2 t^2 averages to 4 T^2 and 2 T^2 / 3
    assert np.allclose(e, 4 * Ts ** 2, rtol=1e-6)
    assert np.allclose(c, 2 * Ts ** 2 / 3, rtol=1e-6)


@given(st.floats(0.1, 1.5), st.floats(0.5, 4))
def test_exponent_of_synthetic_power_law(beta, q):
    T = log_grid(10, 1000, 9)
    fit = diffusion_exponent(MomentSeries(q, T, 3.0 * T ** (q * beta), "oracle"))
    assert fit.beta == pytest.approx(beta, abs=1e-10)
    assert fit.beta_minus == pytest.approx(beta, abs=1e-10)
    assert fit.beta_plus == pytest.approx(beta, abs=1e-10)


def test_exponent_windows_bracket_the_fit():
    T = log_grid(10, 1000, 15)
    M = T ** 1.5 * (1 + 0.3 * np.sin(np.log(T)))
    fit = diffusion_exponent(MomentSeries(2, T, M, "oracle"))
    assert fit.beta_minus <= fit.beta <= fit.beta_plus
    assert fit.beta_minus < fit.beta_plus


def test_exponent_needs_range():
    T = log_grid(10, 100, 8)
    with pytest.raises(InsufficientRange):
        diffusion_exponent(MomentSeries(2, T, T ** 1.5, "oracle"))
    T = log_grid(10, 1000, 4)
    with pytest.raises(InsufficientRange):
        diffusion_exponent(MomentSeries(2, T, T ** 1.5, "oracle"))


def test_series_validation_and_restrict():
    with pytest.raises(ValidationError):
        moment_series(free_source(), 2, [5.0], "magic")
    with pytest.raises(ValidationError):
        moment_series(free_source(), 2, [5.0], "green", cesaro=True)
    s = MomentSeries(2, [1.0, 10.0, 100.0], [1.0, 2.0, 3.0], "oracle")
    assert s.restrict(5, 100).T.tolist() == [10.0, 100.0]


def test_sources_agree_on_overlap():
    for src in (random_source(DIMER, 3, 1), periodic_source(DIMER, [1, 1, -1])):
        a, b = src.window(30), src.window(70)
        sub = b.sub(-30, 30)
        assert np.array_equal(a.v, sub.v) and np.array_equal(a.t, sub.t)
    w = periodic_source(DIMER, [1, -1]).window(6)
    assert w.v.tolist()[6:10] == [0.5, 0.5, -0.5, -0.5]
