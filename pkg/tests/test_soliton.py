import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad, solve_ivp

from gkdvlab.conserved import energy, mass
from gkdvlab.errors import BoxTooSmall
from gkdvlab.soliton import (AMPLITUDE, DERIVATIVE_RATIO, ENERGY_RATIO, QUINTIC_RATIO, SolitonParams,
                             q_mass_line, q_profile, q_prime_values, q_values, scaled_soliton,
                             soliton_energy, soliton_gradients, soliton_identities, soliton_mass)
from gkdvlab.spectral import Grid


def _shoot(a, x_end=14.0):
    """Integrate Q'' = Q - Q^4 from rest at Q(0) = a; report how the orbit leaves the homoclinic."""
    def crosses_zero(x, y):
        return y[0]
    crosses_zero.terminal = True

    def turns_back(x, y):
        return y[1] if x > 0.1 else -1.0
    turns_back.terminal = True
    turns_back.direction = 1

    sol = solve_ivp(lambda x, y: [y[1], y[0] - y[0] ** 4], (0, x_end), [a, 0.0],
                    events=[crosses_zero, turns_back], rtol=1e-12, atol=1e-14, dense_output=True)
    if sol.t_events[0].size:
        return +1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def shooting_amplitude():
    """Bisection for the peak height of the decaying orbit (independent of the closed form)."""
    lo, hi = 1.0, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        side, _ = _shoot(mid)
        if side > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_amplitude_from_shooting():
    assert abs(shooting_amplitude() - AMPLITUDE) < 1e-9


def test_profile_matches_shooting_ode():
    _, sol = _shoot(AMPLITUDE, x_end=8.0)
    x = np.linspace(0, 8.0, 200)
    y = sol.sol(x)
    # the decaying orbit is unstable, so compare where the ODE error has not yet grown
    assert np.abs(y[0] - q_values(x)).max() < 1e-8
    assert np.abs(y[1] - q_prime_values(x)).max() < 1e-8


def test_spectral_ode_residual():
    rep = soliton_identities(Grid(60.0, 4096))
    assert rep["ode_residual"] <= 1e-8
    assert rep["first_integral_residual"] <= 1e-10


def test_integral_ratios_against_quadrature():
    rep = soliton_identities(Grid(60.0, 4096))
    m = 2 * quad(lambda x: q_values(x) ** 2, 0, 40, limit=200, epsabs=1e-15)[0]
    d = 2 * quad(lambda x: q_prime_values(x) ** 2, 0, 40, limit=200, epsabs=1e-15)[0]
    q5 = 2 * quad(lambda x: q_values(x) ** 5, 0, 40, limit=200, epsabs=1e-15)[0]
    assert q_mass_line() == pytest.approx(m, rel=1e-12)
    assert d / m == pytest.approx(DERIVATIVE_RATIO, abs=1e-12)
    assert q5 / m == pytest.approx(QUINTIC_RATIO, abs=1e-12)
    assert (0.5 * d - 0.2 * q5) / m == pytest.approx(ENERGY_RATIO, abs=1e-12)
    assert rep["mass"] == pytest.approx(m, rel=1e-12)
    assert abs(rep["derivative_ratio"] - DERIVATIVE_RATIO) <= 1e-8
    assert abs(rep["quintic_ratio"] - QUINTIC_RATIO) <= 1e-8
    assert abs(rep["energy_ratio"] - ENERGY_RATIO) <= 1e-8


@given(st.floats(0.5, 2.0), st.floats(-10, 10))
def test_scaling_laws_of_mass_and_energy(lam, c):
    g = Grid(120.0, 2048)
    R = scaled_soliton(g, SolitonParams(lam, c))
    assert mass(R) == pytest.approx(soliton_mass(lam), rel=1e-10)
    assert energy(R) == pytest.approx(soliton_energy(lam), rel=1e-8)


@given(st.floats(0.6, 1.8), st.floats(-5, 5))
def test_parameter_gradients_match_differences(lam, c):
    g = Grid(120.0, 1536)
    p = SolitonParams(lam, c)
    d_lam, d_c = soliton_gradients(g, p)
    h = 1e-5
    fd_lam = (scaled_soliton(g, SolitonParams(lam + h, c)).physical()
              - scaled_soliton(g, SolitonParams(lam - h, c)).physical()) / (2 * h)
    fd_c = (scaled_soliton(g, SolitonParams(lam, c + h)).physical()
            - scaled_soliton(g, SolitonParams(lam, c - h)).physical()) / (2 * h)
    assert np.abs(d_lam - fd_lam).max() < 1e-8
    assert np.abs(d_c - fd_c).max() < 1e-8


def test_shape_properties():
    g = Grid(60.0, 1024)
    q = q_profile(g).physical()
    assert q.max() == pytest.approx(AMPLITUDE)
    assert np.allclose(q[1:], q[1:][::-1])  # even about x = 0
    R = scaled_soliton(g, SolitonParams(0.8, 29.0)).physical()  # wraps around the box
    assert np.argmax(R) == np.argmin(np.abs(g.displacement(29.0)))


def test_box_too_small():
    with pytest.raises(BoxTooSmall):
        q_profile(Grid(20.0, 256))
    with pytest.raises(BoxTooSmall):
        scaled_soliton(Grid(60.0, 256), SolitonParams(2.0, 0.0))
    scaled_soliton(Grid(20.0, 256), SolitonParams(), tail_tol=np.inf)


def test_params_validation():
    with pytest.raises(ValueError):
        SolitonParams(0.0)
    assert SolitonParams(0.5).speed == 4.0
