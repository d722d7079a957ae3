import numpy as np
import pytest
from hypothesis import given, strategies as st

from gkdvlab.conserved import energy, mass
from gkdvlab.errors import BlowupDetected, ConfigInvalid
from gkdvlab.soliton import SolitonParams, scaled_soliton
from gkdvlab.solver import (SolverConfig, Sponge, airy_propagate, effective_bandwidth, evolve,
                            phi_functions, read_trace, relative_drift, smooth_ramp, wrap_horizon,
                            write_trace)
from gkdvlab.spectral import Field, Grid

from conftest import random_real_field


def test_phi_functions_match_closed_forms():
    z = np.array([-3.0, 2.0j, 1.5 - 0.5j, -40j, 300j])
    p1, p2, p3 = phi_functions(z)
    e = np.exp(z)
    assert np.allclose(p1, (e - 1) / z, rtol=1e-12)
    assert np.allclose(p2, (e - 1 - z) / z ** 2, rtol=1e-12)
    assert np.allclose(p3, (e - 1 - z - z ** 2 / 2) / z ** 3, rtol=1e-12)


def test_phi_functions_near_zero_are_taylor_limits():
    z = np.array([0.0, 1e-9j, -1e-7])
    p1, p2, p3 = phi_functions(z)
    assert np.allclose(p1, 1 + z / 2, atol=1e-14)
    assert np.allclose(p2, 0.5 + z / 6, atol=1e-14)
    assert np.allclose(p3, 1 / 6 + z / 24, atol=1e-14)


def test_airy_single_mode_phase():
    g = Grid(100.0, 256)
    xi = 2 * np.pi * 7 / g.L
    f = Field(g, np.exp(1j * xi * g.x), "physical", False)
    out = airy_propagate(f, 1.3).physical()
    assert np.abs(out - np.exp(1j * (xi * g.x + xi ** 3 * 1.3))).max() < 1e-12


@given(st.integers(0, 2 ** 31), st.floats(-50, 50), st.floats(-50, 50))
def test_airy_group_and_unitarity(seed, s, t):
    g = Grid(40.0, 64)
    f = random_real_field(g, seed)
    a = airy_propagate(airy_propagate(f, s), t)
    b = airy_propagate(f, s + t)
    assert np.allclose(a.physical(), b.physical(), atol=1e-10 * np.abs(f.physical()).max())
    assert np.isclose(a.l2(), f.l2(), rtol=1e-12)


def test_airy_solves_the_linear_equation():
    # u_t = -u_xxx checked by a centred time difference
    g = Grid(30.0, 128)
    f = Field.from_function(g, lambda x: np.exp(-x ** 2))
    h = 1e-5
    ut = (airy_propagate(f, h).physical() - airy_propagate(f, -h).physical()) / (2 * h)
    uxxx = np.real(Field(g, (1j * g.xi) ** 3 * f.spectral(), "spectral", True).physical())
    assert np.abs(ut + uxxx).max() < 1e-6


def test_linear_evolve_equals_airy_flow():
    g = Grid(50.0, 128)
    f = random_real_field(g, 3, band=3.0)
    tr = evolve(f, SolverConfig(dt=1e-2, t_end=1.0, nonlinear=False, snapshot_stride=50))
    exact = airy_propagate(f, 1.0)
    assert np.abs(tr.data[-1] - exact.physical()).max() < 1e-11


def test_sponge_record_restores_line_pullback():
    # linear flow: pullback of the damped solution plus the absorbed record is the initial data
    g = Grid(80.0, 256)
    f = Field.from_function(g, lambda x: np.exp(-(x / 3) ** 2) * np.cos(2 * x))
    cfg = SolverConfig(dt=5e-3, t_end=8.0, nonlinear=False, sponge=Sponge(15.0, 5.0), snapshot_stride=400)
    tr = evolve(f, cfg)
    assert tr.data[-1].std() < 0.5 * f.physical().std()  # radiation has reached the layer
    for i in range(len(tr)):
        pull = airy_propagate(tr[i], -tr.times[i]).physical() + tr.meta["absorbed"][i]
        assert np.abs(pull - f.physical()).max() < 1e-10


def test_sponge_profile_and_ramp():
    g = Grid(100.0, 512)
    sig = Sponge(10.0, 3.0).profile(g)
    assert np.all(sig[np.abs(g.x) < 39.9] == 0)
    assert np.isclose(sig[0], 3.0)
    s = np.linspace(-1, 2, 301)
    r = smooth_ramp(s)
    assert r[0] == 0 and r[-1] == 1 and np.all(np.diff(r) >= 0)
    assert np.all(Sponge(0.0, 3.0).profile(g) == 0)


def test_soliton_translates_at_unit_speed():
    g = Grid(60.0, 512)
    u0 = scaled_soliton(g, SolitonParams())
    tr = evolve(u0, SolverConfig(dt=1e-3, t_end=1.0, snapshot_stride=1000))
    exact = scaled_soliton(g, SolitonParams(1.0, 1.0), tail_tol=np.inf)
    assert (tr[1] - exact).l2() / exact.l2() < 1e-8
    h = tr.meta["history"]
    assert relative_drift(h["mass"]) < 1e-10 and relative_drift(h["energy"]) < 1e-9


@pytest.mark.parametrize("scheme", ["etdrk4", "ifrk4"])
def test_fourth_order_in_time(scheme):
    # both rules are pre-asymptotic above dt ~ 2e-3 on this data
    g = Grid(60.0, 256)
    u0 = scaled_soliton(g, SolitonParams()) + Field.from_function(g, lambda x: 0.2 * np.exp(-(x + 5) ** 2))

    def run(dt):
        return evolve(u0, SolverConfig(dt=dt, t_end=0.4, scheme=scheme, snapshot_stride=int(round(0.4 / dt)))).data[-1]

    ref = run(1e-4)
    e1 = np.linalg.norm(run(1e-3) - ref)
    e2 = np.linalg.norm(run(5e-4) - ref)
    assert 13.0 <= e1 / e2 <= 19.0


def test_conservation_of_mass_and_energy_in_time():
    g = Grid(80.0, 256)
    u0 = scaled_soliton(g, SolitonParams(1.1, -3.0)) + Field.from_function(g, lambda x: 0.1 * np.exp(-(x - 5) ** 2))
    tr = evolve(u0, SolverConfig(dt=1e-3, t_end=2.0, snapshot_stride=200))
    m = [mass(f) for f in tr.fields]
    e = [energy(f) for f in tr.fields]
    assert relative_drift(m) < 1e-9 and relative_drift(e) < 1e-7
    assert np.allclose(m, tr.meta["history"]["mass"])


def test_nonlinear_step_bound():
    g = Grid(60.0, 1024)
    u0 = scaled_soliton(g, SolitonParams(0.3, 0.0), tail_tol=np.inf)
    with pytest.raises(ConfigInvalid):
        evolve(u0, SolverConfig(dt=0.5, t_end=1.0))


def test_blowup_detection_reports_time():
    g = Grid(60.0, 256)
    u0 = scaled_soliton(g, SolitonParams())
    with pytest.raises(BlowupDetected) as info:
        evolve(u0, SolverConfig(dt=1e-3, t_end=1.0, blowup_factor=0.5))
    assert info.value.time == pytest.approx(1e-3)


@pytest.mark.parametrize("kw", [dict(dt=0.0, t_end=1.0), dict(dt=1e-3, t_end=-1.0),
                                dict(dt=1e-3, t_end=1.0, snapshot_stride=0),
                                dict(dt=1e-3, t_end=1.0, power=1),
                                dict(dt=1e-3, t_end=1.0, scheme="euler")])
def test_solver_config_validation(kw):
    with pytest.raises(ConfigInvalid):
        SolverConfig(**kw)


def test_complex_linear_run():
    g = Grid(20.0, 64)
    f = Field(g, np.exp(1j * 2 * np.pi * 3 * g.x / g.L), "physical", False)
    tr = evolve(f, SolverConfig(dt=1e-2, t_end=0.5, nonlinear=False, snapshot_stride=50))
    assert not tr.real_valued
    assert np.abs(tr.data[-1] - airy_propagate(f, 0.5).physical()).max() < 1e-12


def test_trace_write_read_round_trip(tmp_path):
    g = Grid(60.0, 256)
    u0 = scaled_soliton(g, SolitonParams(1.0, -5.0))
    tr = evolve(u0, SolverConfig(dt=1e-3, t_end=0.1, snapshot_stride=20))
    write_trace(tmp_path / "tr", tr, config_hash="abc")
    back = read_trace(tmp_path / "tr")
    assert np.allclose(back.times, tr.times) and back.meta["config_hash"] == "abc"
    assert np.abs(back.data - tr.data).max() < 1e-14
    assert np.allclose(back.meta["history"]["mass"], tr.meta["history"]["mass"])


def test_wrap_horizon_formula():
    g = Grid(200.0, 1024)
    xi = 2 * np.pi * 20 / g.L
    f = Field.from_function(g, lambda x: np.cos(xi * x))
    assert effective_bandwidth(f) == pytest.approx(xi)
    assert wrap_horizon(f) == pytest.approx(g.L / (6 * xi ** 2))
    assert wrap_horizon(f * 0.0) == np.inf
