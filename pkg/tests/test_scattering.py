import csv

import numpy as np
import pytest
from scipy.integrate import quad

from gkdvlab.errors import NegativeOrderOnNonzeroMean
from gkdvlab.experiments import band_limited_bump
from gkdvlab.modulation import decompose_trace
from gkdvlab.norms import h1_norm, sobolev_norm
from gkdvlab.scattering import (_filon_weights, _phi12, checkpoint_schedule, decoupling_check,
                                duhamel_accumulate, duhamel_check, hneg16, mass_bookkeeping,
                                pullback_state, scatter_diagnostics, scattering_distance,
                                trusted_horizon)
from gkdvlab.soliton import SolitonParams, q_mass_line, scaled_soliton
from gkdvlab.solver import SolverConfig, Sponge, evolve, phi_functions
from gkdvlab.spectral import Grid

from conftest import random_real_field

GRID = Grid(100.0, 1024)


@pytest.fixture(scope="module")
def perturbed():
    """A perturbed soliton to t = 1 (every 5th step) and a dense head over [0, 0.2]."""
    u0 = scaled_soliton(GRID, SolitonParams()) + band_limited_bump(GRID, 0.01, 0)
    main = evolve(u0, SolverConfig(dt=1e-3, t_end=1.0, snapshot_stride=5))
    head = evolve(u0, SolverConfig(dt=1e-3, t_end=0.2, snapshot_stride=1))
    return decompose_trace(main, 0.01), decompose_trace(head, 0.01)


def test_pullback_of_a_free_wave_is_constant():
    u0 = random_real_field(GRID, 3, band=3.0, zero_mean=True)
    tr = evolve(u0, SolverConfig(dt=1e-2, t_end=2.0, snapshot_stride=50, nonlinear=False))
    for i in range(len(tr)):
        assert h1_norm(pullback_state(tr[i], tr.times[i]) - u0) < 1e-11
    diag = scatter_diagnostics(tr, [0.5, 1.0, 1.5, 2.0], 2.0)
    assert np.all(diag.total_dist < 1e-11)
    assert scattering_distance(tr, u0, 1.0, remove_mean=True) < 1e-11


def test_sponge_record_keeps_the_line_pullback():
    g = Grid(80.0, 512)
    u0 = random_real_field(g, 5, band=2.0, zero_mean=True)
    cfg = SolverConfig(dt=1e-2, t_end=6.0, snapshot_stride=100, nonlinear=False, sponge=Sponge(15.0, 20.0))
    tr = evolve(u0, cfg)
    assert tr.data[-1].std() < 0.9 * u0.physical().std()  # the layer did absorb something
    diag = scatter_diagnostics(tr, [2.0, 4.0, 6.0], 6.0)
    assert np.all(diag.total_dist < 1e-6 * h1_norm(u0))


def test_checkpoint_schedule():
    assert checkpoint_schedule(2.0, 10.0) == pytest.approx([2.0, 3.0, 4.5, 6.75])
    assert checkpoint_schedule(1.0, 4.0, 2.0) == [1.0, 2.0, 4.0]
    with pytest.raises(ValueError):
        checkpoint_schedule(1.0, 4.0, 1.0)


def test_trusted_horizon_with_sponge():
    assert trusted_horizon(Grid(800.0, 64), None, Sponge(100.0, 30.0), margin=20.0) == 280.0
    assert trusted_horizon(Grid(800.0, 64), None, Sponge(100.0, 30.0), center=300.0) == 0.0


def test_hneg16_mean_handling():
    f = random_real_field(GRID, 1)
    norm, mean = hneg16(f)
    assert mean == pytest.approx(np.real(f.spectral()[0]))
    assert norm == pytest.approx(sobolev_norm(f - mean, -1.0 / 6.0), rel=1e-12)
    with pytest.raises(NegativeOrderOnNonzeroMean):
        hneg16(f, remove_mean=False)


@pytest.mark.parametrize("z", [0.3j, -2.0j, 17.0j, 1e-4j, 0.5 - 0.5j])
def test_quadrature_weights(z):
    def integral(g):
        re = quad(lambda s: np.real(np.exp(z * s) * g(s)), 0, 1, epsabs=1e-14, limit=200)[0]
        im = quad(lambda s: np.imag(np.exp(z * s) * g(s)), 0, 1, epsabs=1e-14, limit=200)[0]
        return re + 1j * im

    wa, wb = _filon_weights(np.array([z]))
    assert wa[0] == pytest.approx(integral(lambda s: 1 - s), abs=1e-12)
    assert wb[0] == pytest.approx(integral(lambda s: s), abs=1e-12)
    p1, p2 = _phi12(np.array([z]))
    r1, r2, _ = phi_functions(np.array([z]))
    assert p1[0] == pytest.approx(r1[0], abs=1e-13)
    assert p2[0] == pytest.approx(r2[0], abs=1e-13)


def test_phi12_is_continuous_at_the_series_switch():
    z = np.array([0.99e-2j, 1.01e-2j, -0.99e-2, -1.01e-2])
    p1, p2 = _phi12(z)
    assert abs(p1[0] - p1[1]) < 1e-3 and abs(p2[2] - p2[3]) < 1e-3
    r1, r2, _ = phi_functions(z)
    assert np.allclose(p1, r1, atol=1e-14) and np.allclose(p2, r2, atol=1e-14)


def test_duhamel_route_matches_pullback(perturbed):
    dec, head = perturbed
    T = dec.w.times[-1]
    pull = pullback_state(dec.w[-1], T)
    rep = duhamel_check(dec, T, pull, head=head)
    assert rep["within_budget"], rep.values
    assert rep["h1_difference"] < 1e-3 * rep["pullback_h1"]


def test_duhamel_rules_agree_on_a_fine_trace(perturbed):
    _, head = perturbed
    a = duhamel_accumulate(head, rule="comoving")
    b = duhamel_accumulate(head, rule="filon")
    assert h1_norm(a - b) < 1e-3 * h1_norm(a)
    with pytest.raises(ValueError):
        duhamel_accumulate(head, rule="simpson")


def test_mass_bookkeeping_is_exact(perturbed):
    dec, _ = perturbed
    for i in (0, len(dec.w) // 2, len(dec.w) - 1):
        resid, total = mass_bookkeeping(dec, i)
        assert abs(resid) < 1e-12 * total


def test_decoupling_of_the_pure_soliton():
    g = Grid(60.0, 4096)
    q = scaled_soliton(g, SolitonParams(), tail_tol=np.inf)
    rep = decoupling_check(q, 1.0, None)
    assert abs(rep["mass_residual"]) < 1e-12 * q_mass_line()
    assert abs(rep["energy_residual"]) < 1e-12 * q_mass_line()


def test_decoupling_scaled_soliton():
    g = Grid(80.0, 4096)
    lam = 1.3
    q = scaled_soliton(g, SolitonParams(lam), tail_tol=np.inf)
    rep = decoupling_check(q, lam, None)
    assert abs(rep["mass_residual"]) < 1e-11 and abs(rep["energy_residual"]) < 1e-11


def test_diagnostics_csv(tmp_path):
    u0 = random_real_field(GRID, 4, band=3.0, zero_mean=True)
    tr = evolve(u0, SolverConfig(dt=1e-2, t_end=1.0, snapshot_stride=25, nonlinear=False))
    diag = scatter_diagnostics(tr, [0.25, 0.5, 1.0, 5.0], 1.0)
    assert diag.checkpoints == [0.25, 0.5, 1.0]
    path = tmp_path / "d.csv"
    diag.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["checkpoint", "H1_dist", "Hneg16_dist"]
    assert len(rows) == 3 and float(rows[1][0]) == 0.5
    assert diag.to_dict()["strictly_decreasing"] == diag.strictly_decreasing
