import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erfc

from gkdvlab.acceptance import fubini_error, homogeneity_errors, kato_run, shell_decay
from gkdvlab.errors import NegativeOrderOnNonzeroMean, WindowTooShort
from gkdvlab.norms import (KINDS, BilinearEnsembleSpec, EnsembleSpec, NormRecord, band_limited_noise,
                           bilinear_frame, bilinear_functional, bilinear_sampler, bilinear_symbol,
                           free_trace, full_product, h1_norm, kato_identity_monitor, kato_weight,
                           kato_weighted_integral, lebesgue_norm, quartilinear_functional,
                           quartilinear_ratio, ratio_table, sobolev_norm, spacetime_norm,
                           strichartz_constant_sampler, tapered_spacetime_l2, time_taper, wave_packet,
                           xsb_norm, xsb_shells)
from gkdvlab.soliton import SolitonParams, scaled_soliton
from gkdvlab.solver import SolverConfig, evolve
from gkdvlab.spectral import Field, Grid, Trace

from conftest import random_real_field

G = Grid(100.0, 256)


def _wave(seed=0, n=65, window=1.0):
    u0 = band_limited_noise(G, (0.5, 4.0), np.random.default_rng(seed))
    return u0, free_trace(u0, np.linspace(0.0, window, n))


# ---------------------------------------------------------------- spatial

@pytest.mark.parametrize("s", [-1.0 / 6.0, 0.5, 1.0, 2.0])
def test_sobolev_norm_of_a_mode(s):
    xi = 2 * np.pi * 5 / G.L
    f = Field.from_function(G, lambda x: np.cos(xi * x))
    assert sobolev_norm(f, s) == pytest.approx(xi ** s * np.sqrt(G.L / 2), rel=1e-12)
    assert sobolev_norm(f, s, homogeneous=False) == pytest.approx((1 + xi ** 2) ** (s / 2) * np.sqrt(G.L / 2))


def test_sobolev_zero_order_is_l2_and_h1_is_inhomogeneous():
    f = random_real_field(G, 1)
    assert sobolev_norm(f, 0.0) == pytest.approx(f.l2(), rel=1e-13)
    assert h1_norm(f) ** 2 == pytest.approx(f.l2() ** 2 + sobolev_norm(f, 1.0) ** 2, rel=1e-12)


def test_negative_homogeneous_order_needs_zero_mean():
    f = random_real_field(G, 2)
    with pytest.raises(NegativeOrderOnNonzeroMean):
        sobolev_norm(f, -1.0 / 6.0)
    sobolev_norm(f, -1.0 / 6.0, homogeneous=False)


def test_lebesgue_norm_of_constants():
    v = np.full(G.M, -2.0)
    for r in (1.0, 2.0, 5.0):
        assert lebesgue_norm(v, G.dx, r) == pytest.approx(2.0 * G.L ** (1 / r))
    assert lebesgue_norm(v, G.dx, np.inf) == 2.0


# ---------------------------------------------------------------- spacetime

def test_free_wave_energy_norms():
    u0, tr = _wave()
    assert spacetime_norm(tr, np.inf, 2.0) == pytest.approx(u0.l2(), rel=1e-13)
    assert spacetime_norm(tr, 2.0, 2.0) == pytest.approx(u0.l2(), rel=1e-12)  # window length 1


def test_fubini_and_homogeneity():
    assert fubini_error() <= 1e-10
    errs = homogeneity_errors()
    assert set(k.split("[")[0] for k in errs) == set(KINDS)
    assert max(errs.values()) <= 1e-12


@given(st.floats(-10, 10).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_homogeneity_property(c, seed):
    u0, tr = _wave(seed)
    trc = free_trace(u0 * c, tr.times)
    for q, r in ((6.0, 6.0), (4.0, np.inf), (np.inf, 2.0)):
        assert spacetime_norm(trc, q, r) == pytest.approx(abs(c) * spacetime_norm(tr, q, r), rel=1e-12)
    assert sobolev_norm(u0 * c, -0.25) == pytest.approx(abs(c) * sobolev_norm(u0, -0.25), rel=1e-12)


def test_spacetime_window_selection():
    _, tr = _wave(n=129, window=2.0)
    a = spacetime_norm(tr, 2.0, 2.0, window=(0.0, 1.0))
    assert a == pytest.approx(spacetime_norm(tr.window(0.0, 1.0), 2.0, 2.0))
    assert spacetime_norm(tr, 2.0, 2.0) == pytest.approx(np.sqrt(2.0) * a, rel=1e-12)


# ---------------------------------------------------------------- X^{s,b}

def test_xsb_parseval_identity():
    _, tr = _wave()
    assert xsb_norm(tr, 0.0, 2.0) == pytest.approx(tapered_spacetime_l2(tr), rel=1e-12)


def test_xsb_needs_enough_frames():
    _, tr = _wave(n=40)
    with pytest.raises(WindowTooShort):
        xsb_shells(tr)


def test_xsb_single_exponential_lands_in_its_shell():
    xi = 2 * np.pi * 4 / G.L
    sigma = 37.0
    times = np.linspace(0, 4.0, 257)
    data = np.exp(1j * (xi * G.x[None, :] + (xi ** 3 + sigma) * times[:, None]))
    prof = xsb_shells(Trace(G, times, data, False))
    assert prof.ks[np.argmax(prof.mass)] == 5  # 32 <= 37 < 64


def test_xsb_free_wave_profile_decays():
    _, tr = _wave()
    decays, n = shell_decay(xsb_shells(tr))
    assert decays and n >= 3


def test_xsb_weights_increase_with_b():
    _, tr = _wave()
    prof = xsb_shells(tr)
    vals = [xsb_norm(tr, b, profile=prof) for b in (0.0, 0.25, 0.5)]
    assert vals == sorted(vals)
    assert xsb_norm(tr, 0.5, np.inf, profile=prof) <= xsb_norm(tr, 0.5, 2.0, profile=prof)


def test_time_taper_shape():
    w = time_taper(100)
    assert w.max() == 1.0 and w[0] < 1e-3 and np.allclose(w, w[::-1])


# ---------------------------------------------------------------- Kato

@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_kato_weighted_integral_gaussian(sigma):
    # int exp(-x^2) exp(-sigma |x|) dx = sqrt(pi) exp(sigma^2/4) erfc(sigma/2); the kink of the
    # weight at the centre limits the grid quadrature to second order
    exact = 2.0 * np.sqrt(np.pi) * np.exp(sigma ** 2 / 4) * erfc(sigma / 2)
    errs = []
    for M in (1024, 2048):
        g = Grid(60.0, M)
        tr = Trace(g, np.linspace(0.0, 2.0, 5), np.tile(np.exp(-g.x ** 2 / 2), (5, 1)))
        errs.append(abs(kato_weighted_integral(tr, 0.0, sigma, with_derivative=False) - exact))
    assert errs[1] <= 2.5e-4 * sigma * exact
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_kato_weighted_integral_follows_the_path():
    g = Grid(60.0, 2048)
    times = np.arange(11.0)
    shift = lambda t: 7 * t * g.dx  # on grid nodes, so translation is exact
    data = np.array([np.exp(-g.displacement(shift(t)) ** 2 / 2) for t in times])
    moving = kato_weighted_integral(Trace(g, times, data), shift, 1.0, with_derivative=False)
    still = kato_weighted_integral(Trace(g, times, np.tile(data[0], (11, 1))), 0.0, 1.0, with_derivative=False)
    assert moving == pytest.approx(still, rel=1e-12)


def test_kato_weight_derivatives():
    y = np.linspace(-300, 300, 2001)
    psi, d1, d3 = kato_weight(y, 100.0)
    h = y[1] - y[0]
    assert np.allclose(np.gradient(psi, h), d1, atol=1e-6)
    assert np.allclose(np.gradient(np.gradient(np.gradient(psi, h), h), h)[5:-5], d3[5:-5], atol=1e-8)


def test_kato_monitor_free_flow_converges():
    coarse, fine = kato_run(101), kato_run(201)
    r1, r2 = coarse["residual_per_unit_time"], fine["residual_per_unit_time"]
    assert r2 <= 1e-6
    assert 3.2 <= r1 / r2 <= 4.8
    assert fine["max_increase"] < 0


def test_kato_monitor_with_gkdv_forcing():
    g = Grid(100.0, 1024)
    tr = evolve(scaled_soliton(g, SolitonParams()), SolverConfig(dt=1e-3, t_end=1.0, snapshot_stride=10))
    rep = kato_identity_monitor(tr, path=lambda t: t, psi_scale=20.0, forcing="gkdv", center_speed=1.0)
    assert rep["max_residual"] < 1e-5
    assert np.ptp(rep["weighted_mass"]) < 1e-8  # the soliton is at rest in the moving frame


# ---------------------------------------------------------------- multilinear

def test_bilinear_frame_against_double_sum():
    g = Grid(2 * np.pi, 16)
    u, v = random_real_field(g, 1), random_real_field(g, 2)
    cu, cv = u.spectral(), v.spectral()
    K = g.kmax
    expect = np.zeros(4 * K + 1, complex)
    for k1 in range(-K, K + 1):
        for k2 in range(-K, K + 1):
            expect[k1 + k2 + 2 * K] += bilinear_symbol(k1, k2) * cu[k1 % g.M] * cv[k2 % g.M]
    assert np.allclose(bilinear_frame(cu, cv, g), expect, atol=1e-13)


def test_bilinear_vanishes_on_the_diagonal_and_is_symmetric():
    mode = Field.from_function(G, lambda x: np.cos(2 * np.pi * 5 * x / G.L))
    tr = free_trace(mode, np.linspace(0, 1, 9))
    assert bilinear_functional(tr, tr) <= 1e-14 * mode.l2() ** 2
    _, a = _wave(1, n=9)
    _, b = _wave(2, n=9)
    assert bilinear_functional(a, b) == pytest.approx(bilinear_functional(b, a), rel=1e-12)


def test_full_product_matches_pointwise_product():
    g = Grid(2 * np.pi, 32)
    fs = [random_real_field(g, s, band=4.0) for s in range(3)]
    ks, c = full_product([f.spectral() for f in fs], g)
    x = g.x
    recon = np.real(sum(ck * np.exp(1j * k * x) for k, ck in zip(ks, c)))
    assert np.allclose(recon, fs[0].physical() * fs[1].physical() * fs[2].physical(), atol=1e-11)


def test_quartilinear_requires_zero_mean():
    g = Grid(50.0, 64)
    tr = free_trace(random_real_field(g, 0), np.linspace(0, 1, 5))
    with pytest.raises(NegativeOrderOnNonzeroMean):
        quartilinear_functional(tr, tr, tr, tr)


def test_quartilinear_ratio_is_scale_invariant():
    ratios = []
    for lam in (1.0, 1.25):
        g = Grid(100 * lam, 256)
        w = wave_packet(g, 0.0, 1.0 / lam, 3.0 * lam)
        w = Field(g, lam ** (-2.0 / 3.0) * w.physical(), "physical", True)
        ratios.append(quartilinear_ratio(w, 2.0 * lam ** 3).ratio)
    assert ratios[1] == pytest.approx(ratios[0], rel=1e-10)


# ---------------------------------------------------------------- samplers

def test_strichartz_sampler_is_seeded_and_order_free():
    spec = EnsembleSpec(n_samples=6, seed=3)
    a = strichartz_constant_sampler(spec)
    b = strichartz_constant_sampler(spec, map_fn=lambda f, xs: [f(x) for x in xs][::-1][::-1])
    assert [s.ratio for s in a] == [s.ratio for s in b]
    table = ratio_table(a)
    assert np.all(np.abs(table["Linft_L2x"] - 1) <= 4 * np.finfo(float).eps)
    c = strichartz_constant_sampler(EnsembleSpec(n_samples=6, seed=4))
    assert [s.ratio for s in a] != [s.ratio for s in c]


def test_bilinear_sampler_is_stable():
    r = np.array([s.ratio for s in bilinear_sampler(BilinearEnsembleSpec(n_pairs=20))])
    med = np.median(r)
    assert r.min() >= 0.8 * med and r.max() <= 1.2 * med


def test_norm_record_serialises():
    rec = NormRecord("xsb", {"b": 0.5, "q": 2.0}, 1.25, (0.0, 1.0), {"L": 1.0, "M": 8, "kmax": 3}, None)
    d = json.loads(rec.to_json())
    assert d == {"kind": "xsb", "params": {"b": 0.5, "q": 2.0}, "value": 1.25, "window": [0.0, 1.0],
                 "grid": {"L": 1.0, "M": 8, "kmax": 3}, "base": None}
