"""Norms of fields and traces, together with the smoothing and multilinear estimate functionals.

Every norm is written against the discrete convention of :mod:`gkdvlab.spectral`
(``int |f|^2 dx = L sum |c_k|^2``), so changing the box rescales values
consistently.  Spacetime norms are over an explicit time window; nothing is
extrapolated to the whole time axis.

X^{s,b} shells
--------------
A trace is pulled back by the Airy flow, ``v(t) = exp(t d_xxx) u(t)``, so that
the temporal frequency of ``v`` is the modulation ``sigma = tau - xi^3`` of
``u``.  ``v`` is multiplied by the time taper :func:`time_taper` (flat in the
middle, C-infinity ramps over the outer ``ramp`` fraction on each side) and
transformed in time.  Shell ``k`` collects ``2^k <= |sigma| < 2^{k+1}``.  Shells
finer than the temporal resolution ``2 pi / (N_t dt)`` cannot be resolved; they
are merged, together with ``sigma = 0``, into the lowest resolvable shell.
Shell masses are normalised so that their root-sum-square equals the spacetime
``L^2`` norm of the tapered trace (rectangle rule in time).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import WindowTooShort
from .report import Report
from .solver import smooth_ramp
from .spectral import Field, Trace, _check_mean, to_physical, to_spectral

MIN_XSB_FRAMES = 64

KINDS = ("sobolev_hom", "sobolev_inhom", "lebesgue_spacetime", "xsb", "weighted_kato")


@dataclass
class NormRecord:
    """One evaluated norm, serialisable as ``{kind, params, window, value, grid, base}``."""

    kind: str
    params: dict
    value: float
    window: tuple | None = None
    grid: dict = field(default_factory=dict)
    base: float | None = None

    def to_dict(self):
        d = asdict(self)
        d["window"] = None if self.window is None else [float(t) for t in self.window]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _grid_dict(grid):
    return {"L": float(grid.L), "M": int(grid.M), "kmax": int(grid.kmax)}


# ---------------------------------------------------------------- spatial norms

def sobolev_norm(f, s, homogeneous=True):
    """``|| |xi|^s fhat ||`` (homogeneous) or ``|| <xi>^s fhat ||``.

    Homogeneous norms of negative order require a zero mean (the zero mode is
    excluded either way).
    """
    c = f.spectral()
    xi = np.abs(f.grid.xi)
    if homogeneous:
        if s < 0:
            _check_mean(c, s)
        w = np.zeros_like(xi)
        nz = xi > 0
        w[nz] = xi[nz] ** (2.0 * s)
        if s == 0:
            w[~nz] = 1.0
    else:
        w = (1.0 + xi ** 2) ** s
    return float(np.sqrt(f.grid.L * np.sum(w * np.abs(c) ** 2)))


def h1_norm(f):
    return sobolev_norm(f, 1.0, homogeneous=False)


def lebesgue_norm(values, dx, r):
    """Spatial ``L^r`` by the periodic trapezoid rule, along the last axis."""
    a = np.abs(values)
    if np.isinf(r):
        return a.max(axis=-1)
    return (np.sum(a ** r, axis=-1) * dx) ** (1.0 / r)


def _time_norm(g, times, q):
    if np.isinf(q):
        return float(np.max(g))
    if len(times) == 1:
        return 0.0
    return float(np.trapezoid(g ** q, times) ** (1.0 / q))


def _windowed(tr, window):
    if window is None:
        return tr
    return tr.window(*window)


def spacetime_norm(tr, q, r, window=None):
    """``L^q_t L^r_x``: spatial trapezoid per frame, then temporal trapezoid over the frames."""
    sub = _windowed(tr, window)
    if not sub.uniform_dt:
        raise ValueError("spacetime norms need uniformly spaced frames")
    g = lebesgue_norm(sub.data, sub.grid.dx, r)
    return _time_norm(np.asarray(g, dtype=float), sub.times, q)


# ---------------------------------------------------------------- X^{s,b}

def time_taper(n, ramp=0.25):
    """Smooth window on ``n`` frames: 1 in the middle, C-infinity ramps over ``ramp*n`` frames per side."""
    s = (np.arange(n) + 0.5) / n
    up = smooth_ramp(s / ramp)
    down = smooth_ramp((1.0 - s) / ramp)
    return up * down


@dataclass
class ShellProfile:
    ks: np.ndarray
    mass: np.ndarray
    k_floor: int
    resolution: float
    window: tuple

    def rows(self):
        return list(zip(self.ks.tolist(), self.mass.tolist()))


def xsb_shells(tr, window=None, ramp=0.25):
    """Shell masses ``||u~||_{L^2(A_k)}`` of the tapered trace over dyadic modulation shells."""
    sub = _windowed(tr, window)
    n = len(sub)
    if n < MIN_XSB_FRAMES:
        raise WindowTooShort(f"xsb norms need at least {MIN_XSB_FRAMES} frames, got {n}")
    if not sub.uniform_dt:
        raise ValueError("xsb norms need uniformly spaced frames")
    grid = sub.grid
    dt = sub.dt
    c = sub.spectral()
    phase = np.exp(-1j * np.outer(sub.times, grid.xi ** 3))
    v = c * phase * time_taper(n, ramp)[:, None]
    V = np.fft.fft(v, axis=0) / n
    sigma = np.abs(2 * np.pi * np.fft.fftfreq(n, d=dt))
    resolution = 2 * np.pi / (n * dt)
    k_floor = int(np.floor(np.log2(resolution)))
    with np.errstate(divide="ignore"):
        k_of = np.where(sigma > 0, np.floor(np.log2(np.where(sigma > 0, sigma, 1.0))), k_floor)
    k_of = np.maximum(k_of.astype(int), k_floor)
    ks = np.arange(k_floor, int(k_of.max()) + 1)
    power_t = np.sum(np.abs(V) ** 2, axis=1)
    mass2 = np.bincount(k_of - k_floor, weights=power_t, minlength=len(ks))
    scale = dt * grid.L * n
    return ShellProfile(ks, np.sqrt(scale * mass2), k_floor, resolution,
                        (float(sub.times[0]), float(sub.times[-1])))


def xsb_norm(tr, b, q_dyadic=2.0, window=None, ramp=0.25, profile=None):
    """``(sum_k (2^{bk} m_k)^q)^{1/q}`` over the shell masses ``m_k``."""
    prof = profile if profile is not None else xsb_shells(tr, window, ramp)
    weighted = 2.0 ** (b * prof.ks) * prof.mass
    if np.isinf(q_dyadic):
        return float(weighted.max())
    return float(np.sum(weighted ** q_dyadic) ** (1.0 / q_dyadic))


def tapered_spacetime_l2(tr, window=None, ramp=0.25):
    """Rectangle-rule ``||chi(t) u||_{L^2_{t,x}}``; equals ``xsb_norm(b=0, q=2)`` by Parseval."""
    sub = _windowed(tr, window)
    chi = time_taper(len(sub), ramp)
    per = lebesgue_norm(sub.data, sub.grid.dx, 2) ** 2
    return float(np.sqrt(sub.dt * np.sum(chi ** 2 * per)))


# ---------------------------------------------------------------- Kato smoothing

def _centers(path, times):
    if path is None:
        return np.zeros_like(times)
    if callable(path):
        return np.asarray(path(times), dtype=float)
    if np.isscalar(path):
        return np.full_like(times, float(path))
    return np.interp(times, path.times, path.center)


def kato_weighted_integral(tr, path, sigma=1.0, with_derivative=True, window=None):
    """``int int (w^2 + w_x^2) exp(-sigma |x - x(t)|) dx dt`` (trapezoid in time).

    ``path`` may be a :class:`ModulationPath`, a function of time, a constant, or None (x(t) = 0).
    """
    sub = _windowed(tr, window)
    grid = sub.grid
    cen = _centers(path, sub.times)
    vals = np.empty(len(sub))
    c = sub.spectral()
    wx = to_physical(1j * grid.xi * c, grid, sub.real_valued) if with_derivative else None
    for i in range(len(sub)):
        weight = np.exp(-sigma * np.abs(grid.displacement(cen[i])))
        dens = np.abs(sub.data[i]) ** 2
        if with_derivative:
            dens = dens + np.abs(wx[i]) ** 2
        vals[i] = np.sum(dens * weight) * grid.dx
    if len(sub) == 1:
        return 0.0
    return float(np.trapezoid(vals, sub.times))


def kato_weight(y, scale):
    """``psi, psi', psi'''`` for ``psi(y) = tanh(y/scale)``."""
    T = np.tanh(y / scale)
    sech2 = 1.0 - T ** 2
    return T, sech2 / scale, -2.0 * sech2 * (1.0 - 3.0 * T ** 2) / scale ** 3


def kato_identity_monitor(tr, path=None, psi_scale=100.0, forcing=None, center_speed=None):
    """Residual of the weighted mass-transport identity along the trace.

    With ``I(t) = int psi(x - x(t)) u^2`` and ``u_t + u_xxx = F`` the identity reads

        I' + x' int psi' u^2 - int psi''' u^2 + 3 int psi' u_x^2 - 2 int psi u F = 0.

    ``I'`` is taken by second-order finite differences over the frames.  ``forcing``
    is None (Airy flow), ``"gkdv"`` (``F = -(u^4)_x``) or a callable returning F as
    a physical array for frame ``i``.  For ``x(t) = t`` and ``F = 0`` this is
    ``I' + int (psi' - psi''') u^2 + 3 int psi' u_x^2 = 0``.
    """
    grid = tr.grid
    t = tr.times
    n = len(tr)
    cen = _centers(path, t)
    if center_speed is None:
        speed = np.gradient(cen, t, edge_order=2) if n >= 3 else np.zeros(n)
    else:
        speed = np.broadcast_to(np.asarray(center_speed, dtype=float), (n,))
    c = tr.spectral()
    ux = np.real(to_physical(1j * grid.xi * c, grid, True))
    u = np.real(tr.data)
    I = np.empty(n)
    rhs = np.empty(n)
    for i in range(n):
        psi, dpsi, d3psi = kato_weight(grid.displacement(cen[i]), psi_scale)
        I[i] = np.sum(psi * u[i] ** 2) * grid.dx
        r = speed[i] * np.sum(dpsi * u[i] ** 2) - np.sum(d3psi * u[i] ** 2) + 3 * np.sum(dpsi * ux[i] ** 2)
        if forcing is not None:
            if forcing == "gkdv":
                F = -np.real(to_physical(1j * grid.xi * to_spectral(u[i] ** 4, grid), grid, True))
            else:
                F = np.asarray(forcing(i), dtype=float)
            r -= 2 * np.sum(psi * u[i] * F)
        rhs[i] = r * grid.dx
    dI = np.gradient(I, t, edge_order=2) if n >= 3 else np.zeros(n)
    resid = dI + rhs
    rep = Report("kato_identity")
    rep["times"] = t
    rep["weighted_mass"] = I
    rep["residual"] = resid
    span = t[-1] - t[0] if n > 1 else 1.0
    rep["residual_per_unit_time"] = float(np.trapezoid(np.abs(resid), t) / span) if n > 1 else 0.0
    rep["max_residual"] = float(np.abs(resid).max()) if n else 0.0
    rep["max_increase"] = float(np.max(np.diff(I))) if n > 1 else 0.0
    rep.meta.update({"psi_scale": psi_scale, "forcing": forcing if isinstance(forcing, str) else
                     ("custom" if forcing is not None else None)})
    return rep


# ---------------------------------------------------------------- multilinear functionals

def bilinear_symbol(xi1, xi2):
    return np.sqrt(np.abs(xi1 + xi2) * np.abs(xi1 - xi2))


def _support(c, rel_tol):
    a = np.abs(c)
    top = a.max()
    if top == 0:
        return np.zeros(0, dtype=int)
    return np.nonzero(a > rel_tol * top)[0]


def bilinear_frame(cu, cv, grid, rel_tol=0.0):
    """Coefficients of ``B(u, v)`` on the extended line ``s = k1 + k2 in [-2K, 2K]``.

    ``B^(s) = sum_{k1 + k2 = s} m(xi_{k1}, xi_{k2}) u^(k1) v^(k2)`` with no wrap-around.
    Only retained modes ``|k| <= K`` enter; coefficients below ``rel_tol`` times the
    largest one are skipped.
    """
    K = grid.kmax
    k = grid.k
    keep = grid.retained
    iu = _support(np.where(keep, cu, 0), rel_tol)
    iv = _support(np.where(keep, cv, 0), rel_tol)
    out = np.zeros(4 * K + 1, dtype=complex)
    if len(iu) == 0 or len(iv) == 0:
        return out
    k1 = k[iu][:, None]
    k2 = k[iv][None, :]
    d = 2 * np.pi / grid.L
    m = bilinear_symbol(d * k1, d * k2)
    vals = (m * cu[iu][:, None] * cv[iv][None, :]).ravel()
    idx = (k1 + k2 + 2 * K).ravel()
    out += np.bincount(idx, weights=vals.real, minlength=4 * K + 1)
    out += 1j * np.bincount(idx, weights=vals.imag, minlength=4 * K + 1)
    return out


def bilinear_functional(u, v, window=None, rel_tol=0.0):
    """``|| B(u, v) ||_{L^2_{t,x}}`` over the window (trapezoid in time)."""
    su, sv = _windowed(u, window), _windowed(v, window)
    if len(su) != len(sv) or not np.allclose(su.times, sv.times):
        raise ValueError("bilinear_functional needs traces on the same time samples")
    if not su.uniform_dt:
        raise ValueError("bilinear_functional needs uniformly spaced frames")
    grid = su.grid
    cu, cv = su.spectral(), sv.spectral()
    per = np.array([grid.L * np.sum(np.abs(bilinear_frame(cu[i], cv[i], grid, rel_tol)) ** 2)
                    for i in range(len(su))])
    if len(su) == 1:
        return 0.0
    return float(np.sqrt(np.trapezoid(per, su.times)))


def full_product(coeff_list, grid):
    """Product coefficients on the extended line ``[-nK, nK]`` (no truncation, no aliasing)."""
    K = grid.kmax
    n = len(coeff_list)
    P = 2 * n * K + 2
    prod = np.ones(P, dtype=complex)
    for c in coeff_list:
        buf = np.zeros(P, dtype=complex)
        buf[:K + 1] = c[:K + 1]
        if K:
            buf[-K:] = c[-K:]
        prod = prod * np.fft.ifft(buf) * P
    out = np.fft.fft(prod) / P
    ks = np.arange(-n * K, n * K + 1)
    return ks, out[ks % P]


def quartilinear_functional(u1, u2, u3, u4, window=None):
    """``|| (P+ u1)(P+ u2)(P- u3)(P- u4) ||_{L^1_t Hdot^{1/2}_x}``.

    The product is formed alias free on the extended frequency line, so its
    ``Hdot^{1/2}`` norm includes every output frequency.  Inputs must have zero mean.
    """
    subs = [_windowed(u, window) for u in (u1, u2, u3, u4)]
    n = len(subs[0])
    if any(len(s) != n for s in subs):
        raise ValueError("quartilinear_functional needs traces on the same time samples")
    grid = subs[0].grid
    signs = ("+", "+", "-", "-")
    specs = []
    for s, sg in zip(subs, signs):
        c = s.spectral()
        for row in c:
            _check_mean(row, -0.25)
        mask = (grid.k >= 0) if sg == "+" else (grid.k < 0)
        specs.append(c * mask)
    d = 2 * np.pi / grid.L
    vals = np.empty(n)
    for i in range(n):
        ks, pc = full_product([sp[i] for sp in specs], grid)
        vals[i] = np.sqrt(grid.L * np.sum(np.abs(d * ks) * np.abs(pc) ** 2))
    if n == 1:
        return 0.0
    return float(np.trapezoid(vals, subs[0].times))


# ---------------------------------------------------------------- ensembles

@dataclass
class EstimateSample:
    functional: str
    description: str
    numerator: float
    denominator: float

    def __post_init__(self):
        if not self.denominator > 0:
            raise ValueError(f"estimate denominator must be positive, got {self.denominator}")

    @property
    def ratio(self):
        return self.numerator / self.denominator

    def to_dict(self):
        return {"functional": self.functional, "input": self.description,
                "numerator": self.numerator, "denominator": self.denominator, "ratio": self.ratio}


@dataclass
class EnsembleSpec:
    """Random zero-mean band-limited data evolved by the Airy flow over ``[0, window]``."""

    n_samples: int = 200
    L: float = 100.0
    M: int = 256
    band: tuple = (0.5, 4.0)
    window: float = 1.0
    n_frames: int = 65
    seed: int = 0


STRICHARTZ_PAIRS = (
    ("L4t_Linfx", 4.0, np.inf, -0.25),
    ("L6tx", 6.0, 6.0, -1.0 / 6.0),
    ("Linft_L2x", np.inf, 2.0, 0.0),
    ("L8tx", 8.0, 8.0, 0.0),
    ("L6t_Linfx", 6.0, np.inf, 0.0),
)


def band_limited_noise(grid, band, rng):
    """Real zero-mean field with iid complex Gaussian coefficients on ``band[0] <= |xi| <= band[1]``."""
    xi = grid.xi
    sel = (grid.k > 0) & (xi >= band[0]) & (xi <= band[1])
    c = np.zeros(grid.M, dtype=complex)
    z = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    c[sel] = z
    c[(-grid.k[sel]) % grid.M] = np.conj(z)
    return Field(grid, c, "spectral", True)


def free_trace(u0, times):
    """Airy evolution of ``u0`` sampled at ``times``."""
    c = u0.spectral()
    phase = np.exp(1j * np.outer(times, u0.grid.xi ** 3))
    data = to_physical(c[None, :] * phase, u0.grid, u0.real_valued)
    return Trace(u0.grid, times, data, u0.real_valued)


def _strichartz_one(args):
    spec, seq, idx = args
    from .spectral import Grid
    grid = Grid(spec.L, spec.M)
    rng = np.random.default_rng(seq)
    u0 = band_limited_noise(grid, spec.band, rng)
    tr = free_trace(u0, np.linspace(0.0, spec.window, spec.n_frames))
    out = []
    for name, q, r, s in STRICHARTZ_PAIRS:
        num = spacetime_norm(tr, q, r)
        den = sobolev_norm(u0, s, homogeneous=True)
        out.append(EstimateSample(name, f"sample {idx}", num, den))
    return out


def strichartz_constant_sampler(spec, map_fn=map):
    """Ratios of each Strichartz pair for ``spec.n_samples`` seeded samples.

    Sample ``i`` draws from the ``i``-th child of ``SeedSequence(spec.seed)``, so
    results do not depend on evaluation order; ``map_fn`` may be an executor's ``map``.
    """
    if spec.n_samples <= 0:
        return []
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_samples)
    results = map_fn(_strichartz_one, [(spec, children[i], i) for i in range(spec.n_samples)])
    return [s for group in results for s in group]


def ratio_table(samples):
    """``{functional: array of ratios}``."""
    out = {}
    for s in samples:
        out.setdefault(s.functional, []).append(s.ratio)
    return {k: np.array(v) for k, v in out.items()}


def wave_packet(grid, center, freq, width):
    """Real packet ``exp(-(x-center)^2 / (2 width^2)) cos(freq (x - center))``, mean removed spectrally."""
    y = grid.displacement(center)
    f = Field(grid, np.exp(-0.5 * (y / width) ** 2) * np.cos(freq * y), "physical", True)
    c = f.spectral().copy()
    c[0] = 0.0
    return f.with_spectral(c)


@dataclass
class BilinearEnsembleSpec:
    """Pairs of real packets at separated frequencies, launched to cross mid-window."""

    n_pairs: int = 100
    L: float = 200.0
    M: int = 256
    freq_range: tuple = (0.5, 2.0)
    min_separation: float = 0.5
    width: float = 4.0
    window: float = 20.0
    n_frames: int = 41
    seed: int = 0


def bilinear_sampler(spec, rel_tol=1e-10):
    """``||B(e^{-t d^3} u0, e^{-t d^3} v0)||_{L^2_{t,x}} / (||u0|| ||v0||)`` for random packet pairs."""
    from .spectral import Grid
    grid = Grid(spec.L, spec.M)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_pairs)
    times = np.linspace(0.0, spec.window, spec.n_frames)
    t_mid = 0.5 * spec.window
    out = []
    for i, seq in enumerate(children):
        rng = np.random.default_rng(seq)
        lo, hi = spec.freq_range
        while True:
            a, b = np.sort(rng.uniform(lo, hi, size=2))
            if b - a >= spec.min_separation:
                break
        # group velocity -3 xi^2: start each packet where it reaches x = 0 at mid-window
        u0 = wave_packet(grid, 3 * a * a * t_mid, a, spec.width)
        v0 = wave_packet(grid, 3 * b * b * t_mid, b, spec.width)
        num = bilinear_functional(free_trace(u0, times), free_trace(v0, times), rel_tol=rel_tol)
        out.append(EstimateSample("bilinear", f"pair {i}: xi=({a:.3f}, {b:.3f})", num,
                                  u0.l2() * v0.l2()))
    return out


def quartilinear_ratio(u0, window, n_frames=65):
    """Quartilinear functional of four copies of a free wave over its ``Hdot^{-1/4}`` norms."""
    tr = free_trace(u0, np.linspace(0.0, window, n_frames))
    num = quartilinear_functional(tr, tr, tr, tr)
    den = sobolev_norm(u0, -0.25) ** 4
    return EstimateSample("quartilinear", "four copies of one free wave", num, den)
