"""Periodic grids with their discrete Fourier transforms and Fourier multipliers.

Discrete convention (used by every norm in the package)
-------------------------------------------------------
A field sampled at ``x_j = -L/2 + j L/M`` has spectral coefficients

    c_k = (1/M) * sum_j f(x_j) exp(-i xi_k x_j),      xi_k = 2 pi k / L,

so that ``f(x_j) = sum_k c_k exp(i xi_k x_j)``.  With this scaling ``c_k`` is the
discrete stand-in for ``fhat(xi_k) * dxi`` under the line convention
``fhat(xi) = (1/2pi) int exp(-i x xi) f(x) dx`` (the ``1/2pi`` is absorbed in
``dxi = 2pi/L``), and Parseval reads ``int |f|^2 dx = L * sum_k |c_k|^2``.
Coefficients are stored in numpy FFT order.  The phase ``exp(-i xi_k x_0)``
that comes from the grid starting at ``-L/2`` is folded into the coefficients,
so multipliers act on them directly.

The Nyquist mode (k = -M/2) is kept in the transform but its wavenumber is set
to zero for differentiation, which makes ``Grid.xi`` exactly odd-symmetric.
"""
from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.fft import next_fast_len

from .errors import NegativeOrderOnNonzeroMean

PHYSICAL = "physical"
SPECTRAL = "spectral"

# fault-injection switch for the verification suite
_DEALIAS_ENABLED = True


@contextlib.contextmanager
def broken_dealiasing():
    """Temporarily form nonlinear products on the unpadded grid (test hook)."""
    global _DEALIAS_ENABLED
    old = _DEALIAS_ENABLED
    _DEALIAS_ENABLED = False
    try:
        yield
    finally:
        _DEALIAS_ENABLED = old


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L/2, L/2)`` with ``M`` points.

    ``kmax`` is the largest retained mode index (the dealiasing cutoff); modes
    with ``|k| > kmax`` are zeroed after every nonlinear product.
    """

    L: float
    M: int
    kmax: int | None = None

    def __post_init__(self):
        if not (self.L > 0):
            raise ValueError(f"box length must be positive, got {self.L}")
        if self.M <= 0 or self.M % 2:
            raise ValueError(f"mode count must be a positive even integer, got {self.M}")
        if self.kmax is None:
            object.__setattr__(self, "kmax", self.M // 2 - 1)
        if not (0 <= self.kmax <= self.M // 2 - 1):
            raise ValueError(f"kmax must lie in [0, M/2 - 1], got {self.kmax}")

    @property
    def dx(self):
        return self.L / self.M

    @cached_property
    def x(self):
        return -self.L / 2 + self.dx * np.arange(self.M)

    @cached_property
    def k(self):
        """Integer mode indices in FFT order (Nyquist is -M/2)."""
        return np.fft.fftfreq(self.M, d=1.0 / self.M).astype(np.int64)

    @cached_property
    def xi(self):
        xi = 2 * np.pi / self.L * self.k.astype(float)
        xi[self.M // 2] = 0.0
        return xi

    @cached_property
    def retained(self):
        return np.abs(self.k) <= self.kmax

    @cached_property
    def _shift(self):
        # phase from x_0 = -L/2: exp(-i xi_k x_0) = (-1)^k
        return np.where(self.k % 2 == 0, 1.0, -1.0)

    @property
    def xi_max(self):
        return 2 * np.pi * self.kmax / self.L

    def pad_size(self, power=4):
        """Smallest even grid on which a ``power``-fold product of retained modes is alias free."""
        n = (power + 1) * self.kmax + 1
        n = next_fast_len(n + (n % 2), real=True)
        while n % 2:
            n = next_fast_len(n + 1, real=True)
        return n

    def scaled(self, lam):
        """The grid of the box ``lam * L`` with the same mode structure."""
        return Grid(self.L * lam, self.M, self.kmax)

    def displacement(self, center):
        """Periodic displacement ``x - center`` wrapped into ``[-L/2, L/2)``."""
        d = self.x - center
        return (d + self.L / 2) % self.L - self.L / 2


def to_spectral(values, grid):
    """Raw forward transform of physical samples (last axis)."""
    return np.fft.fft(values, axis=-1) / grid.M * grid._shift


def to_physical(coeffs, grid, real=False):
    v = np.fft.ifft(coeffs * grid._shift, axis=-1) * grid.M
    return v.real if real else v


class Field:
    """One spatial state on a :class:`Grid`, in physical or spectral representation."""

    def __init__(self, grid, values, representation=PHYSICAL, real_valued=None, t=0.0):
        if representation not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation {representation!r}")
        values = np.asarray(values)
        if values.shape != (grid.M,):
            raise ValueError(f"expected {grid.M} samples, got shape {values.shape}")
        if real_valued is None:
            real_valued = representation == PHYSICAL and not np.iscomplexobj(values)
        if representation == PHYSICAL:
            values = values.astype(float) if real_valued else values.astype(complex)
            if real_valued and np.iscomplexobj(values):
                values = values.real
        else:
            values = values.astype(complex)
        self.grid = grid
        self.values = values
        self.representation = representation
        self.real_valued = bool(real_valued)
        self.t = float(t)

    @classmethod
    def from_function(cls, grid, func, t=0.0):
        return cls(grid, func(grid.x), PHYSICAL, t=t)

    def physical(self):
        if self.representation == PHYSICAL:
            return self.values
        return to_physical(self.values, self.grid, real=self.real_valued)

    def spectral(self):
        if self.representation == SPECTRAL:
            return self.values
        return to_spectral(self.values, self.grid)

    def with_spectral(self, coeffs, real_valued=None, t=None):
        return Field(self.grid, coeffs, SPECTRAL,
                     self.real_valued if real_valued is None else real_valued,
                     self.t if t is None else t)

    def with_physical(self, values, real_valued=None, t=None):
        return Field(self.grid, values, PHYSICAL,
                     self.real_valued if real_valued is None else real_valued,
                     self.t if t is None else t)

    def copy(self):
        return Field(self.grid, self.values.copy(), self.representation, self.real_valued, self.t)

    def mean(self):
        return self.spectral()[0]

    def l2(self):
        return float(np.sqrt(self.grid.L * np.sum(np.abs(self.spectral()) ** 2)))

    def _combine(self, other, op):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            vals = op(self.physical(), other.physical())
            return Field(self.grid, vals, PHYSICAL, self.real_valued and other.real_valued, self.t)
        vals = op(self.physical(), other)
        real = self.real_valued and not np.iscomplexobj(other)
        return Field(self.grid, vals, PHYSICAL, real, self.t)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return (f"Field(M={self.grid.M}, L={self.grid.L}, t={self.t}, "
                f"{self.representation}, real={self.real_valued})")


def transform(f, direction):
    """Switch ``f`` to the requested representation.

    ``direction`` is ``"forward"``/``"spectral"`` or ``"inverse"``/``"physical"``.
    """
    if direction in ("forward", SPECTRAL):
        return f if f.representation == SPECTRAL else f.with_spectral(f.spectral())
    if direction in ("inverse", PHYSICAL):
        return f if f.representation == PHYSICAL else f.with_physical(f.physical())
    raise ValueError(f"unknown direction {direction!r}")


def apply_multiplier(f, symbol, real_valued=None):
    """Multiply the spectral coefficients of ``f`` by ``symbol`` (length-M array)."""
    out = f.with_spectral(f.spectral() * symbol, real_valued=real_valued)
    return out if f.representation == SPECTRAL else transform(out, PHYSICAL)


def derivative(f, order=1):
    if order < 0 or int(order) != order:
        raise ValueError("derivative order must be a nonnegative integer")
    if order == 0:
        return f.copy()
    return apply_multiplier(f, (1j * f.grid.xi) ** order)


def _check_mean(coeffs, s):
    if s < 0:
        norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
        if abs(coeffs[0]) > 1e-12 * norm:
            raise NegativeOrderOnNonzeroMean(
                f"|grad|^{s} needs zero-mean data (mean coefficient {abs(coeffs[0]):.3e})")


def homogeneous_symbol(grid, s):
    a = np.abs(grid.xi)
    out = np.zeros(grid.M)
    nz = a > 0
    out[nz] = a[nz] ** s
    return out


def fractional_derivative(f, s):
    """Apply ``|grad|^s``; the zero mode is always mapped to zero."""
    _check_mean(f.spectral(), s)
    return apply_multiplier(f, homogeneous_symbol(f.grid, s))


def bessel_potential(f, s):
    """Apply ``<grad>^s`` with ``<xi> = (1 + xi^2)^(1/2)``."""
    return apply_multiplier(f, (1 + f.grid.xi ** 2) ** (s / 2))


def lp_bump(r, base):
    """Smooth even cutoff: 1 for ``|r| <= 1``, 0 for ``|r| >= base``, quintic smoothstep between."""
    r = np.abs(np.asarray(r, dtype=float))
    s = np.clip((r - 1.0) / (base - 1.0), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def lp_low(f, N, base=2.0):
    """``P_{<=N} f``."""
    if base <= 1:
        raise ValueError("Littlewood-Paley base must exceed 1")
    return apply_multiplier(f, lp_bump(f.grid.xi / N, base))


def lp_project(f, N, base=2.0):
    """``P_N f = P_{<=N} f - P_{<=N/base} f``."""
    if base <= 1:
        raise ValueError("Littlewood-Paley base must exceed 1")
    xi = f.grid.xi
    return apply_multiplier(f, lp_bump(xi / N, base) - lp_bump(xi * base / N, base))


def lp_levels(grid, base=2.0):
    """Levels ``N = base**j`` covering the grid: returns ``(N_min, [N_1, ..., N_max])``.

    ``P_{<=N_min}`` keeps only the zero mode and ``P_{<=N_max}`` is the identity, so
    ``P_{<=N_min} + sum_N P_N`` telescopes to the identity.
    """
    xi_min = 2 * np.pi / grid.L
    xi_top = np.abs(grid.xi).max()
    j_min = int(np.floor(np.log(xi_min / base) / np.log(base)))
    j_max = int(np.ceil(np.log(max(xi_top, xi_min)) / np.log(base)))
    levels = base ** np.arange(j_min + 1, j_max + 1, dtype=float)
    return base ** float(j_min), levels


def lp_decompose(f, base=2.0):
    """Yield ``(N, P_N f)`` over all levels, preceded by ``(N_min, P_{<=N_min} f)``."""
    n_min, levels = lp_levels(f.grid, base)
    yield n_min, lp_low(f, n_min, base)
    for N in levels:
        yield N, lp_project(f, N, base)


def bernstein_ratio(f, N, base=2.0):
    """``||P_N f||_inf / (N^{1/2} ||P_N f||_2)``; nan when ``P_N f`` vanishes."""
    g = lp_project(f, N, base)
    l2 = g.l2()
    if l2 == 0:
        return float("nan")
    return float(np.abs(g.physical()).max() / (np.sqrt(N) * l2))


def riesz_project(f, sign):
    """``P_+`` keeps ``xi >= 0`` (zero mode included), ``P_-`` keeps ``xi < 0``."""
    if sign in ("+", 1, "plus"):
        mask = f.grid.k >= 0
    elif sign in ("-", -1, "minus"):
        mask = f.grid.k < 0
    else:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    return apply_multiplier(f, mask.astype(float), real_valued=False)


def pad(coeffs, grid, size):
    """Zero-pad retained coefficients (FFT order, last axis) to ``size`` modes."""
    K = grid.kmax
    out = np.zeros(coeffs.shape[:-1] + (size,), dtype=complex)
    out[..., :K + 1] = coeffs[..., :K + 1]
    if K:
        out[..., -K:] = coeffs[..., -K:]
    return out


def truncate(coeffs, grid):
    K = grid.kmax
    out = np.zeros(coeffs.shape[:-1] + (grid.M,), dtype=complex)
    out[..., :K + 1] = coeffs[..., :K + 1]
    if K:
        out[..., -K:] = coeffs[..., -K:]
    return out


def dealiased_product(coeff_list, grid):
    """Spectral coefficients of the product of the given fields, restricted to retained modes.

    Inputs are spectral coefficient arrays in the package convention.  The
    product is formed on a grid of ``(n+1)*kmax + 1`` points (rounded up to even),
    which is alias free for ``n`` band-limited factors.
    """
    if not _DEALIAS_ENABLED:
        prod = np.ones(grid.M, dtype=complex)
        for c in coeff_list:
            prod = prod * np.fft.ifft(truncate(c, grid)) * grid.M
        return truncate(np.fft.fft(prod) / grid.M, grid)
    P = grid.pad_size(len(coeff_list))
    prod = np.ones(P, dtype=complex)
    for c in coeff_list:
        # the (-1)^k grid phase cancels between padding and truncation, so work unshifted
        prod = prod * np.fft.ifft(pad(c * grid._shift, grid, P)) * P
    out = truncate(np.fft.fft(prod) / P, grid)
    return out * grid._shift


def dealiased_power(f, p=4):
    """``f**p`` restricted to retained modes, alias free."""
    out = dealiased_product([f.spectral()] * p, f.grid)
    return f.with_spectral(out)


def brute_force_power(coeffs, grid, p=4):
    """Reference ``p``-fold discrete convolution on the retained modes (O(K^p)); small grids only."""
    K = grid.kmax
    ks = np.arange(-K, K + 1)
    c = {int(k): coeffs[k % grid.M] for k in ks}
    # repeated full convolution on the integer line, then restriction
    cur = {0: 1.0 + 0j}
    for _ in range(p):
        nxt = {}
        for a, ca in cur.items():
            for b in ks:
                nxt[a + int(b)] = nxt.get(a + int(b), 0) + ca * c[int(b)]
        cur = nxt
    out = np.zeros(grid.M, dtype=complex)
    for k in ks:
        out[k % grid.M] = cur.get(int(k), 0)
    return out


class Trace:
    """Time-sampled fields on one grid, stored as a ``(n_frames, M)`` physical array."""

    def __init__(self, grid, times, data, real_valued=None):
        times = np.asarray(times, dtype=float)
        data = np.asarray(data)
        if data.ndim != 2 or data.shape != (len(times), grid.M):
            raise ValueError(f"data shape {data.shape} does not match {len(times)} times x {grid.M}")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        if real_valued is None:
            real_valued = not np.iscomplexobj(data)
        self.grid = grid
        self.times = times
        self.data = data.real.astype(float) if real_valued and np.iscomplexobj(data) else data
        self.real_valued = bool(real_valued)
        self.meta = {}

    @classmethod
    def from_fields(cls, fields):
        fields = list(fields)
        if not fields:
            raise ValueError("empty field list")
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("all fields of a trace must share one grid")
        real = all(f.real_valued for f in fields)
        data = np.array([f.physical() for f in fields])
        return cls(grid, [f.t for f in fields], data, real)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return Field(self.grid, self.data[i], PHYSICAL, self.real_valued, self.times[i])

    @property
    def fields(self):
        return [self[i] for i in range(len(self))]

    @property
    def dt(self):
        d = np.diff(self.times)
        return float(d.mean()) if len(d) else 0.0

    @property
    def uniform_dt(self):
        d = np.diff(self.times)
        return len(d) == 0 or bool(np.allclose(d, d[0], rtol=1e-9, atol=0))

    def spectral(self):
        return to_spectral(self.data, self.grid)

    def window(self, t0=None, t1=None):
        """Sub-trace of frames with ``t0 <= t <= t1`` (small slack for round-off)."""
        tol = 1e-9 * max(1.0, abs(self.times[-1]))
        lo = -np.inf if t0 is None else t0 - tol
        hi = np.inf if t1 is None else t1 + tol
        idx = np.nonzero((self.times >= lo) & (self.times <= hi))[0]
        return Trace(self.grid, self.times[idx], self.data[idx], self.real_valued)

    def map(self, func):
        """Apply a Field -> Field function framewise."""
        return Trace.from_fields(func(f) for f in self.fields)


# Binary snapshot format: little-endian header followed by M (re, im) f64 pairs.
SNAPSHOT_MAGIC = b"GKDVSNAP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sIQddBB")  # magic, version:u32, M:u64, L, t, representation:u8, real_valued:u8


def field_to_bytes(f):
    rep = 0 if f.representation == PHYSICAL else 1
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, f.grid.M, float(f.grid.L), float(f.t),
                        rep, int(f.real_valued))
    body = np.asarray(f.values, dtype=complex).astype("<c16").tobytes()
    return head + body


def field_from_bytes(buf, kmax=None):
    """Decode a snapshot; the dealiasing cutoff is not stored, so it defaults to ``M/2 - 1``."""
    magic, version, M, L, t, rep, real = _HEADER.unpack_from(buf, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a field snapshot")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    body = np.frombuffer(buf, dtype="<c16", count=M, offset=_HEADER.size)
    grid = Grid(L, int(M), kmax)
    representation = PHYSICAL if rep == 0 else SPECTRAL
    values = body.real.copy() if (real and representation == PHYSICAL) else body.astype(complex)
    return Field(grid, values, representation, bool(real), t)


def write_field(path, f):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(f))


def read_field(path):
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())
