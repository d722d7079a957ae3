"""Airy flow and the exponential time stepper for ``u_t + u_xxx + (u^p)_x = 0``.

The linear part is integrated exactly: in Fourier space ``u_t = -u_xxx`` reads
``d/dt c_k = i xi_k^3 c_k``, so the Airy flow multiplies mode ``k`` by
``exp(i t xi_k^3)``.  Only the nonlinear term ``-(u^p)_x`` is handled by a
four-stage Runge-Kutta rule.  Two rules are available:

``"etdrk4"`` (default)
    Cox-Matthews exponential time differencing; the phi-function coefficients
    are evaluated by contour averaging (Kassam & Trefethen), which is stable for
    both small and huge ``|dt xi^3|``.
``"ifrk4"``
    Lawson's integrating-factor RK4: classical RK4 applied to
    ``v = exp(-i t xi^3) c``.

On the soliton run the Lawson variant is about an order of magnitude less
accurate at ``dt = 1e-3`` and still pre-asymptotic there, so it is kept only as
an option.  Nonlinear products are formed on a zero-padded grid of at least
``(p+1) kmax + 1`` points, which removes aliasing exactly.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .conserved import energy, mass
from .errors import BlowupDetected, ConfigInvalid
from .spectral import PHYSICAL, SPECTRAL, Field, Trace, field_from_bytes, field_to_bytes
from . import spectral

log = logging.getLogger(__name__)


def smooth_ramp(s):
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class Sponge:
    """Absorbing layer: ``sigma(x) = strength * ramp(...)`` within ``width`` of either box edge."""

    width: float
    strength: float

    def profile(self, grid):
        if self.width <= 0 or self.strength == 0:
            return np.zeros(grid.M)
        dist = np.minimum(grid.x - (-grid.L / 2), grid.L / 2 - grid.x)
        return self.strength * smooth_ramp((self.width - dist) / self.width)


SCHEMES = ("etdrk4", "ifrk4")


def phi_functions(z, n_contour=64):
    """``phi_1, phi_2, phi_3`` of the complex array ``z`` by averaging over a unit circle around each point."""
    r = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
    Z = np.asarray(z, dtype=complex)[:, None] + r[None, :]
    eZ = np.exp(Z)
    phi1 = np.mean((eZ - 1) / Z, axis=1)
    phi2 = np.mean((eZ - 1 - Z) / Z ** 2, axis=1)
    phi3 = np.mean((eZ - 1 - Z - Z ** 2 / 2) / Z ** 3, axis=1)
    return phi1, phi2, phi3


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    power: int = 4
    nonlinear: bool = True
    sponge: Sponge | None = None
    snapshot_stride: int = 1
    cfl: float | None = 0.5
    blowup_factor: float = 1e6
    scheme: str = "etdrk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigInvalid(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ConfigInvalid(f"t_end must be nonnegative, got {self.t_end}")
        if self.snapshot_stride < 1 or int(self.snapshot_stride) != self.snapshot_stride:
            raise ConfigInvalid("snapshot_stride must be a positive integer")
        if self.power < 2:
            raise ConfigInvalid("nonlinearity power must be at least 2")
        if self.scheme not in SCHEMES:
            raise ConfigInvalid(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def dt_bound(self, u0):
        """Nonlinear CFL-type bound ``cfl / (max|u|^{p-1} max|xi|)``."""
        umax = float(np.abs(u0.physical()).max())
        if umax == 0 or not self.nonlinear or self.cfl is None:
            return np.inf
        return self.cfl / (umax ** (self.power - 1) * u0.grid.xi_max)

    def to_dict(self):
        d = asdict(self)
        return d


def airy_propagate(u0, t):
    """``exp(-t d_xxx) u0``: multiply mode ``k`` by ``exp(i t xi_k^3)``."""
    phase = np.exp(1j * t * u0.grid.xi ** 3)
    out = u0.with_spectral(u0.spectral() * phase, t=u0.t + t)
    return out if u0.representation == SPECTRAL else spectral.transform(out, PHYSICAL)


class _Stepper:
    """Precomputed phases and transforms for one (grid, config) pair.

    Real runs carry the half spectrum ``h_k = fft(u)_k / M`` for ``0 <= k <= kmax``
    (unshifted); complex runs carry the retained full spectrum.
    """

    def __init__(self, grid, cfg, real):
        self.grid, self.cfg, self.real = grid, cfg, real
        K = grid.kmax
        if real:
            self.kidx = np.arange(K + 1)
        else:
            self.kidx = np.concatenate([np.arange(K + 1), np.arange(-K, 0)]) if K else np.arange(1)
        xi = 2 * np.pi / grid.L * self.kidx
        self.xi = xi
        h = cfg.dt
        lin = 1j * xi ** 3
        self.E = np.exp(h * lin)
        self.E2 = np.exp(0.5 * h * lin)
        if cfg.scheme == "etdrk4":
            half, _, _ = phi_functions(0.5 * h * lin)
            p1, p2, p3 = phi_functions(h * lin)
            self.Qh = 0.5 * h * half
            self.f1 = h * (p1 - 3 * p2 + 4 * p3)
            self.f2 = h * (2 * p2 - 4 * p3)
            self.f3 = h * (4 * p3 - p2)
        self.P = grid.pad_size(cfg.power) if spectral._DEALIAS_ENABLED else grid.M
        self._buf = np.zeros(self.P // 2 + 1 if real else self.P, dtype=complex)
        self.sigma = cfg.sponge.profile(grid) if cfg.sponge is not None else None
        self.umax = 0.0

    def pack(self, f):
        plain = np.fft.fft(f.physical()) / self.grid.M
        return plain[self.kidx].astype(complex)

    def unpack(self, v, t):
        grid = self.grid
        full = np.zeros(grid.M, dtype=complex)
        full[self.kidx % grid.M] = v
        if self.real:
            K = grid.kmax
            if K:
                full[-K:] = np.conj(v[1:][::-1])
            vals = np.fft.ifft(full).real * grid.M
            return Field(grid, vals, PHYSICAL, True, t)
        return Field(grid, np.fft.ifft(full) * grid.M, PHYSICAL, False, t)

    def _power(self, u):
        p = self.cfg.power
        if p == 4:
            u2 = u * u
            return u2 * u2
        return u ** p

    def nonlinear(self, v):
        """``-(u^p)_x`` in the stepper's coefficient layout."""
        P, K, buf = self.P, self.grid.kmax, self._buf
        if self.real:
            buf[:K + 1] = v
            u = np.fft.irfft(buf, n=P) * P
            self.umax = max(self.umax, float(u.max()), float(-u.min()))
            w = np.fft.rfft(self._power(u))[:K + 1] / P
            return -1j * self.xi * w
        buf[self.kidx % P] = v
        u = np.fft.ifft(buf) * P
        self.umax = max(self.umax, float(np.abs(u).max()))
        w = np.fft.fft(self._power(u)) / P
        return -1j * self.xi * w[self.kidx % P]

    def advance(self, v):
        h, E, E2 = self.cfg.dt, self.E, self.E2
        if not self.cfg.nonlinear:
            return E * v
        if self.cfg.scheme == "etdrk4":
            N1 = self.nonlinear(v)
            a = E2 * v + self.Qh * N1
            N2 = self.nonlinear(a)
            b = E2 * v + self.Qh * N2
            N3 = self.nonlinear(b)
            c = E2 * a + self.Qh * (2 * N3 - N1)
            N4 = self.nonlinear(c)
            return E * v + self.f1 * N1 + self.f2 * (N2 + N3) + self.f3 * N4
        k1 = self.nonlinear(v)
        k2 = self.nonlinear(E2 * (v + 0.5 * h * k1))
        k3 = self.nonlinear(E2 * v + 0.5 * h * k2)
        k4 = self.nonlinear(E * v + h * (E2 * k3))
        return E * v + (h / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)

    def damp(self, v):
        if self.sigma is None:
            return v
        u = self.unpack(v, 0.0).physical() * np.exp(-self.cfg.dt * self.sigma)
        return self.pack(Field(self.grid, u, PHYSICAL, self.real))


@dataclass
class RunState:
    _field: Field | None
    t: float = 0.0
    steps: int = 0
    times: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    history: dict = field(default_factory=lambda: {"t": [], "mass": [], "energy": []})
    ceiling: float = np.inf
    absorbed_frames: list = field(default_factory=list)
    _stepper: _Stepper | None = None
    _v: np.ndarray | None = None
    _absorbed: np.ndarray | None = None

    @classmethod
    def start(cls, u0, cfg, t0=0.0):
        ceiling = cfg.blowup_factor * float(np.abs(u0.physical()).max())
        if ceiling == 0:
            ceiling = np.inf
        st = cls(Field(u0.grid, u0.physical(), PHYSICAL, u0.real_valued, t0), t=t0, ceiling=ceiling)
        st.grid = u0.grid
        st.real_valued = u0.real_valued
        return st

    @property
    def field(self):
        """Current state as a physical :class:`Field` (materialised lazily)."""
        if self._field is None:
            self._field = self._stepper.unpack(self._v, self.t)
        return self._field

    def _ensure(self, cfg):
        if self._stepper is None or self._stepper.cfg != cfg:
            f = self.field
            self._stepper = _Stepper(f.grid, cfg, f.real_valued)
            self._v = self._stepper.pack(f)

    def record(self, cfg):
        f = self.field
        self.times.append(self.t)
        self.frames.append(np.array(f.physical(), copy=True))
        self.history["t"].append(self.t)
        self.history["mass"].append(mass(f))
        self.history["energy"].append(energy(f, cfg.power) if f.real_valued else float("nan"))
        if cfg.sponge is not None:
            self.absorbed_frames.append(np.array(self.absorbed.physical(), copy=True))

    @property
    def absorbed(self):
        """Everything the sponge removed so far, each piece pulled back to ``t = 0`` by the Airy flow.

        ``airy_propagate(u(t), -t) + absorbed`` is the pullback the solution would have on the
        line if the absorbed radiation had kept propagating freely.
        """
        if self._absorbed is None:
            return Field(self.field.grid, np.zeros(self.field.grid.M), PHYSICAL, self.real_valued, 0.0)
        return self._stepper.unpack(self._absorbed, 0.0)


def step(state, cfg):
    """Advance ``state`` by one ``cfg.dt``; returns the same (mutated) state."""
    state._ensure(cfg)
    st = state._stepper
    v_free = st.advance(state._v)
    v = st.damp(v_free)
    state.steps += 1
    state.t = state.t + cfg.dt
    if st.sigma is not None:
        removed = (v_free - v) * np.exp(-1j * state.t * st.xi ** 3)
        state._absorbed = removed if state._absorbed is None else state._absorbed + removed
    if not np.all(np.isfinite(v)) or st.umax > state.ceiling:
        raise BlowupDetected(f"solution left the admissible range at t = {state.t:.6g} "
                             f"(max|u| = {st.umax:.3e})", time=state.t)
    st.umax = 0.0
    state._v = v
    state._field = None
    return state


def evolve(u0, cfg, t0=0.0):
    """Run ``cfg.n_steps`` steps from ``u0``, storing every ``snapshot_stride``-th state.

    The returned :class:`Trace` carries the mass/energy history in ``trace.meta``.
    """
    bound = cfg.dt_bound(u0)
    if cfg.dt > bound:
        raise ConfigInvalid(f"dt = {cfg.dt} exceeds the nonlinear step bound {bound:.3e}")
    state = RunState.start(u0, cfg, t0)
    state.record(cfg)
    for n in range(1, cfg.n_steps + 1):
        try:
            step(state, cfg)
        except BlowupDetected:
            log.error("blowup detected at t = %g", state.t)
            raise
        if n % cfg.snapshot_stride == 0:
            state.record(cfg)
    # record at exact multiples of dt to avoid accumulated round-off in the time stamps
    times = t0 + cfg.dt * cfg.snapshot_stride * np.arange(len(state.times))
    tr = Trace(u0.grid, times, np.array(state.frames), u0.real_valued)
    tr.meta["history"] = {k: np.asarray(v) for k, v in state.history.items()}
    tr.meta["history"]["t"] = times
    tr.meta["solver"] = {"dt": cfg.dt, "t_end": cfg.t_end, "power": cfg.power,
                         "nonlinear": cfg.nonlinear, "stride": cfg.snapshot_stride,
                         "scheme": cfg.scheme,
                         "sponge": None if cfg.sponge is None else asdict(cfg.sponge)}
    if cfg.sponge is not None:
        tr.meta["absorbed"] = np.array(state.absorbed_frames)
    return tr


def apply_sponge(f, sponge, dt):
    """Multiply ``f`` by ``exp(-dt sigma(x))``."""
    sigma = sponge.profile(f.grid)
    return f.with_physical(f.physical() * np.exp(-dt * sigma))


def relative_drift(series):
    s = np.asarray(series, dtype=float)
    return float(np.abs(s - s[0]).max() / abs(s[0])) if s[0] != 0 else float(np.abs(s - s[0]).max())


def effective_bandwidth(f, tol=1e-6):
    """Smallest ``|xi|`` beyond which the ``H^1``-weighted spectral energy fraction is below ``tol``."""
    c = f.spectral()
    xi = np.abs(f.grid.xi)
    w = (1 + xi ** 2) * np.abs(c) ** 2
    total = w.sum()
    if total == 0:
        return 0.0
    order = np.argsort(xi)
    xs, ws = xi[order], w[order]
    tail = total - np.cumsum(ws)  # energy strictly above xs[i]
    idx = np.nonzero(tail <= tol * total)[0][0]
    return float(xs[idx])


def wrap_horizon(radiation, tol=1e-6):
    """``T_wrap = L / (2 v_max)`` with ``v_max = 3 xi_eff^2`` the fastest Airy group speed present.

    ``radiation`` is the non-soliton part of the initial data; infinite when it vanishes.
    """
    xi_eff = effective_bandwidth(radiation, tol)
    if xi_eff == 0:
        return np.inf
    return radiation.grid.L / (2 * 3 * xi_eff ** 2)


def write_trace(directory, trace, config_hash=""):
    """One snapshot file per stored time plus ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for i, f in enumerate(trace.fields):
        name = f"snap_{i:06d}.bin"
        with open(os.path.join(directory, name), "wb") as fh:
            fh.write(field_to_bytes(f))
        names.append(name)
    hist = trace.meta.get("history", {})
    manifest = {
        "times": [float(t) for t in trace.times],
        "snapshots": names,
        "config_hash": config_hash,
        "grid": {"L": trace.grid.L, "M": trace.grid.M, "kmax": trace.grid.kmax},
        "history": {k: [float(x) for x in v] for k, v in hist.items()},
    }
    tmp = os.path.join(directory, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    os.replace(tmp, os.path.join(directory, "manifest.json"))
    return manifest


def read_trace(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    kmax = manifest["grid"].get("kmax")
    fields = []
    for name in manifest["snapshots"]:
        with open(os.path.join(directory, name), "rb") as fh:
            fields.append(spectral.transform(field_from_bytes(fh.read(), kmax), PHYSICAL))
    tr = Trace.from_fields(fields)
    tr.meta["history"] = {k: np.asarray(v) for k, v in manifest.get("history", {}).items()}
    tr.meta["config_hash"] = manifest.get("config_hash", "")
    return tr
