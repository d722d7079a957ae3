"""Configured experiment runs: soliton transport, Airy ensembles, perturbed solitons and epsilon sweeps.

A run is described by one JSON document validated against :data:`CONFIG_SCHEMA`
before anything is computed.  Missing sections are filled from the scenario
defaults, and the SHA-256 of the resolved configuration (output directory
excluded) is written into every output.

Each run writes into its own directory::

    manifest.json      status, config hash, versions, history, reports, plot series
    trace/             snapshot files (every ``store.frame_stride``-th frame)
    path.csv           modulation parameters (scenarios with a soliton)
    norms.json         norm records
    distances.csv      Cauchy distances of the pullbacks (perturbed runs)

The manifest is first written with status ``"running"`` and replaced atomically
when the run ends, so an interrupted run is recognisable from its manifest.
Wall-clock information lives under the single key ``"wall_clock"``.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np
import scipy

from . import __version__
from .conserved import energy, mass
from .errors import BlowupDetected, ConfigInvalid, FitDiverged, UnknownQuantity
from .modulation import decompose_trace, modulation_rate_check, sup_h1
from .norms import (BilinearEnsembleSpec, _grid_dict, EnsembleSpec, NormRecord, band_limited_noise,
                    bilinear_sampler, free_trace, h1_norm, kato_weighted_integral,
                    quartilinear_ratio, ratio_table, sobolev_norm, spacetime_norm,
                    strichartz_constant_sampler, xsb_norm, xsb_shells)
from .report import to_jsonable
from .scattering import (checkpoint_schedule, decoupling_check, duhamel_check, hneg16,
                         mass_bookkeeping, scatter_diagnostics, trusted_horizon)
from .soliton import SolitonParams, scaled_soliton
from .solver import SolverConfig, Sponge, evolve, relative_drift, write_trace
from .spectral import Field, Grid, derivative

log = logging.getLogger(__name__)

SCENARIOS = ("soliton", "airy_ensemble", "perturbed_soliton", "sweep")
OUT_ENV = "GKDVLAB_OUT"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_window = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gkdvlab experiment configuration",
    "type": "object",
    "required": ["scenario"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "output_dir": {"type": "string"},
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "L": _pos,
                "M": {"type": "integer", "minimum": 2, "multipleOf": 2},
                "kmax": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dt": _pos,
                "t_end": {"type": "number", "minimum": 0},
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["etdrk4", "ifrk4"]},
                "power": {"type": "integer", "minimum": 2},
                "sponge": {
                    "type": ["object", "null"], "additionalProperties": False,
                    "required": ["width", "strength"],
                    "properties": {"width": _pos, "strength": {"type": "number", "minimum": 0}},
                },
            },
        },
        "soliton": {
            "type": "object", "additionalProperties": False,
            "properties": {"lam": _pos, "center": _num},
        },
        "perturbation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "family": {"enum": ["band_limited_noise"]},
                "epsilon": {"type": "number", "minimum": 0},
                "band": _pos,
                "width": _pos,
            },
        },
        "norms": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "windows": {"type": "array", "items": _window},
                "xsb_b": {"type": "array", "items": _num},
                "xsb_q": {"type": "number", "minimum": 1},
            },
        },
        "checkpoints": {
            "type": "object", "additionalProperties": False,
            "properties": {"first": _pos, "factor": {"type": "number", "exclusiveMinimum": 1}},
        },
        "duhamel": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "rule": {"enum": ["comoving", "filon", "trapezoid"]},
                "head_time": {"type": ["number", "null"], "minimum": 0},
                "head_stride": {"type": "integer", "minimum": 1},
            },
        },
        "ensemble": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "n_pairs": {"type": "integer", "minimum": 1},
                "band": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                "window": _pos,
                "n_frames": {"type": "integer", "minimum": 3},
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "epsilons": {"type": "array", "items": _pos, "minItems": 2},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "store": {
            "type": "object", "additionalProperties": False,
            "properties": {"frame_stride": {"type": "integer", "minimum": 1},
                           "trace": {"type": "boolean"}},
        },
    },
}

_PERTURBED = {
    "grid": {"L": 800.0, "M": 8192, "kmax": None},
    "solver": {"dt": 2e-3, "t_end": 40.0, "snapshot_stride": 25, "scheme": "etdrk4", "power": 4,
               "sponge": {"width": 100.0, "strength": 30.0}},
    "soliton": {"lam": 1.0, "center": 0.0},
    "perturbation": {"family": "band_limited_noise", "epsilon": 0.01, "band": 1.0, "width": 5.0},
    "norms": {"windows": [[0.0, 10.0]], "xsb_b": [0.5], "xsb_q": 2.0},
    "checkpoints": {"first": 2.0, "factor": 1.5},
    "duhamel": {"rule": "comoving", "head_time": 2.0, "head_stride": 2},
    "store": {"frame_stride": 20, "trace": True},
}

DEFAULTS = {
    "soliton": {
        "grid": {"L": 100.0, "M": 1024, "kmax": None},
        "solver": {"dt": 1e-3, "t_end": 10.0, "snapshot_stride": 100, "scheme": "etdrk4", "power": 4,
                   "sponge": None},
        "soliton": {"lam": 1.0, "center": 0.0},
        "norms": {"windows": [[0.0, 10.0]], "xsb_b": [0.5], "xsb_q": 2.0},
        "store": {"frame_stride": 1, "trace": True},
    },
    "airy_ensemble": {
        "grid": {"L": 100.0, "M": 256, "kmax": None},
        "norms": {"windows": [[0.0, 1.0]], "xsb_b": [0.5], "xsb_q": 2.0},
        "ensemble": {"n_samples": 200, "n_pairs": 100, "band": [0.5, 4.0], "window": 1.0, "n_frames": 65},
        "store": {"frame_stride": 1, "trace": True},
    },
    "perturbed_soliton": _PERTURBED,
    "sweep": dict(copy.deepcopy(_PERTURBED), sweep={"epsilons": [0.005, 0.01, 0.02], "workers": 1}),
}


# ---------------------------------------------------------------- configuration

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw):
    """Validate ``raw`` against the schema and fill in the scenario defaults.

    Raises :class:`ConfigInvalid` before any computation if the document is malformed.
    """
    if not isinstance(raw, dict):
        raise ConfigInvalid("configuration must be a JSON object")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    cfg = _merge(DEFAULTS[raw["scenario"]], raw)
    cfg.setdefault("seed", 0)
    cfg.setdefault("output_dir", "runs")
    g = cfg.get("grid")
    if g is not None:
        try:
            Grid(g["L"], g["M"], g.get("kmax"))
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
    if "solver" in cfg:
        solver_config(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    return resolve_config(raw)


def config_hash(cfg):
    """SHA-256 of the canonical JSON of the resolved config without its output directory."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def output_dir(cfg):
    """The run directory; the environment variable ``GKDVLAB_OUT`` overrides the config."""
    return os.environ.get(OUT_ENV) or cfg["output_dir"]


def solver_config(cfg):
    s = cfg["solver"]
    sponge = None if s.get("sponge") is None else Sponge(**s["sponge"])
    return SolverConfig(dt=s["dt"], t_end=s["t_end"], power=s["power"], sponge=sponge,
                        snapshot_stride=s["snapshot_stride"], scheme=s["scheme"])


def make_grid(cfg):
    g = cfg["grid"]
    return Grid(float(g["L"]), int(g["M"]), g.get("kmax"))


# ---------------------------------------------------------------- perturbations

def band_limited_bump(grid, epsilon, seed, band=1.0, width=5.0):
    """Seeded perturbation ``d/dx [exp(-(x/width)^2) n(x)]`` scaled to ``||f||_{H^1} = epsilon``.

    ``n`` has iid complex Gaussian Fourier coefficients on ``0 < |xi| <= band``
    (real part taken).  The outer derivative makes the mean exactly zero, so the
    perturbation lies in every negative-order homogeneous Sobolev space.
    """
    rng = np.random.default_rng(seed)
    c = np.zeros(grid.M, dtype=complex)
    sel = (np.abs(grid.xi) <= band) & (grid.xi != 0)
    c[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    noise = np.real(Field(grid, c, "spectral", False).physical())
    g = Field(grid, noise * np.exp(-(grid.x / width) ** 2), "physical", True)
    f = derivative(g, 1)
    f = Field(grid, np.real(f.physical()), "physical", True)
    if epsilon == 0:
        return f * 0.0
    return f * (epsilon / h1_norm(f))


def initial_data(cfg):
    """``R(lam, c) + f`` for the configured soliton and perturbation; returns ``(u0, f)``."""
    grid = make_grid(cfg)
    sol = cfg["soliton"]
    u0 = scaled_soliton(grid, SolitonParams(sol["lam"], sol["center"]))
    p = cfg.get("perturbation")
    if p is None:
        return u0, u0 * 0.0
    f = band_limited_bump(grid, p["epsilon"], cfg["seed"], p["band"], p["width"])
    return u0 + f, f


# ---------------------------------------------------------------- manifest

def versions():
    return {"gkdvlab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "jsonschema": _jsonschema_version()}


def _jsonschema_version():
    from importlib.metadata import version
    try:
        return version("jsonschema")
    except Exception:  # pragma: no cover - metadata missing in odd installs
        return "unknown"


def _atomic_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def _series(columns, *cols):
    return {"columns": list(columns), "rows": [list(r) for r in zip(*cols)]}


class _Run:
    """Book-keeping shared by the scenario pipelines."""

    def __init__(self, cfg, directory):
        self.cfg = cfg
        self.dir = directory
        self.hash = config_hash(cfg)
        self.started = time.time()
        os.makedirs(directory, exist_ok=True)
        self.manifest = {
            "config_hash": self.hash,
            "config": {k: v for k, v in cfg.items() if k != "output_dir"},
            "scenario": cfg["scenario"],
            "versions": versions(),
            "status": "running",
            "failure": None,
            "history": {},
            "reports": {},
            "series": {},
            "trusted_horizon": None,
            "outputs": [],
            "wall_clock": {"started": self.started},
        }
        self.write()

    @property
    def path(self):
        return os.path.join(self.dir, "manifest.json")

    def write(self):
        _atomic_json(self.path, self.manifest)

    def output(self, name):
        if name not in self.manifest["outputs"]:
            self.manifest["outputs"].append(name)
        return os.path.join(self.dir, name)

    def store_trace(self, tr):
        store = self.cfg.get("store", {})
        if not store.get("trace", True):
            return
        stride = store.get("frame_stride", 1)
        sub = tr.__class__(tr.grid, tr.times[::stride], tr.data[::stride], tr.real_valued)
        sub.meta["history"] = tr.meta.get("history", {})
        write_trace(self.output("trace"), sub, self.hash)

    def record_history(self, tr):
        hist = tr.meta.get("history", {})
        self.manifest["history"] = {k: np.asarray(v) for k, v in hist.items()}
        if "t" in hist:
            self.manifest["series"]["mass_history"] = _series(["t", "mass"], hist["t"], hist["mass"])
            self.manifest["series"]["energy_history"] = _series(["t", "energy"], hist["t"], hist["energy"])

    def finish(self, status="complete", failure=None):
        end = time.time()
        self.manifest["status"] = status
        self.manifest["failure"] = failure
        self.manifest["wall_clock"] = {"started": self.started, "finished": end,
                                       "elapsed_s": end - self.started}
        self.write()
        return self.manifest


def _record(kind, params, value, window, grid):
    return NormRecord(kind, params, float(value), window, _grid_dict(grid))


def _norm_records(cfg, tr, base_name):
    """Spacetime and xsb norms of ``tr`` over each configured window."""
    recs = []
    nc = cfg.get("norms", {})
    for w in nc.get("windows", []):
        win = (float(w[0]), float(w[1]))
        sub = tr.window(*win)
        if len(sub) < 2:
            continue
        for q, r in ((2.0, 2.0), (6.0, 6.0), (np.inf, 2.0), (5.0, 10.0)):
            v = spacetime_norm(sub, q, r)
            recs.append(_record("lebesgue_spacetime", {"q": q, "r": r, "of": base_name}, v, win, tr.grid))
        try:
            prof = xsb_shells(sub)
        except Exception as exc:  # WindowTooShort or non-uniform frames
            log.info("xsb skipped on window %s: %s", win, exc)
            continue
        for b in nc.get("xsb_b", [0.5]):
            v = xsb_norm(sub, b, nc.get("xsb_q", 2.0), profile=prof)
            recs.append(_record("xsb", {"b": b, "q": nc.get("xsb_q", 2.0), "of": base_name},
                                   v, win, tr.grid))
    return recs


def _write_norms(run, records):
    _atomic_json(run.output("norms.json"), [r.to_dict() for r in records])


def _shell_series(run, tr, window):
    try:
        prof = xsb_shells(tr.window(*window))
    except Exception as exc:
        log.info("no xsb shell profile: %s", exc)
        return
    run.manifest["series"]["xsb_shells"] = _series(["k", "mass"], prof.ks, prof.mass)


def _path_outputs(run, dec):
    path = dec.path
    path.to_csv(run.output("path.csv"))
    run.manifest["series"]["lambda_path"] = _series(["t", "lambda"], path.times, path.lam)
    run.manifest["series"]["center_path"] = _series(["t", "x"], path.times, path.center)


# ---------------------------------------------------------------- scenarios

def _soliton(run):
    cfg = run.cfg
    grid = make_grid(cfg)
    scfg = solver_config(cfg)
    sol = cfg["soliton"]
    params = SolitonParams(sol["lam"], sol["center"])
    u0 = scaled_soliton(grid, params)
    tr = evolve(u0, scfg)
    run.record_history(tr)
    run.store_trace(tr)
    hist = tr.meta["history"]
    t_end = float(tr.times[-1])
    exact = scaled_soliton(grid, SolitonParams(params.lam, params.center + t_end * params.lam ** -2),
                           tail_tol=np.inf)
    err = (tr[len(tr) - 1] - exact).l2() / exact.l2()
    dec = decompose_trace(tr, 0.0, init=params)
    _path_outputs(run, dec)
    rep = {
        "mass_drift": relative_drift(hist["mass"]),
        "energy_drift": relative_drift(hist["energy"]),
        "relative_l2_error": float(err),
        "t_end": t_end,
        "lambda_max_deviation": float(np.abs(dec.path.lam - params.lam).max()),
        "speed_mean": float(np.mean(dec.path.center_prime)),
        "fit_residual_max": float(dec.path.residual.max()),
    }
    run.manifest["reports"]["soliton"] = rep
    _write_norms(run, _norm_records(cfg, tr, "u"))
    windows = cfg.get("norms", {}).get("windows") or [[0.0, t_end]]
    _shell_series(run, tr, windows[0])
    run.manifest["trusted_horizon"] = float("inf")


def _airy_ensemble(run):
    cfg = run.cfg
    ens = cfg["ensemble"]
    g = cfg["grid"]
    seed = int(cfg["seed"])
    spec = EnsembleSpec(n_samples=ens["n_samples"], L=g["L"], M=g["M"], band=tuple(ens["band"]),
                        window=ens["window"], n_frames=ens["n_frames"], seed=seed)
    table = ratio_table(strichartz_constant_sampler(spec))
    strich = {k: {"min": float(v.min()), "max": float(v.max()), "median": float(np.median(v)),
                  "spread": float(v.max() / v.min())} for k, v in table.items()}
    bspec = BilinearEnsembleSpec(n_pairs=ens["n_pairs"], seed=seed)
    bil = np.array([s.ratio for s in bilinear_sampler(bspec)])
    grid = make_grid(cfg)
    u0 = band_limited_noise(grid, tuple(ens["band"]), np.random.default_rng(seed))
    times = np.linspace(0.0, ens["window"], ens["n_frames"])
    tr = free_trace(u0, times)
    run.store_trace(tr)
    quart = quartilinear_ratio(u0, ens["window"], ens["n_frames"])
    run.manifest["reports"]["strichartz"] = strich
    run.manifest["reports"]["bilinear"] = {
        "n_pairs": int(len(bil)), "min": float(bil.min()), "max": float(bil.max()),
        "median": float(np.median(bil)), "spread": float(bil.max() / bil.min())}
    run.manifest["reports"]["quartilinear"] = quart.to_dict()
    run.manifest["series"]["strichartz_ratios"] = _series(
        ["sample"] + sorted(table), range(spec.n_samples), *(table[k] for k in sorted(table)))
    run.manifest["series"]["bilinear_ratios"] = _series(["pair", "ratio"], range(len(bil)), bil)
    recs = _norm_records(cfg, tr, "free wave")
    for s in (-1.0 / 6.0, 0.0, 1.0):
        recs.append(_record("sobolev_hom", {"s": s, "of": "u0"}, sobolev_norm(u0, s), None, grid))
    _write_norms(run, recs)
    _shell_series(run, tr, (0.0, ens["window"]))
    run.manifest["trusted_horizon"] = float("inf")


def _perturbed(run):
    cfg = run.cfg
    grid = make_grid(cfg)
    scfg = solver_config(cfg)
    eps = float(cfg["perturbation"]["epsilon"])
    u0, f = initial_data(cfg)
    sol = cfg["soliton"]
    horizon = trusted_horizon(grid, f, scfg.sponge, sol["center"], sol["lam"] ** -2)
    run.manifest["trusted_horizon"] = float(horizon)
    tr = evolve(u0, scfg)
    run.record_history(tr)
    run.store_trace(tr)
    t_last = float(min(horizon, tr.times[-1]))
    dec = decompose_trace(tr.window(0.0, t_last), eps, init=SolitonParams(sol["lam"], sol["center"]))
    if "absorbed" in tr.meta:
        dec.w.meta["absorbed"] = tr.meta["absorbed"][: len(dec.w)]
    _path_outputs(run, dec)
    hist = tr.meta["history"]
    sup_w = sup_h1(dec.w)
    wox = kato_weighted_integral(dec.w, dec.path, 1.0)
    rate = modulation_rate_check(dec)
    run.manifest["reports"]["conserved"] = {
        "mass_drift": relative_drift(hist["mass"]), "energy_drift": relative_drift(hist["energy"]),
        "mass_bookkeeping_residual": mass_bookkeeping(dec, len(dec.w) - 1)[0],
        "note": "drifts include what the absorbing layer removes" if scfg.sponge else ""}
    run.manifest["reports"]["modulation"] = {
        "epsilon": eps, "window": [0.0, t_last],
        "lambda_final": float(dec.path.lam[-1]), "center_final": float(dec.path.center[-1]),
        "fit_residual_max": float(dec.path.residual.max()),
        "sup_w_h1": sup_w, "sup_w_h1_over_eps": sup_w / eps if eps else float("nan"),
        "wox": wox, "wox_over_eps2": wox / eps ** 2 if eps else float("nan"),
        "rate_constant": rate["constant"], "rate_linear_constant": rate["linear_constant"],
        "rate_holds_with_constant": rate["holds_with_constant"]}
    ck = cfg["checkpoints"]
    sd = scatter_diagnostics(dec.w, checkpoint_schedule(ck["first"], t_last, ck["factor"]), t_last)
    sd.to_csv(run.output("distances.csv"))
    scat = sd.to_dict()
    d = sd.total_dist
    scat["first_distance"] = float(d[0]) if len(d) else float("nan")
    scat["final_distance"] = float(d[-1]) if len(d) else float("nan")
    if sd.w_plus is not None:
        duh = duhamel_check(dec, sd.checkpoints[-1], sd.w_plus, rule=cfg["duhamel"]["rule"],
                            head=_head_segment(cfg, u0, scfg, eps, sd.checkpoints[-1]))
        scat["duhamel"] = duh.to_dict()["values"]
        dc = decoupling_check(u0, dec.path.lam[-1], sd.w_plus, scfg.power)
        scat["decoupling"] = dc.to_dict()["values"]
        wp_neg, wp_mean = hneg16(sd.w_plus)
        scat["w_plus"] = {"h1": h1_norm(sd.w_plus), "hneg16": wp_neg, "mean": wp_mean,
                          "mass": mass(sd.w_plus), "energy": energy(sd.w_plus, scfg.power)}
    run.manifest["reports"]["scattering"] = scat
    if len(sd.checkpoints) > 1:
        run.manifest["series"]["cauchy_distances"] = _series(
            ["checkpoint", "H1_dist", "Hneg16_dist"], sd.checkpoints[1:], sd.h1_dist, sd.hneg16_dist)
    recs = _norm_records(cfg, dec.w, "w")
    if sd.w_plus is not None:
        for s in (-1.0 / 6.0, 1.0):
            recs.append(_record("sobolev_hom", {"s": s, "of": "w_plus", "mean_removed": s < 0},
                                   hneg16(sd.w_plus)[0] if s < 0 else sobolev_norm(sd.w_plus, s),
                                   None, grid))
    _write_norms(run, recs)
    windows = cfg.get("norms", {}).get("windows") or [[0.0, t_last]]
    _shell_series(run, dec.w, windows[0])


def _head_segment(cfg, u0, scfg, eps, t_end):
    """Decomposition of the first ``head_time`` of the run with denser frames, or None.

    The step sequence is the same as in the main run, so the last head frame equals
    the main-run frame at ``head_time`` bit for bit.
    """
    d = cfg["duhamel"]
    t_h = d.get("head_time")
    if not t_h or t_h >= t_end or d["head_stride"] >= scfg.snapshot_stride:
        return None
    steps = int(round(t_h / scfg.dt))
    if steps % scfg.snapshot_stride or steps % d["head_stride"]:
        raise ConfigInvalid("duhamel.head_time must be a multiple of both snapshot spacings")
    hcfg = dataclasses.replace(scfg, t_end=t_h, snapshot_stride=d["head_stride"])
    tr = evolve(u0, hcfg)
    sol = cfg["soliton"]
    head = decompose_trace(tr, eps, init=SolitonParams(sol["lam"], sol["center"]))
    if "absorbed" in tr.meta:
        head.w.meta["absorbed"] = tr.meta["absorbed"]
    return head


def _child_config(cfg, eps):
    child = {k: copy.deepcopy(v) for k, v in cfg.items() if k != "sweep"}
    child["scenario"] = "perturbed_soliton"
    child["perturbation"] = dict(child["perturbation"], epsilon=float(eps))
    return child


def _run_child(args):
    child, directory = args
    return run_experiment(child, directory=directory)


SCALED_QUANTITIES = (
    ("sup_w_h1", ("modulation", "sup_w_h1")),
    ("wox", ("modulation", "wox")),
    ("first_distance", ("scattering", "first_distance")),
    ("final_distance", ("scattering", "final_distance")),
    ("lambda_shift", None),
)


def scaling_fit(eps, values):
    """Least-squares fit ``log|v| = a + p log eps``; returns ``(p, rms residual)``."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def _sweep(run):
    cfg = run.cfg
    eps_list = [float(e) for e in cfg["sweep"]["epsilons"]]
    jobs = []
    for e in eps_list:
        jobs.append((_child_config(cfg, e), os.path.join(run.dir, f"eps_{e:g}")))
    workers = int(cfg["sweep"].get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            children = list(pool.map(_run_child, jobs))
    else:
        children = [_run_child(j) for j in jobs]
    lam0 = cfg["soliton"]["lam"]
    agg = {"epsilons": eps_list, "children": [os.path.basename(d) for _, d in jobs],
           "child_hashes": [c["config_hash"] for c in children], "quantities": {}}
    cols = {}
    for name, key in SCALED_QUANTITIES:
        if key is None:
            vals = [abs(c["reports"]["modulation"]["lambda_final"] - lam0) for c in children]
        else:
            vals = [c["reports"][key[0]][key[1]] for c in children]
        cols[name] = vals
        p, res = scaling_fit(eps_list, vals)
        agg["quantities"][name] = {"values": vals, "exponent": p, "lstsq_residual": res}
    ratios = np.array(cols["wox"]) / np.array(eps_list) ** 2
    agg["wox_over_eps2"] = ratios.tolist()
    agg["wox_over_eps2_spread"] = float(ratios.max() / ratios.min())
    sup = np.array(cols["sup_w_h1"]) / np.array(eps_list)
    agg["sup_w_h1_over_eps"] = sup.tolist()
    fin = np.array(cols["final_distance"]) / np.array(eps_list)
    agg["final_distance_over_eps_spread"] = float(fin.max() / fin.min())
    agg["all_strictly_decreasing"] = bool(all(c["reports"]["scattering"]["strictly_decreasing"]
                                              for c in children))
    run.manifest["reports"]["sweep"] = agg
    run.manifest["series"]["scaling"] = _series(["epsilon"] + [n for n, _ in SCALED_QUANTITIES],
                                                eps_list, *(cols[n] for n, _ in SCALED_QUANTITIES))
    horizons = [c["trusted_horizon"] for c in children]
    run.manifest["trusted_horizon"] = float(min(horizons))
    run.manifest["children"] = {os.path.basename(d): c for (_, d), c in zip(jobs, children)}


PIPELINES = {"soliton": _soliton, "airy_ensemble": _airy_ensemble,
             "perturbed_soliton": _perturbed, "sweep": _sweep}


def run_experiment(cfg, directory=None):
    """Run the configured scenario and return its manifest (a JSON-ready dict).

    ``cfg`` is a raw or resolved configuration dict (validated either way).
    ``BlowupDetected`` and ``FitDiverged`` propagate after the manifest has been
    written with status ``"failed"`` and the failure point.
    """
    cfg = resolve_config(cfg)
    directory = directory or output_dir(cfg)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ConfigInvalid(f"output directory {directory!r} is not writable: {exc}") from None
    run = _Run(cfg, directory)
    try:
        PIPELINES[cfg["scenario"]](run)
    except BlowupDetected as exc:
        run.finish("failed", {"type": "BlowupDetected", "message": str(exc), "time": exc.time})
        raise
    except FitDiverged as exc:
        run.finish("failed", {"type": "FitDiverged", "message": str(exc), "frame": exc.frame})
        raise
    return to_jsonable(run.finish())


def load_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as fh:
        return json.load(fh)


def comparable(manifest):
    """The manifest without wall-clock fields (recursively, for sweep children)."""
    out = {}
    for k, v in manifest.items():
        if k == "wall_clock":
            continue
        out[k] = comparable(v) if isinstance(v, dict) else v
    return out


def plot_quantities(manifest):
    return sorted(manifest.get("series", {}))


def emit_plot_data(manifest, quantity, path):
    """Write the series ``quantity`` of a manifest (dict or file) as CSV at ``path``."""
    import csv
    if isinstance(manifest, (str, os.PathLike)):
        manifest = load_manifest(manifest)
    series = manifest.get("series", {})
    if quantity not in series:
        raise UnknownQuantity(f"{quantity!r} not in manifest; available: {', '.join(sorted(series))}")
    s = series[quantity]
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(s["columns"])
        for row in s["rows"]:
            wr.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return path


def print_summary(manifest, stream=None):
    """Short human-readable digest of a manifest (to ``stream``, default standard output)."""
    stream = stream or sys.stdout
    print(f"scenario {manifest['scenario']}  status {manifest['status']}  "
          f"hash {manifest['config_hash'][:12]}", file=stream)
    for name, rep in manifest.get("reports", {}).items():
        if not isinstance(rep, dict):
            continue
        flat = {k: v for k, v in rep.items() if isinstance(v, (int, float, bool))}
        body = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in flat.items())
        print(f"  {name}: {body}", file=stream)
