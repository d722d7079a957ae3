"""Command-line entry point ``gkdvlab``.

Every subcommand accepts ``--config <path>`` (a JSON experiment configuration)
and ``--out <dir>``.  Exit status: 0 on success, 1 when the input is invalid,
2 when a run fails or a verification does not pass.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigInvalid, GKdVLabError, UnknownQuantity
from . import experiments as ex

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _config(args, scenario=None):
    """Resolved config from ``--config`` (or the scenario defaults), with ``--out`` applied."""
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{args.config}: not valid JSON ({exc})") from None
    if scenario is not None:
        raw = dict(raw, scenario=scenario)
    elif "scenario" not in raw:
        raise ConfigInvalid("the configuration must name a scenario")
    if args.out:
        raw["output_dir"] = args.out
    return ex.resolve_config(raw)


def _run(args, scenario=None):
    cfg = _config(args, scenario)
    manifest = ex.run_experiment(cfg)
    ex.print_summary(manifest)
    print(f"manifest: {os.path.join(ex.output_dir(cfg), 'manifest.json')}")
    return EXIT_OK


def cmd_simulate(args):
    return _run(args)


def cmd_norms(args):
    return _run(args, "airy_ensemble")


def cmd_scatter(args):
    return _run(args, "perturbed_soliton")


def cmd_sweep(args):
    return _run(args, "sweep")


def cmd_soliton_check(args):
    from .soliton import soliton_identities
    from .spectral import Grid
    raw = {"L": args.L, "M": args.M}
    if args.config:
        cfg = _config(args, "soliton")
        raw = {"L": cfg["grid"]["L"], "M": cfg["grid"]["M"]}
    try:
        grid = Grid(float(raw["L"]), int(raw["M"]))
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    rep = soliton_identities(grid)
    for k, v in rep.values.items():
        print(f"{k:28s} {v!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "soliton_check.json"), "w") as fh:
            fh.write(rep.to_json(indent=1) + "\n")
    return EXIT_OK


def cmd_verify(args):
    from .acceptance import verify_suite
    work = None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        work = args.out
    rep = verify_suite(args.level, workdir=work, broken_dealiasing=args.broken_dealiasing)
    if args.out:
        with open(os.path.join(args.out, f"verify_{args.level}.json"), "w") as fh:
            fh.write(rep.to_json(indent=1) + "\n")
    n = len(rep["criteria"])
    print(f"{n - len(rep['failed'])}/{n} criteria passed")
    return EXIT_OK if rep["all_passed"] else EXIT_RUNTIME


def cmd_emit_plot_data(args):
    manifest = args.manifest
    if manifest is None:
        if not args.config:
            raise ConfigInvalid("pass --manifest, or --config to locate the run directory")
        manifest = ex.output_dir(_config(args))
    if not os.path.exists(manifest):
        raise ConfigInvalid(f"no manifest at {manifest}")
    out_dir = args.out or "."
    path = ex.emit_plot_data(manifest, args.quantity, os.path.join(out_dir, f"{args.quantity}.csv"))
    print(path)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit status 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(
        prog="gkdvlab",
        description="Pseudo-spectral experiments for u_t + u_xxx + (u^4)_x = 0.",
        epilog="Exit status: 0 success, 1 invalid input, 2 failed run or verification.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.set_defaults(func=func)
        return sp

    add("simulate", cmd_simulate, "run the scenario named in the configuration")
    add("norms", cmd_norms, "Strichartz, bilinear, quartilinear and X^{s,b} diagnostics of free waves")
    add("scatter", cmd_scatter, "perturbed soliton: modulation, pullbacks, Duhamel and decoupling checks")
    add("sweep", cmd_sweep, "perturbed-soliton runs over several epsilons with scaling fits")
    sp = add("soliton-check", cmd_soliton_check, "ODE residual and integral identities of the soliton profile")
    sp.add_argument("--L", type=float, default=60.0, help="box length (default 60)")
    sp.add_argument("--M", type=int, default=4096, help="grid points (default 4096)")
    sp = add("verify", cmd_verify, "run the acceptance criteria")
    sp.add_argument("--level", choices=("quick", "full"), default="quick")
    sp.add_argument("--broken-dealiasing", action="store_true",
                    help="fault injection: form products without zero padding")
    sp = add("emit-plot-data", cmd_emit_plot_data, "write one manifest series as CSV")
    sp.add_argument("--manifest", help="manifest file or run directory")
    sp.add_argument("--quantity", required=True, help="series name, e.g. lambda_path or xsb_shells")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, UnknownQuantity) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GKdVLabError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
