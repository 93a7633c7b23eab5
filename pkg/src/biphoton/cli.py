"""Command-line interface: ``biphoton simulate|analyze|witness|all|presets|external|dispersion``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .estimate import FitError, MonteCarloError, ResolutionLimitedError
from .io import FormatError, read_json_report
from .pipeline import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, analyze_external, dispersion_comparison, exit_code_for, format_table, run
from .scenario import DISTRIBUTIONS, ConfigError, load_preset, load_scenario, preset_names, preset_text
from .simulate import InstrumentResponse

log = logging.getLogger("biphoton")


def _add_run_args(p: argparse.ArgumentParser):
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="scenario TOML file")
    source.add_argument("--scenario", help="bundled preset name (see 'biphoton presets')")
    p.add_argument("--seed", type=int, help="master seed; overrides [run] seed")
    p.add_argument("--out", type=Path, help="output directory (default: ./<scenario name>)")
    p.add_argument("--workers", type=int, help="threads for Poisson draws and Monte-Carlo trials")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials; overrides [run] mc_trials")
    p.add_argument("--counts", type=Path, help="directory holding counts_<name>.csv (analyze only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biphoton",
        description="Simulate and analyze joint spectral, temporal and time-frequency "
        "measurements of Gaussian photon pairs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for mode, text in (
        ("simulate", "draw coincidence count grids and write counts_<name>.csv"),
        ("analyze", "fit, deconvolve and test count grids; write report.json and report.txt"),
        ("witness", "re-evaluate witness verdicts of an existing report.json"),
        ("all", "simulate, then analyze"),
    ):
        _add_run_args(sub.add_parser(mode, help=text, description=text))

    p = sub.add_parser("presets", help="list bundled scenarios")
    p.add_argument("--show", metavar="NAME", help="print the TOML of one preset")

    p = sub.add_parser("external", help="analyze count grid CSVs without a scenario")
    p.add_argument("counts", nargs="+", type=Path, help="count grid CSV files")
    p.add_argument(
        "--response", nargs=3, action="append", metavar=("NAME", "RES_S", "RES_I"), default=[],
        help=f"instrument widths for one distribution ({', '.join(DISTRIBUTIONS)}), in axis units",
    )
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--trials", type=int, default=50, help="Monte-Carlo trials")
    p.add_argument("--k", type=float, default=3.0, help="verdict significance in standard deviations")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("dispersion", help="test a dispersed run against the classical bound of a reference run")
    p.add_argument("reference", type=Path, help="report.json without dispersion")
    p.add_argument("dispersed", type=Path, help="report.json with equal and opposite dispersion")
    p.add_argument("--chirp", type=float, required=True, help="magnitude of the applied chirp, ps^2")
    p.add_argument("--k", type=float, default=3.0)
    p.add_argument("--basis", choices=("raw", "deconvolved"), default="deconvolved")
    return parser


def _scenario(args):
    scenario = load_scenario(args.config) if args.config else load_preset(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.trials is not None:
        changes["mc_trials"] = args.trials
    return scenario.with_overrides(**changes) if changes else scenario


def _cmd_run(args) -> int:
    if args.counts is not None and args.command != "analyze":
        raise ConfigError("--counts is only valid with 'analyze'")
    scenario = _scenario(args)
    out = args.out or Path(scenario.name)
    log.info("running %s on %s -> %s", args.command, scenario.name, out)
    result = run(scenario, args.command, out, counts_dir=args.counts)
    for path in result.files:
        log.info("wrote %s", path)
    if result.report is not None:
        sys.stdout.write(format_table(result.report))
    else:
        print(f"wrote {len(result.files)} count grids to {out}")
    return result.exit_code


def _cmd_presets(args) -> int:
    if args.show:
        sys.stdout.write(preset_text(args.show))
        return EXIT_OK
    for name in preset_names():
        s = load_preset(name)
        chirps = f"A_s={s.state.chirp_s:g} A_i={s.state.chirp_i:g} ps^2"
        print(f"{name:<8} {', '.join(s.distributions):<32} {chirps}")
    return EXIT_OK


def _cmd_external(args) -> int:
    responses = {}
    for name, rs, ri in args.response:
        if name not in DISTRIBUTIONS:
            raise ConfigError(f"--response: unknown distribution {name!r}; expected one of {', '.join(DISTRIBUTIONS)}")
        try:
            responses[name] = InstrumentResponse(float(rs), float(ri))
        except ValueError as exc:
            raise ConfigError(f"--response {name}: {exc}") from None
    report = analyze_external(args.counts, responses, args.out, n_trials=args.trials, k=args.k, workers=args.workers)
    sys.stdout.write(format_table(report))
    return exit_code_for(report["witnesses"])


def _cmd_dispersion(args) -> int:
    ref = read_json_report(args.reference)
    disp = read_json_report(args.dispersed)
    w = dispersion_comparison(ref, disp, args.chirp, args.k, args.basis)
    print(
        f"classical bound {w.threshold:.4g} ps; measured {w.value:.4g} ± {w.error:.2g} ps; "
        f"{w.verdict} ({w.sigma_distance:.1f} sigma, k={w.k:g})"
    )
    return EXIT_INCONCLUSIVE if w.verdict == "inconclusive" else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    handlers = {"presets": _cmd_presets, "external": _cmd_external, "dispersion": _cmd_dispersion}
    try:
        return handlers.get(args.command, _cmd_run)(args)
    except ResolutionLimitedError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ConfigError, FormatError, FitError, MonteCarloError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
