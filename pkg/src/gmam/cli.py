"""Command-line front end.

Subcommands
-----------
equilibria         locate attractors and the saddle, write tables and branch data
mincurve           converge the minimizing transition curve at fixed parameters
sweep-fit          sweep the control parameter toward the fold and fit the scaling
normal-form-check  self-test against the fold normal form's analytic barrier

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import RunConfig
from .errors import ConfigError, GmamError

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmam",
        description="Quasipotential barriers and maximum-likelihood transition curves "
        "for metastable systems with state-dependent noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--output", default=None, help="output directory (overrides config)")

    p_eq = sub.add_parser("equilibria", help="equilibrium table and branch data")
    add_common(p_eq)

    p_mc = sub.add_parser("mincurve", help="minimizing curve at fixed parameters")
    add_common(p_mc)
    p_mc.add_argument("--bias", type=float, default=None, help="bias override in volts (superlattice)")

    p_sw = sub.add_parser("sweep-fit", help="parameter sweep toward the fold plus scaling fits")
    add_common(p_sw)
    p_sw.add_argument("--threads", type=int, default=1, help="worker threads (effective with --warm-start false)")
    p_sw.add_argument("--warm-start", type=_parse_bool, default=None, metavar="BOOL",
                      help="reuse each converged curve for the next sweep point")

    p_nf = sub.add_parser("normal-form-check", help="self-test on the fold normal form")
    add_common(p_nf, needs_config=False)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "normal-form-check":
            outcome = pipeline.run_normal_form_check(args.output or "out")
            report = outcome["report"]
            print(f"max relative barrier error: {report['max_rel_error']:.3e}")
            print(f"fitted exponent: {report['beta']:.6f} (expected 1.5)")
            print(f"fitted amplitude: {report['s0']:.6f} (expected {8.0 / 3.0:.6f})")
            for path in outcome["files"]:
                print(f"wrote {path}")
            if not report["passed"]:
                print("normal-form check FAILED", file=sys.stderr)
                return EXIT_NUMERICAL
            print("normal-form check passed")
            return EXIT_OK

        config = RunConfig.from_file(args.config)
        if args.output is not None:
            config.output_dir = args.output

        if args.command == "equilibria":
            outcome = pipeline.run_equilibria(config)
            for eq in outcome["attractors"]:
                state = ", ".join(f"{x:.6g}" for x in eq.state)
                print(f"{eq.stability}: [{state}] |b| = {eq.residual_norm:.3e}")
            sd = outcome["saddle"]
            state = ", ".join(f"{x:.6g}" for x in sd.state)
            print(f"{sd.stability}: [{state}] |b| = {sd.residual_norm:.3e}")
            for path in outcome["files"]:
                print(f"wrote {path}")
            return EXIT_OK

        if args.command == "mincurve":
            outcome = pipeline.run_mincurve(config, bias=args.bias)
            summary = outcome["summary"]
            print(f"action = {summary['action']:.12g}")
            print(f"iterations = {summary['iterations_used']}, converged = {summary['converged']}")
            for path in outcome["files"]:
                print(f"wrote {path}")
            return EXIT_OK

        if args.command == "sweep-fit":
            outcome = pipeline.run_sweep_fit(config, threads=args.threads, warm_start=args.warm_start)
            print(pipeline.format_sweep_report(outcome, config.reference_values))
            for path in outcome["files"]:
                print(f"wrote {path}")
            failed = outcome["fit"].extras.get("n_failed_points", 0)
            if failed:
                print(f"warning: {failed} sweep points failed", file=sys.stderr)
            return EXIT_OK

    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GmamError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
