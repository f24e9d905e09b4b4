"""Command line front end.

    erlang-edm ode SCENARIO [-o OUTDIR]
    erlang-edm agents SCENARIO [-o OUTDIR]
    erlang-edm stability SCENARIO [-o OUTDIR]
    erlang-edm lyapunov SCENARIO [-o OUTDIR]

SCENARIO is either a path to a scenario JSON file or the name of a bundled
scenario (congestion_sec6_1, rps_sec6_2).  Artifacts land in OUTDIR
(default: edm-out).  EDM_THREADS caps how many worker processes the agents
subcommand uses for seed replication.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .errors import (
    InvalidOrder,
    NegativeStayRate,
    NonContractive,
    NumericalFailure,
    OutOfRange,
    ScenarioError,
    StepFailure,
)
from .runner import run_agents, run_lyapunov, run_ode, run_stability
from .scenario import bundled_scenario, bundled_scenario_names, load_scenario

EXIT_CODES = {
    "ok": 0,
    "config": 2,
    "stay_rate": 3,
    "solver": 4,
    "non_contractive": 5,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erlang-edm",
        description="Evolutionary dynamics with Erlang-distributed revision times.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ode": "integrate the mean-field dynamics and write the trajectory",
        "agents": "run finite-population simulations for every seed",
        "stability": "compute the contractivity certificate report",
        "lyapunov": "evaluate the Lyapunov decomposition along a trajectory",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument(
            "scenario",
            help="scenario JSON path, or a bundled name: "
            + ", ".join(bundled_scenario_names()),
        )
        p.add_argument(
            "-o",
            "--output-dir",
            default="edm-out",
            help="directory for output artifacts (default: edm-out)",
        )
    return parser


def _load(arg: str):
    if os.path.exists(arg):
        return load_scenario(arg)
    if os.sep in arg or arg.endswith(".json"):
        raise ScenarioError(f"scenario file not found: {arg}")
    return bundled_scenario(arg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = _load(args.scenario)
        outdir = args.output_dir
        if args.command == "ode":
            s = run_ode(scenario, outdir)
            print(
                f"ode: t_final={s['t_final']:.6g}"
                f" ne_residual={s['ne_residual']:.3e}"
                f" ene_residual={s['ene_residual']:.3e} -> {outdir}"
            )
        elif args.command == "agents":
            s = run_agents(scenario, outdir)
            print(
                f"agents: {len(s['seeds'])} seeds, N={s['N']},"
                f" max sup deviation {s['max_sup_deviation']:.4f} -> {outdir}"
            )
        elif args.command == "stability":
            s = run_stability(scenario, outdir)
            print(
                f"stability: certified={s['certified']}"
                f" lambda={s['lambda']:.6g}"
                f" lambda_lower={s['lambda_lower']:.6g} -> {outdir}"
            )
        else:
            s = run_lyapunov(scenario, outdir)
            print(
                f"lyapunov: alpha={s['alpha']:.6g}"
                f" samples={s['n_samples']} -> {outdir}"
            )
    except (ScenarioError, InvalidOrder, OutOfRange, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except NegativeStayRate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["stay_rate"]
    except (StepFailure, NumericalFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["solver"]
    except NonContractive as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["non_contractive"]
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())
