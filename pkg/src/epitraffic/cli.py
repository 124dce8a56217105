"""Command line entry point."""

from __future__ import annotations

import argparse
import sys

from .harness import METHODS, ExperimentSpec, run_experiment
from .scenarios import UnknownScenarioError, builtin_names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epitraffic",
        description=(
            "Evolve actuated traffic-signal controllers on the built-in "
            "cellular-automaton traffic simulator."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write a results CSV")
    run.add_argument(
        "--scenario",
        required=True,
        help=f"built-in scenario ({', '.join(builtin_names())}) or a scenario JSON file",
    )
    run.add_argument("--method", required=True, choices=METHODS)
    run.add_argument("--seed", type=int, default=1, help="master seed")
    run.add_argument("--generations", type=int, default=None)
    run.add_argument("--population", type=int, default=None)
    run.add_argument("--reps", type=int, default=None, help="simulator repetitions per evaluation")
    run.add_argument("--out", required=True, help="CSV output path")
    run.add_argument("--epi-guard", choices=("as_equation", "as_prose"), default="as_equation")
    run.add_argument("--mutation", choices=("point", "subtree"), default=None)
    run.add_argument("--workers", type=int, default=1, help="parallel evaluation processes")
    run.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    progress = None
    if not args.quiet:
        def progress(rec):
            print(
                f"gen {rec.generation:4d}  window {rec.window_start:6d}  "
                f"best {rec.best_fitness:12.1f}  mean {rec.mean_fitness:12.1f}  "
                f"({rec.wall_time:.2f}s)"
            )

    spec = ExperimentSpec(
        scenario=args.scenario,
        method=args.method,
        out=args.out,
        master_seed=args.seed,
        generations=args.generations,
        population=args.population,
        repetitions=args.reps,
        epi_guard=args.epi_guard,
        mutation=args.mutation,
        workers=args.workers,
        on_generation=progress,
    )
    try:
        path = run_experiment(spec)
    except (UnknownScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
