"""Command-line entry point: ``fisherq run | verify | list-scenarios``.

Exit status: 0 all checks pass, 1 a check failed, 2 bad configuration or
arguments, 3 propagation failure. numpy is imported only after ``--threads``
has been applied to the thread-pool environment variables.
"""

import argparse
import os
import sys
from pathlib import Path

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")
SUITE_NAMES = ("scalar", "spin", "variational", "gauge", "classical", "all")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="fisherq_out", help="output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads for numerical libraries")
    parser = Parser(prog="fisherq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    run = sub.add_parser("run", parents=[common], help="run a scenario file or bundled scenario name")
    run.add_argument("scenario")
    verify = sub.add_parser("verify", parents=[common], help="run a property suite")
    verify.add_argument("suite", help="one of " + ", ".join(SUITE_NAMES))
    sub.add_parser("list-scenarios", parents=[common], help="list bundled and user scenarios")
    return parser


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be at least 1")
    for var in THREAD_VARIABLES:
        os.environ[var] = str(n)


def _print_failures(checks):
    for c in checks:
        if not c.passed:
            print(f"FAIL {c.name}: {c.value:.3e} (limit {c.tolerance:.3e})", file=sys.stderr)


def cmd_run(args):
    from .scenarios import resolve_scenario, run_config

    path = resolve_scenario(args.scenario, os.environ.get("FISHERQ_SCENARIO_DIR"))
    out = Path(args.out)
    result = run_config(path, out, seed=args.seed)
    _print_failures(result.checks)
    print(f"{result.name}: {'pass' if result.passed else 'FAIL'} ({len(result.checks)} checks) -> {out}")
    return 0 if result.passed else 1


def cmd_verify(args):
    from .scenarios import write_checks
    from .verify import SUITES, run_suite

    if args.suite not in SUITE_NAMES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}")
    names = list(SUITES) if args.suite == "all" else [args.suite]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    every, every_time = [], []
    for name in names:
        checks, timing = run_suite(name)
        write_checks(out / f"verify_{name}.csv", checks)
        write_checks(out / f"verify_{name}_timings.csv", timing)
        every += checks
        every_time += timing
        passed = sum(c.passed for c in checks)
        slow = sum(not c.passed for c in timing)
        note = f", {slow} over time limit" if slow else ""
        print(f"{name}: {passed}/{len(checks)} checks pass{note}")
    if args.suite == "all":
        write_checks(out / "verify_all.csv", every)
    _print_failures(every + every_time)
    return 0 if all(c.passed for c in every + every_time) else 1


def cmd_list(args):
    from .scenarios import list_scenarios

    rows = list_scenarios(os.environ.get("FISHERQ_SCENARIO_DIR"))
    width = max((len(name) for name, _, _ in rows), default=4)
    for name, description, _ in rows:
        print(f"{name:<{width}}  {description}")
    return 0


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "list-scenarios": cmd_list}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _set_threads(args.threads)
        from .errors import CausticError, ConfigError, InputError, PropagationError

        try:
            return COMMANDS[args.command](args)
        except (ConfigError, InputError) as exc:
            print(f"fisherq: configuration error: {exc}", file=sys.stderr)
            return 2
        except (PropagationError, CausticError) as exc:
            print(f"fisherq: run failed: {exc}", file=sys.stderr)
            return 3
    except UsageError as exc:
        print(f"fisherq: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
