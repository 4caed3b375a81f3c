"""Command-line entry point: check, run, replay, erase, diff, explore.

Exit codes: 0 = ok/AllFinished; 10 = ErrN; 11 = ErrA; 12 = ErrP;
13 = ErrC; 20 = Deadlock; 30 = theorem violation; 2 = usage or parse
error. Reports go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .gradual import TheoremViolation, diff_run, erase
from .metatheory import check_configuration
from .racecheck import explore
from .reducer import StuckThreadError
from .scheduler import (
    DEFAULT_SEED,
    AllFinished,
    Deadlock,
    ErrorTerminal,
    Replay,
    ReplayMismatch,
    RunResult,
    Seeded,
    StepLimitExceeded,
    TerminalKind,
    read_trace,
    run,
    terminal_name,
    write_trace,
)
from .state import ErrorKind
from .syntax import ParseError, Program, check_program, parse, pretty

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ERRN = 10
EXIT_ERRA = 11
EXIT_ERRP = 12
EXIT_ERRC = 13
EXIT_DEADLOCK = 20
EXIT_THEOREM = 30

_ERROR_EXITS = {
    ErrorKind.NORMAL: EXIT_ERRN,
    ErrorKind.ABSENT: EXIT_ERRA,
    ErrorKind.PERMISSION: EXIT_ERRP,
    ErrorKind.CAST: EXIT_ERRC,
}


def _exit_for(terminal: TerminalKind) -> int:
    if isinstance(terminal, AllFinished):
        return EXIT_OK
    if isinstance(terminal, ErrorTerminal):
        return _ERROR_EXITS[terminal.kind]
    return EXIT_DEADLOCK


def _load(path: str) -> Program:
    source = Path(path).read_text(encoding="utf-8")
    try:
        program = parse(source)
    except ParseError as exc:
        print(f"{path}:{exc.line}:{exc.col}: parse error: {exc.message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    diags = check_program(program)
    if diags:
        for d in diags:
            print(d.render(path), file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return program


def _emit(report: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for key, value in report.items():
            print(f"{key}: {value}")


def _run_report(result: RunResult, args: argparse.Namespace) -> dict:
    report: dict = {
        "terminal": terminal_name(result.terminal),
        "steps": len(result.trace),
    }
    if isinstance(result.terminal, ErrorTerminal):
        report["rule"] = result.terminal.rule
    if args.dump_heap:
        report["heap"] = (
            result.config.heap.to_snapshot() if args.report == "json"
            else result.config.heap.snapshot_json()
        )
    return report


def _cmd_check(args: argparse.Namespace) -> int:
    source = Path(args.input).read_text(encoding="utf-8")
    try:
        program = parse(source)
    except ParseError as exc:
        print(f"{args.input}:{exc.line}:{exc.col}: parse error: {exc.message}",
              file=sys.stderr)
        return EXIT_USAGE
    diags = check_program(program)
    if diags:
        for d in diags:
            print(d.render(args.input), file=sys.stderr)
        _emit({"well_formed": False, "diagnostics": len(diags)}, args.report)
        return EXIT_USAGE
    _emit({"well_formed": True}, args.report)
    return EXIT_OK


def _observer(args: argparse.Namespace):
    if not args.check_every_step:
        return None

    def check(cfg, rule, tid) -> None:
        report = check_configuration(cfg)
        if not report.ok:
            raise SystemExit(
                f"configuration ill-formed after {rule} on thread {tid}:\n"
                + report.render()
            )

    return check


def _cmd_run(args: argparse.Namespace) -> int:
    program = _load(args.input)
    print(f"seed: {args.seed}", file=sys.stderr)
    try:
        result = run(program, Seeded(args.seed), max_steps=args.max_steps,
                     observer=_observer(args))
    except (StuckThreadError, StepLimitExceeded) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.trace:
        write_trace(args.trace, result.trace)
    _emit(_run_report(result, args), args.report)
    return _exit_for(result.terminal)


def _cmd_replay(args: argparse.Namespace) -> int:
    program = _load(args.input)
    trace = read_trace(args.replay)
    try:
        result = run(program, Replay(trace), max_steps=args.max_steps,
                     observer=_observer(args))
    except ReplayMismatch as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_THEOREM
    except (StuckThreadError, StepLimitExceeded) as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(_run_report(result, args), args.report)
    return _exit_for(result.terminal)


def _cmd_erase(args: argparse.Namespace) -> int:
    program = _load(args.input)
    sys.stdout.write(pretty(erase(program)))
    return EXIT_OK


def _cmd_diff(args: argparse.Namespace) -> int:
    program = _load(args.input)
    print(f"seed: {args.seed}", file=sys.stderr)
    try:
        report = diff_run(program, args.seed, max_steps=args.max_steps)
    except TheoremViolation as exc:
        print(f"theorem violation: {exc}", file=sys.stderr)
        return EXIT_THEOREM
    _emit(
        {
            "annotated_terminal": report.annotated_terminal,
            "erased_terminal": report.erased_terminal,
            "annotated_steps": report.annotated_steps,
            "erased_steps": report.erased_steps,
            "forward_diverged_at": report.forward_diverged_at,
            "backward_diverged_at": report.backward_diverged_at,
            "verdicts": report.verdicts,
        },
        args.report,
    )
    return EXIT_OK


def _cmd_explore(args: argparse.Namespace) -> int:
    program = _load(args.input)
    report = explore(program, max_steps=args.max_steps or 40,
                     max_schedules=args.max_schedules)
    _emit(report.to_json(), args.report)
    if report.witnesses and not report.all_witnesses_unsafe:
        print("witness without an unsafe object involved", file=sys.stderr)
        return EXIT_THEOREM
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dala",
        description="Interpreter, metatheory checker, and concurrency analyses "
                    "for the Dala capability calculus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed: bool = True) -> None:
        p.add_argument("input", help="program file (.dala)")
        p.add_argument("--report", choices=("text", "json"), default="text")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p_check = sub.add_parser("check", help="static well-formedness judgment")
    common(p_check, seed=False)
    p_check.set_defaults(func=_cmd_check)

    p_run = sub.add_parser("run", help="run to a terminal configuration")
    common(p_run)
    p_run.add_argument("--trace", help="record the trace to a JSONL file")
    p_run.add_argument("--max-steps", type=int, default=None)
    p_run.add_argument("--check-every-step", action="store_true",
                       help="assert configuration well-formedness after every step")
    p_run.add_argument("--dump-heap", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="re-execute a recorded trace")
    common(p_replay, seed=False)
    p_replay.add_argument("--replay", required=True, help="trace JSONL to replay")
    p_replay.add_argument("--max-steps", type=int, default=None)
    p_replay.add_argument("--check-every-step", action="store_true")
    p_replay.add_argument("--dump-heap", action="store_true")
    p_replay.set_defaults(func=_cmd_replay)

    p_erase = sub.add_parser("erase", help="print the safe-erased program")
    common(p_erase, seed=False)
    p_erase.set_defaults(func=_cmd_erase)

    p_diff = sub.add_parser("diff", help="differential gradual-guarantee run")
    common(p_diff)
    p_diff.add_argument("--max-steps", type=int, default=None)
    p_diff.set_defaults(func=_cmd_diff)

    p_explore = sub.add_parser("explore", help="bounded exhaustive interleaving search")
    common(p_explore, seed=False)
    p_explore.add_argument("--max-steps", type=int, default=40)
    p_explore.add_argument("--max-schedules", type=int, default=100_000)
    p_explore.set_defaults(func=_cmd_explore)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
