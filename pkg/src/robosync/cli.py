"""Command-line entry point: validate configs, inspect DSL parses, run
simulations, and summarize execution logs.

Exit codes: 0 success, 1 domain failure (validation/parse/bind/trace/log
errors), 2 usage or I/O error.  Machine-readable output (logs, stats) goes to
stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import enum
import sys
from pathlib import Path

from . import engine as engine_mod
from .bus import BusError
from .config import ConfigError, parse_config, validate_config, report_lines
from .dsl import BindErrors, ParseError, bind_program, format_program, parse_program
from .engine import (
    MalformedLogError,
    TraceError,
    compute_stats,
    load_trace,
    parse_log,
    serialize_log,
    serialize_stats,
)


class ExitStatus(enum.IntEnum):
    OK = 0
    FAILURE = 1
    USAGE = 2


def _read(path: str) -> str | None:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return None


def cmd_validate(args: argparse.Namespace) -> int:
    text = _read(args.config)
    if text is None:
        return ExitStatus.USAGE
    try:
        config = parse_config(text)
    except ConfigError as exc:
        for line in exc.lines():
            print(line)
        return ExitStatus.FAILURE
    report = validate_config(config)
    if not report.ok:
        for line in report_lines(report):
            print(line)
        return ExitStatus.FAILURE
    print("OK")
    return ExitStatus.OK


def cmd_parse(args: argparse.Namespace) -> int:
    text = _read(args.behavior)
    if text is None:
        return ExitStatus.USAGE
    try:
        program = parse_program(text)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return ExitStatus.FAILURE
    if args.dump_ast:
        for rule in program.rules:
            print(repr(rule))
        for definition in program.definitions.values():
            print(repr(definition))
    else:
        sys.stdout.write(format_program(program))
    return ExitStatus.OK


def cmd_run(args: argparse.Namespace) -> int:
    config_text = _read(args.config)
    program_text = _read(args.behavior) if config_text is not None else None
    trace_text = _read(args.trace) if program_text is not None else None
    if config_text is None or program_text is None or trace_text is None:
        return ExitStatus.USAGE
    try:
        config = parse_config(config_text)
        program = bind_program(parse_program(program_text), config)
        trace = load_trace(trace_text, config)
    except ConfigError as exc:
        for line in exc.lines():
            print(line, file=sys.stderr)
        return ExitStatus.FAILURE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return ExitStatus.FAILURE
    except BindErrors as exc:
        for error in exc.errors:
            where = f"{error.span.line}:{error.span.column}: " if error.span else ""
            print(f"bind error: {where}{error.message}", file=sys.stderr)
        return ExitStatus.FAILURE
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return ExitStatus.FAILURE

    try:
        log = engine_mod.run(config, program, trace, horizon_us=args.until)
    except BusError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return ExitStatus.FAILURE
    rendered = serialize_log(log.entries)
    if args.output == "-":
        sys.stdout.write(rendered)
    else:
        try:
            Path(args.output).write_text(rendered, encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
            return ExitStatus.USAGE
    if args.stats:
        sys.stderr.write(serialize_stats(compute_stats(log.entries)))
    return ExitStatus.OK


def cmd_stats(args: argparse.Namespace) -> int:
    text = _read(args.log)
    if text is None:
        return ExitStatus.USAGE
    try:
        entries = parse_log(text)
        stats = compute_stats(entries)
    except MalformedLogError as exc:
        print(f"malformed log: {exc}", file=sys.stderr)
        return ExitStatus.FAILURE
    sys.stdout.write(serialize_stats(stats))
    return ExitStatus.OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robosync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("-c", "--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("parse", help="parse a behavior program")
    p.add_argument("-b", "--behavior", required=True)
    p.add_argument("--dump-ast", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("run", help="replay a trace and write the execution log")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-b", "--behavior", required=True)
    p.add_argument("-t", "--trace", required=True)
    p.add_argument("-o", "--output", default="-", help="log path, '-' for stdout")
    p.add_argument("--stats", action="store_true", help="print run statistics to stderr")
    p.add_argument("--until", type=int, default=None, metavar="T_US", help="truncate the trace horizon")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="summarize an execution log")
    p.add_argument("log")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
