"""``softentropy`` command line.

Exit codes: 0 success, 1 usage error, 2 incomplete data, 3 baseline,
fingerprint or store failure, 4 interrupted.

Settings resolve as flag, then ``SOFTENTROPY_<NAME>`` environment variable,
then the project's ``softentropy.ini``, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import entropy as ent
from .graphlab import build_graph, surviving_subgraph
from .harness import BrokenBaseline, DiscoveryFailed
from .interchange import SchemaError, canonical_dumps, export_document, import_document, load_document
from .matrix import IncompleteMatrix, survivors
from .mutagen import MutagenError, compose_mutants, enumerate_all, load_units
from .report import (
    WEIGHT_COLUMNS,
    ReportError,
    coverage_fractions,
    curve_table,
    lab_report,
    lab_rows,
    matrix_from_store,
    metrics_report,
    resolve_ordering,
    to_csv,
    weight_rows,
)
from .runner import (
    CONFIG_FILE,
    Interrupted,
    RunError,
    RunPlan,
    SessionMismatch,
    load_project_config,
    read_config_file,
    run_session,
)
from .spacelab import DEMO_SPACE, SpaceError, load_lab_config
from .store import CorruptStore, FingerprintMismatch, Store

EXIT_OK, EXIT_USAGE, EXIT_INCOMPLETE, EXIT_BASELINE, EXIT_INTERRUPTED = 0, 1, 2, 3, 4
ENV_PREFIX = "SOFTENTROPY_"
DEFAULT_DB = "softentropy.db"

DEFAULTS = {
    "db": DEFAULT_DB,
    "mode": "matrix",
    "jobs": 1,
    "order": 1,
    "cap": 1000,
    "seed": 0,
    "log_base": "e",
    "ordering": "declaration",
}
CONVERT = {"jobs": int, "order": int, "cap": int, "seed": int, "timeout_factor": float}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setting(args, name: str, file_values: dict | None = None):
    value = getattr(args, name, None)
    if value is None:
        value = os.environ.get(ENV_PREFIX + name.upper())
    if value is None and file_values:
        value = file_values.get(name)
    if value is None:
        value = DEFAULTS.get(name)
    if value is not None and name in CONVERT:
        try:
            value = CONVERT[name](value)
        except ValueError:
            raise UsageError(f"invalid value for {name}: {value!r}") from None
    return value


def _config_values(args) -> dict:
    workdir = Path(_setting(args, "workdir") or ".")
    path = args.config if getattr(args, "config", None) else workdir / CONFIG_FILE
    return read_config_file(path)


def _open_store(args, file_values=None) -> Store:
    path = Path(_setting(args, "db", file_values))
    if not path.exists():
        raise UsageError(f"no session store at {path}")
    return Store.open_or_create(path)


def _emit(text: str, output: str | None = None) -> None:
    if output and output != "-":
        Path(output).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _base(args, file_values=None):
    value = _setting(args, "log_base", file_values)
    try:
        return ent.normalize_base(value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    file_values = _config_values(args)
    workdir = Path(_setting(args, "workdir") or ".")
    overrides = {"timeout_factor": _setting(args, "timeout_factor")}
    project = load_project_config(workdir, args.config, overrides)
    plan = RunPlan(
        mode=_setting(args, "mode", file_values),
        jobs=_setting(args, "jobs", file_values),
        order=_setting(args, "order", file_values),
        cap=_setting(args, "cap", file_values),
        seed=_setting(args, "seed", file_values),
    )
    db = Path(_setting(args, "db", file_values))

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} cells", end="", file=sys.stderr, flush=True)

    summary = run_session(project, plan, db, progress=progress)
    if not args.quiet and summary.executed + summary.group_executed:
        print(file=sys.stderr)
    print(
        f"{summary.tests} tests, {summary.mutants} mutants; executed {summary.executed} of "
        f"{summary.planned} cells"
        + (f" and {summary.group_executed} of {summary.group_planned} group runs" if plan.mode == "group" else "")
    )
    return EXIT_OK


def cmd_metrics(args) -> int:
    with _open_store(args) as store:
        report = metrics_report(store, _base(args))
    if args.format == "csv":
        _emit(to_csv(weight_rows(report), WEIGHT_COLUMNS), args.output)
    else:
        _emit(canonical_dumps(report), args.output)
    return EXIT_OK


def cmd_curve(args) -> int:
    base = _base(args)
    with _open_store(args) as store:
        matrix = matrix_from_store(store)
        ordering = resolve_ordering(_setting(args, "ordering"), matrix, coverage_fractions(store))
        curve = ent.entropy_curve(matrix, ordering, base)
    rows = curve_table(curve)
    if args.format == "json":
        _emit(canonical_dumps({"log_base": str(base), "ordering": list(ordering), "points": rows}), args.output)
    else:
        _emit(to_csv(rows, ent.CURVE_COLUMNS), args.output)
    return EXIT_OK


def cmd_export(args) -> int:
    with _open_store(args) as store:
        doc = export_document(store, timings=args.timings)
    _emit(canonical_dumps(doc), args.output)
    return EXIT_OK


def cmd_import(args) -> int:
    text = sys.stdin.read() if args.document == "-" else Path(args.document).read_text(encoding="utf-8")
    doc = load_document(text)
    db = Path(_setting(args, "db"))
    with Store.open_or_create(db, mode=doc.get("mode", "matrix") if isinstance(doc, dict) else "matrix") as store:
        counts = import_document(store, doc)
    print(", ".join(f"{v} {k}" for k, v in counts.items() if v))
    return EXIT_OK


def cmd_lab(args) -> int:
    config = load_lab_config(args.space or DEMO_SPACE)
    report = lab_report(config, _base(args))
    if args.format == "csv":
        _emit(to_csv(lab_rows(report), ent.CURVE_COLUMNS), args.output)
    else:
        _emit(canonical_dumps(report), args.output)
    return EXIT_OK


def cmd_mutants(args) -> int:
    file_values = _config_values(args)
    workdir = Path(_setting(args, "workdir") or ".")
    project = load_project_config(workdir, args.config)
    registry = project.registry()
    units = load_units(project.root, project.sources, registry)
    mutants = compose_mutants(
        enumerate_all(units, registry),
        _setting(args, "order", file_values),
        _setting(args, "cap", file_values),
        _setting(args, "seed", file_values),
    )
    if args.format == "json":
        _emit(canonical_dumps([m.to_json() for m in mutants]), args.output)
    else:
        _emit("".join(f"{m.id} {m.order} {m.describe()}\n" for m in mutants) or "\n", args.output)
    return EXIT_OK


def cmd_graph(args) -> int:
    with _open_store(args) as store:
        graph = build_graph(store.mutants(), include_impl=not args.no_impl)
        if args.surviving:
            matrix = matrix_from_store(store)
            graph = surviving_subgraph(graph, survivors(matrix, matrix.tests), args.include_uncertain)
    _emit(graph.to_text() or "\n", args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="softentropy", description="Mutation runs and software-entropy metrics.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, db=True, out=True):
        if db:
            p.add_argument("--db", metavar="PATH", help=f"session store (default {DEFAULT_DB})")
        if out:
            p.add_argument("-o", "--output", metavar="PATH", help="write here instead of stdout")

    def project(p):
        p.add_argument("--workdir", metavar="DIR", help="project root (default .)")
        p.add_argument("--config", metavar="PATH", help=f"config file (default DIR/{CONFIG_FILE})")
        p.add_argument("--order", type=int, metavar="K", help="maximum mutant order")
        p.add_argument("--cap", type=int, metavar="N", help="maximum mutant count")
        p.add_argument("--seed", type=int, metavar="N", help="sampling seed for higher orders")

    p = sub.add_parser("run", help="execute all pending cells of a session")
    common(p, out=False)
    project(p)
    p.add_argument("--mode", choices=("matrix", "group"))
    p.add_argument("--jobs", type=int, metavar="N")
    p.add_argument("--timeout-factor", type=float, metavar="F", dest="timeout_factor")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="JSON report of every metric")
    common(p)
    p.add_argument("--log-base", choices=("2", "e"), dest="log_base")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("curve", help="entropy after each test prefix")
    common(p)
    p.add_argument("--log-base", choices=("2", "e"), dest="log_base")
    p.add_argument("--ordering", metavar="declaration|reverse|impact|coverage|file:PATH")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("export", help="dump the session as interchange JSON")
    common(p)
    p.add_argument("--timings", action="store_true", help="include durations and timestamps")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", help="load an interchange document into a session")
    common(p, out=False)
    p.add_argument("document", help="path, or - for stdin")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("lab", help="exact oracle run over a tiny program space")
    common(p, db=False)
    p.add_argument("space", nargs="?", help="space config JSON (default: bundled demo)")
    p.add_argument("--log-base", choices=("2", "e"), dest="log_base")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_lab)

    p = sub.add_parser("mutants", help="list the mutants a run would use")
    common(p, db=False)
    project(p)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_mutants)

    p = sub.add_parser("graph", help="mutation graph as an edge list")
    common(p)
    p.add_argument("--surviving", action="store_true", help="restrict to full-suite survivors")
    p.add_argument("--include-uncertain", action="store_true", dest="include_uncertain")
    p.add_argument("--no-impl", action="store_true", help="leave out the unmutated program")
    p.set_defaults(func=cmd_graph)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Interrupted as exc:
        print(f"interrupted: {exc}", file=sys.stderr)
        return EXIT_INTERRUPTED
    except (IncompleteMatrix, ent.MissingCoverage) as exc:
        print(f"incomplete data: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (BrokenBaseline, DiscoveryFailed, FingerprintMismatch, SessionMismatch, CorruptStore) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BASELINE
    except (UsageError, ReportError, RunError, SchemaError, SpaceError, MutagenError,
            ent.EntropyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
