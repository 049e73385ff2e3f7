"""Resumable orchestration of a mutation run over a project tree.

The project is described by a flat ``[softentropy]`` section in
``softentropy.ini`` at its root. A run fingerprints the tree, opens the
session store, discovers and baselines the tests once, composes the mutant
list and then executes whatever cells the store does not hold yet. Workers
each own a private copy of the tree; only the calling thread writes to the
store.
"""

from __future__ import annotations

import configparser
import logging
import queue
import tempfile
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import toylang
from .harness import (
    DEFAULT_ENV_ALLOWLIST,
    DEFAULT_MIN_TIMEOUT,
    DEFAULT_TIMEOUT_FACTOR,
    SuiteConfig,
    TestCase,
    discover_tests,
    measure_baseline,
    run_cell,
    run_group,
)
from .mutagen import (
    Mutant,
    Workspace,
    compose_mutants,
    default_registry,
    enumerate_all,
    load_registry,
    load_units,
    tree_hash,
)
from .store import OutcomeRecord, Store, UnitInfo

log = logging.getLogger(__name__)

CONFIG_FILE = "softentropy.ini"
SECTION = "softentropy"
MODES = ("matrix", "group")
ALL_GROUP = "all"
EXCEPT_PREFIX = "except:"


class RunError(Exception):
    pass


class SessionMismatch(RunError):
    """The store was created with different run settings."""


class Interrupted(RunError):
    pass


@dataclass(frozen=True)
class ProjectConfig:
    root: Path
    suite: SuiteConfig
    sources: tuple[str, ...] = ("**/*.toy",)
    operators: str | None = None
    exclude: tuple[str, ...] = ()

    def registry(self):
        if self.operators:
            return load_registry(self.root / self.operators)
        return default_registry()


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.replace("\n", ",").split(",") if v.strip())


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        return {}
    if not parser.has_section(SECTION):
        raise RunError(f"{path}: missing [{SECTION}] section")
    return dict(parser.items(SECTION))


def load_project_config(root, config_path=None, overrides: Mapping[str, object] | None = None) -> ProjectConfig:
    """Merge ``overrides`` over the config file over built-in defaults."""
    root = Path(root).resolve()
    values: dict[str, object] = dict(read_config_file(config_path or root / CONFIG_FILE))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        discover = values["discover_command"]
        run = values["run_command"]
    except KeyError as exc:
        raise RunError(f"configuration lacks {exc.args[0]}") from None
    env = values.get("env_allowlist")
    suite = SuiteConfig(
        str(discover),
        str(run),
        root,
        float(values.get("timeout_factor", DEFAULT_TIMEOUT_FACTOR)),
        float(values.get("min_timeout", DEFAULT_MIN_TIMEOUT)),
        DEFAULT_ENV_ALLOWLIST + _split_list(str(env)) if env else DEFAULT_ENV_ALLOWLIST,
    )
    sources = values.get("sources", "**/*.toy")
    exclude = values.get("exclude", "")
    return ProjectConfig(
        root,
        suite,
        _split_list(sources) if isinstance(sources, str) else tuple(sources),
        values.get("operators") or None,
        _split_list(exclude) if isinstance(exclude, str) else tuple(exclude),
    )


@dataclass(frozen=True)
class RunPlan:
    mode: str = "matrix"
    jobs: int = 1
    order: int = 1
    cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def snapshot(self) -> dict:
        return {"mode": self.mode, "order": self.order, "cap": self.cap, "seed": self.seed}


@dataclass
class RunSummary:
    tests: int
    mutants: int
    planned: int
    executed: int = 0
    group_planned: int = 0
    group_executed: int = 0
    reused_baseline: bool = False
    status_counts: dict = field(default_factory=dict)


def _excluded_names(project: ProjectConfig, db_path: Path) -> tuple[str, ...]:
    names = list(project.exclude)
    try:
        db_path.resolve().relative_to(project.root)
    except ValueError:
        return tuple(names)
    return tuple(names + [db_path.name, db_path.name + "-journal"])


def fingerprint(project: ProjectConfig, db_path) -> str:
    return tree_hash(project.root, _excluded_names(project, Path(db_path)))


def _unit_info(unit) -> UnitInfo:
    executable = None
    if unit.language_tag == "toy":
        try:
            executable = len(toylang.executable_lines(unit.text))
        except toylang.ToySyntaxError:
            executable = None
    return UnitInfo.of(unit, executable)


def plan_mutants(project: ProjectConfig, plan: RunPlan) -> tuple[list, list[Mutant]]:
    registry = project.registry()
    units = load_units(project.root, project.sources, registry)
    mutations = enumerate_all(units, registry)
    return units, compose_mutants(mutations, plan.order, plan.cap, plan.seed)


def group_keys(tests: Sequence[TestCase]) -> list[str]:
    keys = [ALL_GROUP] if tests else []
    if len(tests) > 1:
        keys += [EXCEPT_PREFIX + t.id for t in tests]
    return keys


def _group_selection(key: str, tests: Sequence[TestCase]):
    if key == ALL_GROUP:
        return list(tests), []
    left = key[len(EXCEPT_PREFIX):]
    return [t for t in tests if t.id != left], [t for t in tests if t.id == left]


def prepare_session(
    project: ProjectConfig,
    plan: RunPlan,
    db_path,
    mutants: Sequence[Mutant] | None = None,
    extra_mutants: Sequence[Mutant] = (),
) -> tuple[Store, list[TestCase], list[Mutant], bool]:
    """Open the store and settle the test and mutant lists.

    ``mutants`` replaces enumeration entirely; ``extra_mutants`` are appended
    to the enumerated list.
    """
    db_path = Path(db_path)
    snapshot = {"suite": project.suite.snapshot(), "plan": plan.snapshot(), "sources": list(project.sources)}
    if mutants is not None or extra_mutants:
        snapshot["custom_mutants"] = sorted(m.id for m in (mutants or ())) + sorted(m.id for m in extra_mutants)
    store = Store.open_or_create(db_path, fingerprint(project, db_path), snapshot, plan.mode)
    try:
        session = store.session
        if session.config_snapshot != snapshot:
            raise SessionMismatch(f"{db_path}: session was created with different settings")

        tests = store.tests()
        reused = bool(tests) and all(t.baseline_duration for t in tests)
        if not reused:
            tests = measure_baseline(project.suite, discover_tests(project.suite))
            store.set_tests(tests)

        units, enumerated = plan_mutants(project, plan)
        chosen = list(mutants) if mutants is not None else enumerated
        chosen += [m for m in extra_mutants if m.id not in {c.id for c in chosen}]
        store.set_mutants(chosen)
        store.set_units([_unit_info(u) for u in units])
    except BaseException:
        store.close()
        raise
    return store, tests, chosen, reused


def run_session(
    project: ProjectConfig,
    plan: RunPlan,
    db_path,
    mutants: Sequence[Mutant] | None = None,
    extra_mutants: Sequence[Mutant] = (),
    progress: Callable[[int, int], None] | None = None,
) -> RunSummary:
    """Execute every pending cell and return what was done.

    A ``KeyboardInterrupt`` stops scheduling, lets in-flight cells finish
    and record, and surfaces as :class:`Interrupted`.
    """
    store, tests, chosen, reused = prepare_session(project, plan, db_path, mutants, extra_mutants)
    with store:
        plan_cells = [(m.id, t.id) for m in chosen for t in tests]
        pending = store.pending_cells(plan_cells)
        keys = group_keys(tests) if plan.mode == "group" else []
        group_plan = [(m.id, k) for m in chosen for k in keys]
        group_pending = store.pending_cells(group_plan, table="group_outcomes")
        summary = RunSummary(len(tests), len(chosen), len(plan_cells), group_planned=len(group_plan),
                             reused_baseline=reused)

        by_id = {m.id: m for m in chosen}
        test_by_id = {t.id: t for t in tests}
        jobs: dict[str, tuple[list[TestCase], list[str]]] = {}
        for mid, tid in pending:
            jobs.setdefault(mid, ([], []))[0].append(test_by_id[tid])
        for mid, key in group_pending:
            jobs.setdefault(mid, ([], []))[1].append(key)
        order = [m.id for m in chosen if m.id in jobs]
        total = len(pending) + len(group_pending)
        log.info("%d of %d cells pending", total, len(plan_cells) + len(group_plan))
        if not order:
            return summary

        with tempfile.TemporaryDirectory(prefix="softentropy-") as tmp:
            workspaces: queue.Queue = queue.Queue()
            excluded = _excluded_names(project, Path(db_path))
            for i in range(min(plan.jobs, len(order))):
                workspaces.put(Workspace.copy_of(project.root, Path(tmp) / f"w{i}", excluded))

            def work(mid: str):
                ws = workspaces.get()
                try:
                    cell_tests, group_list = jobs[mid]
                    cells = run_cell(ws, by_id[mid], cell_tests, project.suite) if cell_tests else {}
                    groups = {}
                    for key in group_list:
                        inc, exc = _group_selection(key, tests)
                        groups[key] = run_group(ws, by_id[mid], inc, exc, project.suite)
                    return mid, cells, groups
                finally:
                    workspaces.put(ws)

            done = 0
            pool = ThreadPoolExecutor(max_workers=plan.jobs, thread_name_prefix="cell")
            remaining = iter(order)
            in_flight = set()
            try:
                for mid in remaining:
                    in_flight.add(pool.submit(work, mid))
                    if len(in_flight) >= plan.jobs * 2:
                        break
                while in_flight:
                    finished, in_flight = wait(in_flight, return_when=FIRST_COMPLETED)
                    for fut in finished:
                        mid, cells, groups = fut.result()
                        store.record_outcomes([
                            OutcomeRecord(mid, tid, o.status, o.duration) for tid, o in cells.items()
                        ])
                        if groups:
                            store.record_group_outcomes([
                                OutcomeRecord(mid, key, o.status, o.duration) for key, o in groups.items()
                            ])
                        summary.executed += len(cells)
                        summary.group_executed += len(groups)
                        for o in list(cells.values()) + list(groups.values()):
                            summary.status_counts[o.status.value] = summary.status_counts.get(o.status.value, 0) + 1
                        done += len(cells) + len(groups)
                        if progress:
                            progress(done, total)
                        nxt = next(remaining, None)
                        if nxt is not None:
                            in_flight.add(pool.submit(work, nxt))
            except KeyboardInterrupt:
                for fut in in_flight:
                    fut.cancel()
                pool.shutdown(wait=True, cancel_futures=True)
                raise Interrupted(f"interrupted after {done} of {total} cells") from None
            pool.shutdown(wait=True)
    return summary


def pristine_copy(project: ProjectConfig, dest) -> Workspace:
    return Workspace.copy_of(project.root, dest, project.exclude)


def with_timeout_factor(project: ProjectConfig, factor: float) -> ProjectConfig:
    return replace(project, suite=replace(project.suite, timeout_factor=factor))
