"""Test discovery and selective execution of arbitrary test commands.

Commands are templates. ``{include}`` and ``{exclude}`` expand to
comma-separated test selectors, ``{python}`` to the running interpreter and
``{workdir}`` to the workspace root. Each child runs in a new process group
with a scrubbed environment and is killed as a group on its deadline.
"""

from __future__ import annotations

import os
import shlex
import signal
import subprocess
import sys
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .mutagen import Mutant, Workspace, apply_mutant, revert_mutant

DEFAULT_TIMEOUT_FACTOR = 5.0
DEFAULT_MIN_TIMEOUT = 1.0
DEFAULT_ENV_ALLOWLIST = (
    "PATH",
    "HOME",
    "LANG",
    "LC_ALL",
    "PYTHONPATH",
    "SYSTEMROOT",
    "TMPDIR",
    "VIRTUAL_ENV",
)
SELECTOR_SEP = ","


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    TIMEOUT = "timeout"
    ERROR = "error"


class HarnessError(Exception):
    pass


class DiscoveryFailed(HarnessError):
    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class BrokenBaseline(HarnessError):
    def __init__(self, failing: Sequence[str]):
        super().__init__("baseline failures: " + ", ".join(failing))
        self.failing = list(failing)


@dataclass(frozen=True)
class TestCase:
    id: str
    selector: str
    baseline_duration: float | None = None

    __test__ = False  # keep pytest from collecting this


@dataclass(frozen=True)
class SuiteConfig:
    discover_command: str
    run_command: str
    workdir: Path = Path(".")
    timeout_factor: float = DEFAULT_TIMEOUT_FACTOR
    min_timeout: float = DEFAULT_MIN_TIMEOUT
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    output_limit: int = 4096

    def __post_init__(self):
        if not self.timeout_factor > 1:
            raise ValueError("timeout_factor must be > 1")
        if "{include}" not in self.run_command and "{exclude}" not in self.run_command:
            raise ValueError("run_command needs an {include} or {exclude} placeholder")

    def snapshot(self) -> dict:
        return {
            "discover_command": self.discover_command,
            "run_command": self.run_command,
            "timeout_factor": self.timeout_factor,
            "min_timeout": self.min_timeout,
        }


@dataclass(frozen=True)
class RunOutcome:
    status: Status
    duration: float
    detail: str = ""
    limit: float | None = None


@dataclass
class _Proc:
    returncode: int | None
    output: str
    duration: float
    timed_out: bool = False
    error: str | None = None


def _env(allowlist: Sequence[str], extra: Mapping[str, str] | None = None) -> dict:
    env = {k: os.environ[k] for k in allowlist if k in os.environ}
    env.update(extra or {})
    return env


def _render(template: str, cwd: Path, include=(), exclude=()) -> list[str]:
    values = {
        "python": sys.executable,
        "workdir": str(cwd),
        "include": SELECTOR_SEP.join(include),
        "exclude": SELECTOR_SEP.join(exclude),
    }
    return [arg.format(**values) for arg in shlex.split(template)]


def _execute(argv: list[str], cwd: Path, config: SuiteConfig, timeout: float | None) -> _Proc:
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            argv,
            cwd=cwd,
            env=_env(config.env_allowlist),
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            start_new_session=True,
        )
    except OSError as exc:
        return _Proc(None, "", time.perf_counter() - start, error=f"{type(exc).__name__}: {exc}")
    try:
        out, _ = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, _ = proc.communicate()
        timed_out = True
    duration = time.perf_counter() - start
    text = out.decode("utf-8", "replace")[-config.output_limit :]
    return _Proc(proc.returncode, text, duration, timed_out)


def discover_tests(config: SuiteConfig, cwd: Path | None = None) -> list[TestCase]:
    cwd = Path(cwd or config.workdir)
    proc = _execute(_render(config.discover_command, cwd), cwd, config, timeout=None)
    if proc.error:
        raise DiscoveryFailed(proc.error)
    if proc.returncode != 0:
        raise DiscoveryFailed(f"discover command exited {proc.returncode}", proc.output)
    seen = {}
    for line in proc.output.splitlines():
        line = line.strip()
        if line and line not in seen:
            seen[line] = TestCase(line, line)
    return list(seen.values())


def limit_for(config: SuiteConfig, tests: Sequence[TestCase]) -> float:
    total = sum(t.baseline_duration or 0.0 for t in tests)
    return max(config.timeout_factor * total, config.min_timeout)


def run_tests(
    config: SuiteConfig,
    cwd: Path,
    include: Sequence[TestCase],
    exclude: Sequence[TestCase] = (),
    limit: float | None = None,
) -> RunOutcome:
    """One child process running the selected tests together."""
    argv = _render(config.run_command, cwd, [t.selector for t in include], [t.selector for t in exclude])
    proc = _execute(argv, cwd, config, timeout=limit)
    if proc.error:
        return RunOutcome(Status.ERROR, proc.duration, proc.error, limit)
    if proc.timed_out or (limit is not None and proc.duration >= limit):
        # a killed child may report just under the deadline; the status is what counts
        return RunOutcome(Status.TIMEOUT, max(proc.duration, limit), proc.output, limit)
    status = Status.PASS if proc.returncode == 0 else Status.FAIL
    return RunOutcome(status, proc.duration, proc.output, limit)


def measure_baseline(config: SuiteConfig, tests: Sequence[TestCase], cwd: Path | None = None) -> list[TestCase]:
    """Run each test alone on the pristine tree and record its duration."""
    cwd = Path(cwd or config.workdir)
    measured, failing = [], []
    for test in tests:
        outcome = run_tests(config, cwd, [test])
        if outcome.status is not Status.PASS:
            failing.append(test.id)
        measured.append(replace(test, baseline_duration=max(outcome.duration, 1e-6)))
    if failing:
        raise BrokenBaseline(failing)
    return measured


def run_cell(
    workspace: Workspace,
    mutant: Mutant | None,
    include: Sequence[TestCase],
    config: SuiteConfig,
) -> dict[str, RunOutcome]:
    """Run each included test alone against ``workspace`` with ``mutant`` applied.

    The workspace is reverted before returning, whatever happens. Without a
    mutant this replays the baseline, and any non-pass is reported as
    ``ERROR`` because the pristine tree is known to pass.
    """
    if not include:
        raise ValueError("include must not be empty")
    if mutant is not None:
        apply_mutant(workspace, mutant)
    try:
        results = {}
        for test in include:
            outcome = run_tests(config, workspace.root, [test], limit=limit_for(config, [test]))
            if mutant is None and outcome.status is not Status.PASS:
                outcome = RunOutcome(Status.ERROR, outcome.duration, "flaky: " + outcome.detail, outcome.limit)
            results[test.id] = outcome
        return results
    finally:
        if mutant is not None:
            revert_mutant(workspace)


def run_group(
    workspace: Workspace,
    mutant: Mutant | None,
    include: Sequence[TestCase],
    exclude: Sequence[TestCase],
    config: SuiteConfig,
) -> RunOutcome:
    """Run ``include`` in one child; the deadline covers the whole group."""
    if not include:
        raise ValueError("include must not be empty")
    if mutant is not None:
        apply_mutant(workspace, mutant)
    try:
        return run_tests(config, workspace.root, include, exclude, limit=limit_for(config, include))
    finally:
        if mutant is not None:
            revert_mutant(workspace)
