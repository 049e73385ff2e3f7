"""In-memory kill matrix and survivor-set queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .kernels import ERROR, FAIL, MISSING, PASS, TIMEOUT

STATUS_CODES = {"pass": PASS, "fail": FAIL, "timeout": TIMEOUT, "error": ERROR, "missing": MISSING}
CODE_NAMES = {v: k for k, v in STATUS_CODES.items()}


class IncompleteMatrix(Exception):
    def __init__(self, cells: Sequence[tuple[str, str]]):
        shown = ", ".join(f"({m}, {t})" for m, t in list(cells)[:5])
        more = "" if len(cells) <= 5 else f" and {len(cells) - 5} more"
        super().__init__(f"{len(cells)} unusable cells: {shown}{more}")
        self.cells = list(cells)


def _code(status) -> int:
    value = getattr(status, "value", status)
    return STATUS_CODES[str(value).lower()]


@dataclass(frozen=True, eq=False)
class KillMatrix:
    """Per-test outcome grid; rows are mutants, columns are tests."""

    tests: tuple[str, ...]
    mutants: tuple[str, ...]
    codes: np.ndarray

    def __post_init__(self):
        if self.codes.shape != (len(self.mutants), len(self.tests)):
            raise ValueError("codes shape does not match declared ids")
        if len(set(self.tests)) != len(self.tests) or len(set(self.mutants)) != len(self.mutants):
            raise ValueError("duplicate ids")
        self.codes.setflags(write=False)

    @classmethod
    def from_cells(
        cls, tests: Sequence[str], mutants: Sequence[str], cells: Mapping[tuple[str, str], object]
    ) -> "KillMatrix":
        t_index = {t: j for j, t in enumerate(tests)}
        m_index = {m: i for i, m in enumerate(mutants)}
        codes = np.full((len(mutants), len(tests)), MISSING, dtype=np.int8)
        for (m, t), status in cells.items():
            if m not in m_index or t not in t_index:
                raise KeyError(f"cell ({m}, {t}) refers to an undeclared id")
            codes[m_index[m], t_index[t]] = _code(status)
        return cls(tuple(tests), tuple(mutants), codes)

    @classmethod
    def from_records(cls, tests: Sequence[str], mutants: Sequence[str], records: Iterable) -> "KillMatrix":
        return cls.from_cells(tests, mutants, {(r.mutant_id, r.test_id): r.status for r in records})

    @classmethod
    def from_rows(cls, tests: Sequence[str], rows: Mapping[str, Sequence[str]]) -> "KillMatrix":
        """Build from ``{mutant_id: [status per test]}``; handy in tests."""
        mutants = list(rows)
        codes = np.array([[_code(s) for s in rows[m]] for m in mutants], dtype=np.int8)
        return cls(tuple(tests), tuple(mutants), codes.reshape(len(mutants), len(tests)))

    def status(self, mutant: str, test: str) -> str:
        return CODE_NAMES[int(self.codes[self.mutants.index(mutant), self.tests.index(test)])]

    def column_indices(self, subset: Iterable[str]) -> np.ndarray:
        index = {t: j for j, t in enumerate(self.tests)}
        try:
            return np.array(sorted(index[t] for t in set(subset)), dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"unknown test {exc.args[0]!r}") from None

    def require_complete(self, cols: np.ndarray | None = None) -> None:
        sub = self.codes if cols is None else self.codes[:, cols]
        bad = np.argwhere((sub == MISSING) | (sub == ERROR))
        if len(bad):
            col_ids = np.arange(len(self.tests)) if cols is None else cols
            raise IncompleteMatrix([(self.mutants[i], self.tests[col_ids[j]]) for i, j in bad])

    def without(self, mutant_ids: Iterable[str]) -> "KillMatrix":
        drop = set(mutant_ids)
        keep = [i for i, m in enumerate(self.mutants) if m not in drop]
        return KillMatrix(self.tests, tuple(self.mutants[i] for i in keep), self.codes[keep].copy())


@dataclass(frozen=True)
class SurvivorSet:
    confirmed: frozenset
    uncertain: frozenset

    @property
    def w_lower(self) -> int:
        return len(self.confirmed)

    @property
    def w_upper(self) -> int:
        return len(self.confirmed) + len(self.uncertain)


def survivors(matrix: KillMatrix, subset: Iterable[str]) -> SurvivorSet:
    """Mutants not failed by any test in ``subset``.

    Confirmed survivors pass every test in the subset; uncertain ones have no
    fail but at least one timeout. The empty subset confirms every mutant.
    """
    cols = matrix.column_indices(subset)
    matrix.require_complete(cols)
    sub = matrix.codes[:, cols]
    killed = (sub == FAIL).any(axis=1)
    confirmed = (sub == PASS).all(axis=1)
    uncertain = ~killed & ~confirmed
    ids = np.array(matrix.mutants, dtype=object)
    return SurvivorSet(frozenset(ids[confirmed]), frozenset(ids[uncertain]))


def killed(matrix: KillMatrix, subset: Iterable[str]) -> frozenset:
    cols = matrix.column_indices(subset)
    matrix.require_complete(cols)
    hit = (matrix.codes[:, cols] == FAIL).any(axis=1)
    return frozenset(np.array(matrix.mutants, dtype=object)[hit])


def uniquely_killed(matrix: KillMatrix, test_id: str) -> frozenset:
    """Mutants failed by ``test_id`` and passed by every other test.

    A timeout on another test leaves "only by this test" unverifiable, so such
    mutants are excluded.
    """
    return unique_kill_sets(matrix)[test_id]


def unique_kill_sets(matrix: KillMatrix) -> dict[str, frozenset]:
    matrix.require_complete()
    killer = kernels.unique_killer(matrix.codes)
    ids = np.array(matrix.mutants, dtype=object)
    return {t: frozenset(ids[killer == j]) for j, t in enumerate(matrix.tests)}


def killed_alone(matrix: KillMatrix, test_id: str) -> frozenset:
    """Mutants failed by ``test_id`` regardless of the other tests."""
    return killed_alone_sets(matrix)[test_id]


def killed_alone_sets(matrix: KillMatrix) -> dict[str, frozenset]:
    matrix.require_complete()
    ids = np.array(matrix.mutants, dtype=object)
    return {t: frozenset(ids[matrix.codes[:, j] == FAIL]) for j, t in enumerate(matrix.tests)}


@dataclass(frozen=True)
class GroupView:
    only: SurvivorSet
    without: SurvivorSet


def group_views(matrix: KillMatrix) -> dict[str, GroupView]:
    """Survivors with only each test enabled and with all but that test."""
    matrix.require_complete()
    everyone = set(matrix.tests)
    return {
        t: GroupView(survivors(matrix, {t}), survivors(matrix, everyone - {t}))
        for t in matrix.tests
    }


def prefix_counts(matrix: KillMatrix, ordering: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """``(W_lower, W_upper)`` for every prefix ``T_0 .. T_m`` of ``ordering``."""
    if len(set(ordering)) != len(ordering):
        raise ValueError("ordering repeats a test")
    index = {t: j for j, t in enumerate(matrix.tests)}
    try:
        order = np.array([index[t] for t in ordering], dtype=np.int64)
    except KeyError as exc:
        raise KeyError(f"unknown test {exc.args[0]!r}") from None
    matrix.require_complete(np.sort(order))
    return kernels.prefix_survivor_counts(matrix.codes, order)


def group_status(matrix: KillMatrix, subset: Iterable[str]) -> dict[str, str]:
    """Status a single run of ``subset`` would report, derived per mutant.

    Any fail wins, then any timeout, else pass. This is what a grouped run
    shows when tests are deterministic and independent.
    """
    surv = survivors(matrix, subset)
    out = {}
    for m in matrix.mutants:
        out[m] = "pass" if m in surv.confirmed else "timeout" if m in surv.uncertain else "fail"
    return out
