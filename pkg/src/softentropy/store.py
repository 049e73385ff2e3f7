"""Single-file session store on SQLite.

The file carries a magic ``application_id`` and a schema ``user_version``.
Rollback-journal mode with ``synchronous=FULL`` keeps everything in one file
once closed and makes every acknowledged write durable. One connection, guarded
by a lock, is the only writer.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .harness import Status, TestCase
from .mutagen import Mutant, SourceUnit

MAGIC = 0x53454E54  # "SENT"
SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE tests (
    ord INTEGER NOT NULL, id TEXT PRIMARY KEY, selector TEXT NOT NULL, baseline_duration REAL
);
CREATE TABLE mutants (ord INTEGER NOT NULL, id TEXT PRIMARY KEY, k INTEGER NOT NULL, mutations TEXT NOT NULL);
CREATE TABLE units (
    path TEXT PRIMARY KEY, char_count INTEGER NOT NULL, line_count INTEGER NOT NULL,
    executable_lines INTEGER
);
CREATE TABLE outcomes (
    mutant_id TEXT NOT NULL, test_id TEXT NOT NULL, status TEXT NOT NULL, duration REAL,
    PRIMARY KEY (mutant_id, test_id)
);
CREATE TABLE group_outcomes (
    mutant_id TEXT NOT NULL, group_key TEXT NOT NULL, status TEXT NOT NULL, duration REAL,
    PRIMARY KEY (mutant_id, group_key)
);
CREATE TABLE coverage (
    test_id TEXT NOT NULL, unit_path TEXT NOT NULL, lines TEXT NOT NULL,
    PRIMARY KEY (test_id, unit_path)
);
"""


class StoreError(Exception):
    pass


class FingerprintMismatch(StoreError):
    pass


class CorruptStore(StoreError):
    pass


class IntegrityError(StoreError):
    pass


@dataclass(frozen=True)
class Session:
    session_id: str
    project_fingerprint: str
    config_snapshot: dict
    created_at: str
    updated_at: str
    mode: str


@dataclass(frozen=True)
class OutcomeRecord:
    mutant_id: str
    test_id: str
    status: Status
    duration: float | None = None


@dataclass(frozen=True)
class CoverageRecord:
    test_id: str
    unit_path: str
    covered_lines: frozenset


@dataclass(frozen=True)
class UnitInfo:
    path: str
    char_count: int
    line_count: int
    executable_lines: int | None = None

    @classmethod
    def of(cls, unit: SourceUnit, executable_lines: int | None = None) -> "UnitInfo":
        return cls(unit.path, unit.char_count, unit.line_count, executable_lines)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Store:
    def __init__(self, path, conn: sqlite3.Connection):
        self.path = Path(path)
        self._conn = conn
        self._lock = threading.Lock()

    # -- lifecycle -----------------------------------------------------------

    @classmethod
    def open_or_create(
        cls,
        path,
        fingerprint: str | None = None,
        config_snapshot: dict | None = None,
        mode: str = "matrix",
        created_at: str | None = None,
    ) -> "Store":
        """Open an existing store or create a fresh one.

        ``fingerprint=None`` opens without checking the project tree, which is
        what analysis-only commands do.
        """
        path = Path(path)
        fresh = not path.exists() or path.stat().st_size == 0
        try:
            conn = sqlite3.connect(path, check_same_thread=False, isolation_level=None)
            conn.execute("PRAGMA journal_mode=DELETE")
            conn.execute("PRAGMA synchronous=FULL")
            if fresh:
                cls._initialise(conn, fingerprint, config_snapshot, mode, created_at)
            app_id = conn.execute("PRAGMA application_id").fetchone()[0]
            version = conn.execute("PRAGMA user_version").fetchone()[0]
        except sqlite3.DatabaseError as exc:
            raise CorruptStore(f"{path}: {exc}") from None
        if app_id != MAGIC:
            conn.close()
            raise CorruptStore(f"{path}: not a session store")
        if version != SCHEMA_VERSION:
            conn.close()
            raise CorruptStore(f"{path}: unsupported schema version {version}")
        store = cls(path, conn)
        if fingerprint is not None and store.session.project_fingerprint != fingerprint:
            conn.close()
            raise FingerprintMismatch(f"{path}: project tree changed since the session was created")
        return store

    @staticmethod
    def _initialise(conn, fingerprint, config_snapshot, mode, created_at):
        now = created_at or _now()
        conn.executescript("BEGIN;" + _SCHEMA)
        meta = {
            "session_id": uuid.uuid4().hex,
            "project_fingerprint": fingerprint or "",
            "config_snapshot": json.dumps(config_snapshot or {}, sort_keys=True),
            "created_at": now,
            "updated_at": now,
            "mode": mode,
        }
        conn.executemany("INSERT INTO meta VALUES (?, ?)", meta.items())
        conn.execute(f"PRAGMA application_id={MAGIC}")
        conn.execute(f"PRAGMA user_version={SCHEMA_VERSION}")
        conn.execute("COMMIT")

    def close(self) -> None:
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- helpers ---------------------------------------------------------------

    def _write(self, sql: str, rows: Iterable[tuple] = ((),), many: bool = True):
        with self._lock:
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                if many:
                    self._conn.executemany(sql, rows)
                else:
                    self._conn.execute(sql, rows)
                self._conn.execute("UPDATE meta SET value=? WHERE key='updated_at'", (_now(),))
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            self._conn.execute("COMMIT")

    def _query(self, sql: str, args: tuple = ()):
        with self._lock:
            return self._conn.execute(sql, args).fetchall()

    @property
    def session(self) -> Session:
        meta = dict(self._query("SELECT key, value FROM meta"))
        return Session(
            meta["session_id"],
            meta["project_fingerprint"],
            json.loads(meta["config_snapshot"]),
            meta["created_at"],
            meta["updated_at"],
            meta["mode"],
        )

    def set_meta(self, key: str, value: str) -> None:
        self._write("INSERT OR REPLACE INTO meta VALUES (?, ?)", (key, value), many=False)

    # -- declarations ------------------------------------------------------------

    def set_tests(self, tests: Sequence[TestCase]) -> None:
        """Declare the ordered test list; a re-declaration must match."""
        existing = self.tests()
        if existing:
            if [t.id for t in existing] != [t.id for t in tests]:
                raise IntegrityError("test list differs from the stored session")
            updates = [
                (t.baseline_duration, t.id)
                for t, old in zip(tests, existing)
                if old.baseline_duration is None and t.baseline_duration is not None
            ]
            if updates:
                self._write("UPDATE tests SET baseline_duration=? WHERE id=?", updates)
            return
        self._write(
            "INSERT INTO tests VALUES (?, ?, ?, ?)",
            [(i, t.id, t.selector, t.baseline_duration) for i, t in enumerate(tests)],
        )

    def tests(self) -> list[TestCase]:
        rows = self._query("SELECT id, selector, baseline_duration FROM tests ORDER BY ord")
        return [TestCase(*r) for r in rows]

    def set_mutants(self, mutants: Sequence[Mutant]) -> None:
        existing = [m.id for m in self.mutants()]
        if existing:
            if existing != [m.id for m in mutants]:
                raise IntegrityError("mutant list differs from the stored session")
            return
        self._write(
            "INSERT INTO mutants VALUES (?, ?, ?, ?)",
            [
                (i, m.id, m.order, json.dumps([x.to_json() for x in m.mutations], sort_keys=True))
                for i, m in enumerate(mutants)
            ],
        )

    def mutants(self) -> list[Mutant]:
        rows = self._query("SELECT id, mutations FROM mutants ORDER BY ord")
        return [Mutant.from_json({"id": mid, "mutations": json.loads(blob)}) for mid, blob in rows]

    def set_units(self, units: Sequence[UnitInfo]) -> None:
        self._write(
            "INSERT OR REPLACE INTO units VALUES (?, ?, ?, ?)",
            [(u.path, u.char_count, u.line_count, u.executable_lines) for u in units],
        )

    def units(self) -> list[UnitInfo]:
        return [UnitInfo(*r) for r in self._query("SELECT * FROM units ORDER BY path")]

    # -- outcomes ------------------------------------------------------------------

    def record_outcome(self, record: OutcomeRecord) -> None:
        self.record_outcomes([record])

    def record_outcomes(self, records: Sequence[OutcomeRecord], table: str = "outcomes") -> None:
        """Durably store records; identical duplicates are no-ops.

        A record whose cell already holds a different status raises
        IntegrityError and nothing from the batch is written.
        """
        key = "test_id" if table == "outcomes" else "group_key"
        with self._lock:
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                for rec in records:
                    status = Status(rec.status).value
                    row = self._conn.execute(
                        f"SELECT status FROM {table} WHERE mutant_id=? AND {key}=?",
                        (rec.mutant_id, rec.test_id),
                    ).fetchone()
                    if row is None:
                        self._conn.execute(
                            f"INSERT INTO {table} VALUES (?, ?, ?, ?)",
                            (rec.mutant_id, rec.test_id, status, rec.duration),
                        )
                    elif row[0] != status:
                        raise IntegrityError(
                            f"cell ({rec.mutant_id}, {rec.test_id}) already {row[0]}, got {status}"
                        )
                self._conn.execute("UPDATE meta SET value=? WHERE key='updated_at'", (_now(),))
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
            self._conn.execute("COMMIT")

    def record_group_outcomes(self, records: Sequence[OutcomeRecord]) -> None:
        """Like record_outcomes, with ``test_id`` holding the group key."""
        self.record_outcomes(records, table="group_outcomes")

    def outcomes(self) -> list[OutcomeRecord]:
        rows = self._query("SELECT mutant_id, test_id, status, duration FROM outcomes")
        return [OutcomeRecord(m, t, Status(s), d) for m, t, s, d in rows]

    def group_outcomes(self) -> list[OutcomeRecord]:
        rows = self._query("SELECT mutant_id, group_key, status, duration FROM group_outcomes")
        return [OutcomeRecord(m, g, Status(s), d) for m, g, s, d in rows]

    def count_outcomes(self) -> int:
        return self._query("SELECT COUNT(*) FROM outcomes")[0][0]

    def pending_cells(self, plan: Sequence[tuple[str, str]], table: str = "outcomes") -> list[tuple[str, str]]:
        """``plan`` minus the recorded cells, in plan order."""
        key = "test_id" if table == "outcomes" else "group_key"
        done = set(self._query(f"SELECT mutant_id, {key} FROM {table}"))
        return [cell for cell in plan if tuple(cell) not in done]

    # -- coverage --------------------------------------------------------------------

    def record_coverage(self, records: Sequence[CoverageRecord]) -> None:
        line_counts = {u.path: u.line_count for u in self.units()}
        known_tests = {t.id for t in self.tests()}
        for rec in records:
            if known_tests and rec.test_id not in known_tests:
                raise IntegrityError(f"coverage for unknown test {rec.test_id!r}")
            limit = line_counts.get(rec.unit_path)
            if limit is not None and any(not 1 <= n <= limit for n in rec.covered_lines):
                raise IntegrityError(f"coverage line out of range in {rec.unit_path}")
        self._write(
            "INSERT OR REPLACE INTO coverage VALUES (?, ?, ?)",
            [(r.test_id, r.unit_path, json.dumps(sorted(r.covered_lines))) for r in records],
        )

    def coverage(self) -> list[CoverageRecord]:
        rows = self._query("SELECT test_id, unit_path, lines FROM coverage ORDER BY test_id, unit_path")
        return [CoverageRecord(t, u, frozenset(json.loads(lines))) for t, u, lines in rows]


def open_or_create(path, fingerprint: str | None = None, **kwargs) -> Store:
    return Store.open_or_create(path, fingerprint, **kwargs)
