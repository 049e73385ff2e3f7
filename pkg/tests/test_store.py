import os
import shutil
import signal
import sqlite3
import subprocess
import sys
import time

import pytest

from softentropy.harness import Status, TestCase
from softentropy.mutagen import Mutant, Mutation
from softentropy.store import (
    CorruptStore,
    CoverageRecord,
    FingerprintMismatch,
    IntegrityError,
    OutcomeRecord,
    UnitInfo,
    open_or_create,
)


def mutants(n):
    return [Mutant.of([Mutation("f.toy", i, i + 1, "-", "arith_swap", "+")]) for i in range(n)]


def test_fresh_store_is_empty(tmp_path):
    with open_or_create(tmp_path / "s.db", "fp", config_snapshot={"a": 1}) as store:
        s = store.session
        assert s.project_fingerprint == "fp" and s.config_snapshot == {"a": 1}
        assert store.tests() == [] and store.mutants() == [] and store.count_outcomes() == 0


def test_reopen_keeps_session_and_counts(tmp_path):
    path = tmp_path / "s.db"
    with open_or_create(path, "fp") as store:
        sid = store.session.session_id
        store.set_tests([TestCase("t1", "t1", 0.5)])
        store.set_mutants(mutants(2))
        store.record_outcome(OutcomeRecord(mutants(2)[0].id, "t1", Status.PASS, 0.1))
    with open_or_create(path, "fp") as store:
        assert store.session.session_id == sid
        assert store.count_outcomes() == 1
        assert [t.id for t in store.tests()] == ["t1"]
        assert store.mutants() == mutants(2)


def test_fingerprint_mismatch(tmp_path):
    path = tmp_path / "s.db"
    open_or_create(path, "fp").close()
    with pytest.raises(FingerprintMismatch):
        open_or_create(path, "other")
    open_or_create(path).close()  # analysis commands skip the check


def test_corrupt_and_foreign_files(tmp_path):
    junk = tmp_path / "junk.db"
    junk.write_bytes(b"not a database at all" * 100)
    with pytest.raises(CorruptStore):
        open_or_create(junk)
    foreign = tmp_path / "foreign.db"
    conn = sqlite3.connect(foreign)
    conn.execute("CREATE TABLE x (y)")
    conn.commit()
    conn.close()
    with pytest.raises(CorruptStore):
        open_or_create(foreign)


def test_duplicate_record_is_noop_and_conflict_raises(tmp_path):
    with open_or_create(tmp_path / "s.db") as store:
        rec = OutcomeRecord("m", "t", Status.PASS, 0.1)
        store.record_outcome(rec)
        store.record_outcome(rec)
        assert store.count_outcomes() == 1
        with pytest.raises(IntegrityError):
            store.record_outcome(OutcomeRecord("m", "t", Status.FAIL, 0.1))
        assert store.outcomes()[0].status is Status.PASS


def test_conflicting_batch_writes_nothing(tmp_path):
    with open_or_create(tmp_path / "s.db") as store:
        store.record_outcome(OutcomeRecord("m", "t", Status.PASS))
        with pytest.raises(IntegrityError):
            store.record_outcomes([OutcomeRecord("m2", "t", Status.PASS), OutcomeRecord("m", "t", Status.FAIL)])
        assert store.count_outcomes() == 1


def test_ten_thousand_records(tmp_path):
    with open_or_create(tmp_path / "s.db") as store:
        recs = [OutcomeRecord(f"m{i}", f"t{i % 7}", Status.PASS) for i in range(10_000)]
        store.record_outcomes(recs)
        assert store.count_outcomes() == 10_000


def test_pending_cells(tmp_path):
    plan = [(f"m{i}", t) for i in range(3) for t in ("a", "b")]
    with open_or_create(tmp_path / "s.db") as store:
        assert store.pending_cells(plan) == plan
        store.record_outcomes([OutcomeRecord("m1", "a", Status.PASS), OutcomeRecord("m0", "b", Status.FAIL)])
        assert store.pending_cells(plan) == [c for c in plan if c not in {("m1", "a"), ("m0", "b")}]
        store.record_outcomes([OutcomeRecord(m, t, Status.PASS) for m, t in store.pending_cells(plan)])
        assert store.pending_cells(plan) == []


def test_test_and_mutant_redeclaration(tmp_path):
    with open_or_create(tmp_path / "s.db") as store:
        store.set_tests([TestCase("a", "a"), TestCase("b", "b")])
        store.set_tests([TestCase("a", "a", 0.2), TestCase("b", "b", 0.3)])
        assert [t.baseline_duration for t in store.tests()] == [0.2, 0.3]
        with pytest.raises(IntegrityError):
            store.set_tests([TestCase("b", "b")])
        store.set_mutants(mutants(3))
        with pytest.raises(IntegrityError):
            store.set_mutants(mutants(2))


def test_coverage_validation(tmp_path):
    with open_or_create(tmp_path / "s.db") as store:
        store.set_tests([TestCase("a", "a")])
        store.set_units([UnitInfo("f.toy", 100, 10, 8)])
        store.record_coverage([CoverageRecord("a", "f.toy", frozenset({1, 10}))])
        assert store.coverage()[0].covered_lines == {1, 10}
        with pytest.raises(IntegrityError):
            store.record_coverage([CoverageRecord("a", "f.toy", frozenset({11}))])
        with pytest.raises(IntegrityError):
            store.record_coverage([CoverageRecord("zz", "f.toy", frozenset({1}))])


def test_single_file_relocation(tmp_path):
    path = tmp_path / "s.db"
    with open_or_create(path, "fp") as store:
        store.record_outcome(OutcomeRecord("m", "t", Status.TIMEOUT, 1.0))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["s.db"]
    moved = tmp_path / "elsewhere" / "copy.db"
    moved.parent.mkdir()
    shutil.copy(path, moved)
    with open_or_create(moved, "fp") as store:
        assert store.outcomes()[0].status is Status.TIMEOUT


WRITER = """
import sys
from softentropy.harness import Status
from softentropy.store import OutcomeRecord, open_or_create
store = open_or_create(sys.argv[1])
i = 0
while True:
    store.record_outcome(OutcomeRecord(f"m{i}", "t", Status.PASS))
    print(i, flush=True)
    i += 1
"""


def test_acknowledged_records_survive_hard_kill(tmp_path):
    path = tmp_path / "s.db"
    open_or_create(path).close()
    proc = subprocess.Popen([sys.executable, "-c", WRITER, str(path)], stdout=subprocess.PIPE, text=True)
    acked = -1
    deadline = time.time() + 30
    while acked < 50 and time.time() < deadline:
        acked = int(proc.stdout.readline())
    os.kill(proc.pid, signal.SIGKILL)
    proc.wait()
    with open_or_create(path) as store:
        ids = {r.mutant_id for r in store.outcomes()}
    assert {f"m{i}" for i in range(acked + 1)} <= ids
