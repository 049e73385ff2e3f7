"""Regenerate the fixture's hand-auditable kill table.

Runs every order-1 mutant against every fixture test in-process (no harness,
no subprocesses, no store) with a step budget that flags non-termination, and
writes ``expected_outcomes.csv`` next to the fixture.

    python tools/audit_fixture.py [--check]
"""

import argparse
import csv
import io
import sys
import tempfile
from pathlib import Path

from softentropy import mutagen, toylang

FIXTURE = Path(__file__).resolve().parents[1] / "src/softentropy/fixtures/triangle"
MAX_STEPS = 100_000


def audit():
    units = mutagen.load_units(FIXTURE, ["src/*.toy"])
    texts = {u.path: u.text for u in units}
    mutants = mutagen.compose_mutants(mutagen.enumerate_all(units), max_order=1, cap=10_000)
    tests = [t[0] for t in toylang.ToyProject.load(FIXTURE).tests]
    rows = []
    with tempfile.TemporaryDirectory() as tmp:
        ws = mutagen.Workspace.copy_of(FIXTURE, Path(tmp) / "ws")
        for mutant in mutants:
            (mut,) = mutant.mutations
            line = texts[mut.unit_path][: mut.start].count("\n") + 1
            mutagen.apply_mutant(ws, mutant)
            try:
                project = toylang.ToyProject.load(ws.root)
                killed_by = []
                for name in tests:
                    ok, _, _ = project.run(name, max_steps=MAX_STEPS)
                    if not ok:
                        killed_by.append(name)
            except toylang.StepLimitExceeded:
                killed_by = ["<non-terminating>"]
            finally:
                mutagen.revert_mutant(ws)
            rows.append(
                {
                    "mutant_id": mutant.id,
                    "unit": mut.unit_path,
                    "line": line,
                    "change": f"{mut.original} -> {mut.replacement}",
                    "killed_by": ";".join(killed_by),
                    "status": "killed" if killed_by else "survived",
                }
            )
    return tests, rows


def render(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, ["mutant_id", "unit", "line", "change", "killed_by", "status"], lineterminator="\n"
    )
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="compare against the shipped table")
    args = ap.parse_args()
    tests, rows = audit()
    text = render(rows)
    target = FIXTURE / "expected_outcomes.csv"
    if args.check:
        same = target.read_text() == text
        print("table up to date" if same else "table differs")
        return 0 if same else 1
    target.write_text(text)
    killed = sum(r["status"] == "killed" for r in rows)
    print(f"{len(rows)} mutants, {killed} killed, score {killed / len(rows):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
