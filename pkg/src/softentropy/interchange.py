"""Versioned JSON interchange for sessions, and canonical JSON output.

A document carries tests, mutants, per-test outcomes and optionally group
outcomes, unit sizes and per-test line coverage. Documents holding only
``units`` and ``coverage`` merge into an existing session. The layout is
documented in ``docs/interchange.md``.
"""

from __future__ import annotations

import json
import math
from typing import Mapping

import jsonschema

from . import __version__
from .harness import Status, TestCase
from .mutagen import Mutant
from .store import CoverageRecord, IntegrityError, OutcomeRecord, Store, UnitInfo

SCHEMA_VERSION = 1
FLOAT_DIGITS = 12
TOOL = "softentropy"

_STATUS = [s.value for s in Status]
_ID = {"type": "string", "minLength": 1}

DOCUMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "provenance": {
            "type": "object",
            "required": ["tool"],
            "properties": {"tool": {"type": "string"}},
        },
        "mode": {"enum": ["matrix", "group"]},
        "tests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "selector": {"type": "string"},
                    "baseline_duration": {"type": ["number", "null"], "exclusiveMinimum": 0},
                },
            },
        },
        "mutants": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "order", "mutations"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "order": {"type": "integer", "minimum": 1},
                    "mutations": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["unit_path", "start", "end", "original", "replacement", "operator"],
                            "additionalProperties": False,
                            "properties": {
                                "unit_path": {"type": "string"},
                                "start": {"type": "integer", "minimum": 0},
                                "end": {"type": "integer", "minimum": 1},
                                "original": {"type": "string", "minLength": 1},
                                "replacement": {"type": "string"},
                                "operator": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
        "outcomes": {"type": "array", "items": {"$ref": "#/$defs/outcome"}},
        "group_outcomes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["mutant_id", "group", "status"],
                "additionalProperties": False,
                "properties": {
                    "mutant_id": _ID,
                    "group": _ID,
                    "status": {"enum": _STATUS},
                    "duration": {"type": ["number", "null"], "minimum": 0},
                },
            },
        },
        "units": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "char_count", "line_count"],
                "additionalProperties": False,
                "properties": {
                    "path": _ID,
                    "char_count": {"type": "integer", "minimum": 0},
                    "line_count": {"type": "integer", "minimum": 0},
                    "executable_lines": {"type": ["integer", "null"], "minimum": 0},
                },
            },
        },
        "coverage": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["test_id", "unit_path", "covered_lines"],
                "additionalProperties": False,
                "properties": {
                    "test_id": _ID,
                    "unit_path": _ID,
                    "covered_lines": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                },
            },
        },
    },
    "$defs": {
        "outcome": {
            "type": "object",
            "required": ["mutant_id", "test_id", "status"],
            "additionalProperties": False,
            "properties": {
                "mutant_id": _ID,
                "test_id": _ID,
                "status": {"enum": _STATUS},
                "duration": {"type": ["number", "null"], "minimum": 0},
            },
        }
    },
}


class SchemaError(ValueError):
    """Invalid document; ``location`` is a JSON-pointer-like path."""

    def __init__(self, message: str, location: str = "/"):
        super().__init__(f"{location}: {message}")
        self.location = location


# ---------------------------------------------------------------------------
# canonical JSON


def _round(obj):
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise ValueError("non-finite float in canonical JSON")
        return float(f"{obj:.{FLOAT_DIGITS}g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def canonical_dumps(obj) -> str:
    """Sorted keys, no insignificant whitespace, floats at 12 significant digits."""
    return json.dumps(_round(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# ---------------------------------------------------------------------------
# validation


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate(doc, known_tests=(), known_mutants=()) -> None:
    """Check structure and referential integrity.

    ``known_tests`` and ``known_mutants`` are ids already present in the
    target session, for documents that only add coverage.
    """
    validator = jsonschema.Draft202012Validator(DOCUMENT_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, _pointer(err.absolute_path))

    tests = [t["id"] for t in doc.get("tests", [])]
    mutants = [m["id"] for m in doc.get("mutants", [])]
    for name, ids in (("tests", tests), ("mutants", mutants)):
        seen = set()
        for i, x in enumerate(ids):
            if x in seen:
                raise SchemaError(f"duplicate id {x!r}", f"/{name}/{i}/id")
            seen.add(x)
    for i, m in enumerate(doc.get("mutants", [])):
        if m["order"] != len(m["mutations"]):
            raise SchemaError("order does not match the mutation count", f"/mutants/{i}/order")
        for j, mu in enumerate(m["mutations"]):
            if mu["end"] <= mu["start"]:
                raise SchemaError("empty span", f"/mutants/{i}/mutations/{j}")
    test_ids = set(tests) | set(known_tests)
    mutant_ids = set(mutants) | set(known_mutants)
    cells = set()
    for i, o in enumerate(doc.get("outcomes", [])):
        if o["test_id"] not in test_ids:
            raise SchemaError(f"unknown test id {o['test_id']!r}", f"/outcomes/{i}/test_id")
        if o["mutant_id"] not in mutant_ids:
            raise SchemaError(f"unknown mutant id {o['mutant_id']!r}", f"/outcomes/{i}/mutant_id")
        cell = (o["mutant_id"], o["test_id"])
        if cell in cells:
            raise SchemaError("duplicate cell", f"/outcomes/{i}")
        cells.add(cell)
    for i, o in enumerate(doc.get("group_outcomes", [])):
        if o["mutant_id"] not in mutant_ids:
            raise SchemaError(f"unknown mutant id {o['mutant_id']!r}", f"/group_outcomes/{i}/mutant_id")
    units = {u["path"]: u["line_count"] for u in doc.get("units", [])}
    for i, c in enumerate(doc.get("coverage", [])):
        if test_ids and c["test_id"] not in test_ids:
            raise SchemaError(f"unknown test id {c['test_id']!r}", f"/coverage/{i}/test_id")
        limit = units.get(c["unit_path"])
        if limit is not None and any(n > limit for n in c["covered_lines"]):
            raise SchemaError("line number beyond the unit's line count", f"/coverage/{i}/covered_lines")


def load_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from None
    return doc


# ---------------------------------------------------------------------------
# store <-> document


def _maybe(d: dict, key: str, value, keep: bool) -> dict:
    if keep and value is not None:
        d[key] = value
    return d


def export_document(store: Store, timings: bool = False) -> dict:
    """Everything in the session as an interchange document.

    Durations and timestamps vary between runs, so they are left out unless
    ``timings`` is set; the default export of a deterministic run is then
    byte-stable.
    """
    tests = store.tests()
    mutants = store.mutants()
    t_pos = {t.id: i for i, t in enumerate(tests)}
    m_pos = {m.id: i for i, m in enumerate(mutants)}
    outcomes = sorted(store.outcomes(), key=lambda r: (m_pos.get(r.mutant_id, -1), t_pos.get(r.test_id, -1)))
    groups = sorted(store.group_outcomes(), key=lambda r: (m_pos.get(r.mutant_id, -1), r.test_id))
    session = store.session
    doc = {
        "schema_version": SCHEMA_VERSION,
        "provenance": _maybe({"tool": TOOL, "version": __version__}, "created_at", session.created_at, timings),
        "mode": session.mode,
        "tests": [
            _maybe({"id": t.id, "selector": t.selector}, "baseline_duration", t.baseline_duration, timings)
            for t in tests
        ],
        "mutants": [m.to_json() for m in mutants],
        "outcomes": [
            _maybe({"mutant_id": r.mutant_id, "test_id": r.test_id, "status": Status(r.status).value},
                   "duration", r.duration, timings)
            for r in outcomes
        ],
    }
    if groups:
        doc["group_outcomes"] = [
            _maybe({"mutant_id": r.mutant_id, "group": r.test_id, "status": Status(r.status).value},
                   "duration", r.duration, timings)
            for r in groups
        ]
    units = store.units()
    if units:
        doc["units"] = [
            {k: v for k, v in vars(u).items() if v is not None} for u in units
        ]
    coverage = store.coverage()
    if coverage:
        doc["coverage"] = [
            {"test_id": c.test_id, "unit_path": c.unit_path, "covered_lines": sorted(c.covered_lines)}
            for c in coverage
        ]
    return doc


def import_document(store: Store, doc: Mapping) -> dict:
    """Merge ``doc`` into ``store``; returns counts of what was written.

    Test and mutant lists must match the session's if it already has them.
    """
    known_tests = [t.id for t in store.tests()]
    known_mutants = [m.id for m in store.mutants()]
    validate(doc, known_tests, known_mutants)
    counts = {"tests": 0, "mutants": 0, "outcomes": 0, "group_outcomes": 0, "coverage": 0}
    try:
        if "tests" in doc:
            tests = [
                TestCase(t["id"], t.get("selector", t["id"]), t.get("baseline_duration"))
                for t in doc["tests"]
            ]
            store.set_tests(tests)
            counts["tests"] = len(tests)
        if "mutants" in doc:
            mutants = [Mutant.from_json(m) for m in doc["mutants"]]
            store.set_mutants(mutants)
            counts["mutants"] = len(mutants)
        if doc.get("units"):
            store.set_units([UnitInfo(u["path"], u["char_count"], u["line_count"], u.get("executable_lines"))
                             for u in doc["units"]])
        if doc.get("outcomes"):
            store.record_outcomes([
                OutcomeRecord(o["mutant_id"], o["test_id"], Status(o["status"]), o.get("duration"))
                for o in doc["outcomes"]
            ])
            counts["outcomes"] = len(doc["outcomes"])
        if doc.get("group_outcomes"):
            store.record_group_outcomes([
                OutcomeRecord(o["mutant_id"], o["group"], Status(o["status"]), o.get("duration"))
                for o in doc["group_outcomes"]
            ])
            counts["group_outcomes"] = len(doc["group_outcomes"])
        if doc.get("coverage"):
            store.record_coverage([
                CoverageRecord(c["test_id"], c["unit_path"], frozenset(c["covered_lines"]))
                for c in doc["coverage"]
            ])
            counts["coverage"] = len(doc["coverage"])
    except IntegrityError as exc:
        raise SchemaError(str(exc)) from None
    if "mode" in doc and not known_tests:
        store.set_meta("mode", doc["mode"])
    return counts
