"""Assemble metric reports, curve tables and lab verdicts from stored data."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

from . import entropy as ent
from .graphlab import build_graph, component_stats, surviving_subgraph
from .matrix import KillMatrix, group_status, group_views, killed_alone_sets, survivors
from .runner import ALL_GROUP, EXCEPT_PREFIX
from .spacelab import (
    LabConfig,
    enumerate_feasible,
    defect_fraction,
    exact_entropy,
    nested_entropy_trajectory,
    predicate_kill_matrix,
    resolve_distribution,
)
from .store import Store

ORDERINGS = ("declaration", "reverse", "impact", "coverage")
LOG_TOL = 1e-12


class ReportError(Exception):
    pass


def matrix_from_store(store: Store) -> KillMatrix:
    tests = [t.id for t in store.tests()]
    mutants = [m.id for m in store.mutants()]
    return KillMatrix.from_records(tests, mutants, store.outcomes())


def _s(w: int, base):
    return str(ent.ZERO_SURVIVORS) if w == 0 else ent.format_float(ent.log(w, base))


def coverage_fractions(store: Store) -> dict[str, float]:
    """Covered lines over coverable lines, per test with any coverage."""
    units = store.units()
    total = sum(u.executable_lines if u.executable_lines is not None else u.line_count for u in units)
    covered: dict[str, int] = {}
    for rec in store.coverage():
        covered[rec.test_id] = covered.get(rec.test_id, 0) + len(rec.covered_lines)
    if not total:
        return {}
    return {t: n / total for t, n in covered.items()}


def resolve_ordering(spec: str, matrix: KillMatrix, coverage: dict[str, float] | None = None) -> list[str]:
    tests = list(matrix.tests)
    if spec == "declaration":
        return tests
    if spec == "reverse":
        return tests[::-1]
    if spec == "impact":
        sizes = {t: len(k) for t, k in killed_alone_sets(matrix).items()}
        return sorted(tests, key=lambda t: -sizes[t])
    if spec == "coverage":
        coverage = coverage or {}
        missing = [t for t in tests if t not in coverage]
        if missing:
            raise ent.MissingCoverage(missing)
        return sorted(tests, key=lambda t: -coverage[t])
    if spec.startswith("file:"):
        lines = Path(spec[5:]).read_text(encoding="utf-8").split()
        if sorted(lines) != sorted(tests):
            raise ReportError("ordering file must list every test exactly once")
        return lines
    raise ReportError(f"unknown ordering {spec!r}; use {', '.join(ORDERINGS)} or file:PATH")


def _profile_json(profile: ent.WeightProfile, tests: Sequence[str]) -> dict:
    mti2 = ent.mti2(profile) if profile.defined else None
    return {
        "variant": profile.variant,
        "defined": profile.defined,
        "k_sizes": dict(zip(tests, profile.k_sizes)),
        "alphas": dict(zip(tests, profile.alphas)) if profile.defined else None,
        "alpha_sum": math.fsum(profile.alphas) if profile.defined else None,
        "mti1": ent.mti1(profile.k_sizes),
        "mti2": mti2,
    }


def _survivor_json(surv) -> dict:
    return {"w_lower": surv.w_lower, "w_upper": surv.w_upper}


def group_consistency(store: Store, matrix: KillMatrix) -> dict | None:
    """Compare recorded group runs with the statuses derived from per-test cells."""
    records = store.group_outcomes()
    if not records:
        return None
    derived = {}
    mismatches = []
    for rec in records:
        key = rec.test_id
        if key not in derived:
            if key == ALL_GROUP:
                subset = set(matrix.tests)
            else:
                subset = set(matrix.tests) - {key[len(EXCEPT_PREFIX):]}
            derived[key] = group_status(matrix, subset)
        expected = derived[key].get(rec.mutant_id)
        if expected != rec.status.value:
            mismatches.append({"mutant_id": rec.mutant_id, "group": key, "direct": rec.status.value,
                               "derived": expected})
    return {"checked": len(records), "mismatches": mismatches}


def metrics_report(store: Store, base=ent.E) -> dict:
    base = ent.normalize_base(base)
    matrix = matrix_from_store(store)
    if not matrix.tests or not matrix.mutants:
        raise ReportError("session has no tests or no mutants")
    matrix.require_complete()
    tests = list(matrix.tests)
    n = len(matrix.mutants)
    full = survivors(matrix, tests)
    score = ent.mutation_score(matrix)
    weights = ent.weight_report(matrix)
    reported = weights.reported

    l_code = sum(u.char_count for u in store.units())
    sed = None
    if l_code and full.w_lower >= 1:
        sed = ent.sed_local(n, full.w_lower, l_code, base)

    graph = build_graph(store.mutants())
    report = {
        "log_base": str(base),
        "tests": len(tests),
        "mutants": n,
        "mode": store.session.mode,
        "mutation_score": {
            "score": score.score, "lower": score.lower, "upper": score.upper,
            "killed": score.killed, "timeouts": score.timeouts, "total": score.total,
        },
        "survivors": _survivor_json(full),
        "entropy": {
            "S_initial": _s(n, base),
            "S_lower": _s(full.w_lower, base),
            "S_upper": _s(full.w_upper, base),
            "delta_S": None if full.w_lower == 0 else ent.entropy_loss(n, full.w_lower, base).value,
        },
        "weights": {
            "reported_variant": reported.variant if reported.defined else None,
            "unique": _profile_json(weights.unique, tests),
            "run_alone": _profile_json(weights.run_alone, tests),
        },
        "mti1": ent.mti1(weights.unique.k_sizes),
        "mti2": ent.mti2(reported) if reported.defined else None,
        "L_code": l_code or None,
        "sed_local": sed,
        "group_views": {
            t: {"only": _survivor_json(v.only), "without": _survivor_json(v.without)}
            for t, v in group_views(matrix).items()
        },
        "graph": {
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "surviving": component_stats(surviving_subgraph(graph, full)).to_json(),
            "surviving_with_uncertain": component_stats(
                surviving_subgraph(graph, full, include_uncertain=True)
            ).to_json(),
        },
    }
    consistency = group_consistency(store, matrix)
    if consistency is not None:
        report["group_runs"] = consistency
    fractions = coverage_fractions(store)
    if fractions:
        try:
            rows = ent.coverage_contrast(reported, tests, fractions)
        except ent.MissingCoverage as exc:
            report["coverage_contrast"] = {"missing": exc.test_ids}
        else:
            report["coverage_contrast"] = [
                {"test_id": r.test_id, "alpha": r.alpha, "coverage": r.coverage, "flags": list(r.flags),
                 "variant": reported.variant}
                for r in rows
            ]
    return report


def curve_table(curve: ent.EntropyCurve) -> list[dict]:
    rows = ent.curve_rows(curve)
    for row, name in zip(rows, ("",) + curve.ordering):
        row["test_id"] = name
    return rows


def to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def weight_rows(report: dict) -> list[dict]:
    rows = []
    for variant in ("unique", "run_alone"):
        prof = report["weights"][variant]
        for t, k in prof["k_sizes"].items():
            alpha = prof["alphas"][t] if prof["defined"] else "undefined"
            rows.append({"test_id": t, "k_size": k, "alpha": alpha, "variant": prof["variant"]})
    return rows


WEIGHT_COLUMNS = ("test_id", "k_size", "alpha", "variant")


# ---------------------------------------------------------------------------
# lab


def _same(a, b) -> bool:
    if a is ent.ZERO_SURVIVORS or b is ent.ZERO_SURVIVORS:
        return a is b
    return abs(a - b) <= LOG_TOL


def lab_report(config: LabConfig, base=ent.E) -> dict:
    """Exact trajectory versus the curve of the predicate-induced kill matrix."""
    base = ent.normalize_base(base)
    space, preds = config.space, config.predicates
    space.check_cap()
    traj = nested_entropy_trajectory(space, preds, base)
    matrix = predicate_kill_matrix(space, preds)
    points = []
    agree = True
    if matrix.mutants:
        curve = ent.entropy_curve(matrix, [p.name for p in preds], base)
        cpoints = curve.points
    else:
        cpoints = [None] * len(traj.points)
    for tp, cp in zip(traj.points, cpoints):
        w_m = cp.w_lower if cp is not None else 0
        s_m = cp.s_point if cp is not None else ent.ZERO_SURVIVORS
        ok = tp.w == w_m and _same(tp.s, s_m) and (cp is None or cp.w_upper == cp.w_lower)
        agree &= ok
        points.append({
            "i": tp.j,
            "predicate": traj.names[tp.j - 1] if tp.j else None,
            "W_exact": tp.w,
            "W_matrix": w_m,
            "S_exact": ent.report_cell(tp.s),
            "S_matrix": ent.report_cell(s_m),
            "delta_S": tp.delta_s,
            "agree": ok,
        })

    out = {
        "space": config.name,
        "length": space.length,
        "alphabet": space.alphabet,
        "universe": space.size,
        "syntactic_count": traj.points[0].w,
        "log_base": str(base),
        "points": points,
        "verdict": "agree" if agree else "disagree",
    }
    feasible = enumerate_feasible(space, preds)
    out["feasible_count"] = feasible.count
    if feasible.count:
        h_uniform = exact_entropy(feasible, "uniform", base).value
        log_w = ent.log(feasible.count, base)
        out["entropy_uniform"] = h_uniform
        out["log_W"] = log_w
        out["uniform_identity"] = abs(h_uniform - log_w) <= LOG_TOL
        mu = resolve_distribution(config.distribution, feasible)
        h_mu = exact_entropy(feasible, mu, base).value
        out["distribution"] = config.distribution.get("kind", "uniform")
        out["entropy_mu"] = h_mu
        out["max_entropy_bound"] = h_mu <= log_w + LOG_TOL
        if config.benign is not None:
            out["defect_fraction"] = defect_fraction(feasible, config.benign)
    return out


def lab_rows(report: dict) -> list[dict]:
    """Trajectory in the entropy-curve CSV layout."""
    return [
        {"i": p["i"], "W_lower": p["W_exact"], "W_upper": p["W_exact"],
         "S_lower": p["S_exact"], "S_point": p["S_exact"], "S_upper": p["S_exact"]}
        for p in report["points"]
    ]
