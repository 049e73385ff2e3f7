"""Entropy metrics over survivor counts, kill matrices and probability tables.

Logarithms are natural by default; pass ``base=2`` for bits. A survivor count
of zero has no logarithm, so curves carry the :data:`ZERO_SURVIVORS` marker at
such points and scalar functions raise :class:`ZeroSurvivors`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .matrix import (
    KillMatrix,
    killed_alone_sets,
    prefix_counts,
    survivors,
    unique_kill_sets,
)

E = "e"
FLOAT_DIGITS = 12


class EntropyError(Exception):
    pass


class ZeroSurvivors(EntropyError):
    pass


class OrderViolation(EntropyError):
    pass


class UndefinedWeights(EntropyError):
    pass


class AllZeroWeight(EntropyError):
    pass


class NotNormalized(EntropyError):
    pass


class MissingCoverage(EntropyError):
    def __init__(self, test_ids):
        super().__init__("no coverage for: " + ", ".join(test_ids))
        self.test_ids = list(test_ids)


class _ZeroSurvivorsMarker:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ZERO_SURVIVORS"

    def __str__(self):
        return "zero-survivors"

    def __reduce__(self):
        return (_ZeroSurvivorsMarker, ())


ZERO_SURVIVORS = _ZeroSurvivorsMarker()


def normalize_base(base) -> object:
    if base in (E, "E", math.e, None):
        return E
    if base in (2, "2", 2.0):
        return 2
    raise ValueError(f"log base must be 2 or e, got {base!r}")


def log(x: float, base=E) -> float:
    return math.log(x) if normalize_base(base) == E else math.log2(x)


@dataclass(frozen=True)
class EntropyValue:
    value: float
    log_base: object = E

    def __float__(self) -> float:
        return self.value

    def to(self, base) -> "EntropyValue":
        base = normalize_base(base)
        if base == self.log_base:
            return self
        factor = math.log(2) if base == E else 1 / math.log(2)
        return EntropyValue(self.value * factor, base)


def entropy_upper_bound(w: int, base=E) -> EntropyValue:
    """``log W`` for a survivor count ``W >= 1``."""
    if w < 0:
        raise ValueError("survivor count must be non-negative")
    if w == 0:
        raise ZeroSurvivors("no survivors; the entropy bound is undefined")
    return EntropyValue(log(w, base), normalize_base(base))


def entropy_loss(w_before: int, w_after: int, base=E) -> EntropyValue:
    """``log W_before - log W_after``, i.e. ``-log`` of the acceptance ratio."""
    if w_after > w_before:
        raise OrderViolation(f"survivors grew from {w_before} to {w_after}")
    if w_after == 0:
        raise ZeroSurvivors("the larger suite leaves no survivors")
    base = normalize_base(base)
    return EntropyValue(log(w_before, base) - log(w_after, base), base)


def acceptance_ratio(w_before: int, w_after: int) -> float:
    if w_after > w_before:
        raise OrderViolation(f"survivors grew from {w_before} to {w_after}")
    if w_before == 0:
        raise ZeroSurvivors("no survivors before refinement")
    return w_after / w_before


# ---------------------------------------------------------------------------
# curves


def _log_or_marker(w: int, base):
    return ZERO_SURVIVORS if w == 0 else log(w, base)


@dataclass(frozen=True)
class CurvePoint:
    i: int
    w_lower: int
    w_upper: int
    s_lower: object
    s_point: object
    s_upper: object

    @property
    def zero_survivors(self) -> bool:
        return self.w_lower == 0


@dataclass(frozen=True)
class EntropyCurve:
    points: tuple[CurvePoint, ...]
    ordering: tuple[str, ...]
    log_base: object = E

    @classmethod
    def from_counts(cls, lower: Sequence[int], upper: Sequence[int], ordering, base=E) -> "EntropyCurve":
        base = normalize_base(base)
        points = []
        for i, (lo, up) in enumerate(zip(lower, upper)):
            lo, up = int(lo), int(up)
            s_lo = _log_or_marker(lo, base)
            points.append(CurvePoint(i, lo, up, s_lo, s_lo, _log_or_marker(up, base)))
        return cls(tuple(points), tuple(ordering), base)

    def losses(self) -> list:
        """Successive losses ``S_i - S_{i+1}``; ``None`` once survivors run out."""
        out = []
        for a, b in zip(self.points, self.points[1:]):
            if b.w_lower == 0:
                out.append(None)
            else:
                out.append(entropy_loss(a.w_lower, b.w_lower, self.log_base).value)
        return out


CURVE_COLUMNS = ("i", "W_lower", "W_upper", "S_lower", "S_point", "S_upper")


def entropy_curve(matrix: KillMatrix, ordering: Sequence[str] | None = None, base=E) -> EntropyCurve:
    """Entropy bound after each prefix ``T_i`` of ``ordering`` (declaration order by default)."""
    ordering = tuple(matrix.tests if ordering is None else ordering)
    lower, upper = prefix_counts(matrix, ordering)
    return EntropyCurve.from_counts(lower, upper, ordering, base)


def format_float(x) -> object:
    """Round to 12 significant digits so reports are byte-stable."""
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            raise ValueError("non-finite value in report")
        return float(f"{x:.{FLOAT_DIGITS}g}")
    return x


def curve_rows(curve: EntropyCurve) -> list[dict]:
    rows = []
    for p in curve.points:
        rows.append(
            {
                "i": p.i,
                "W_lower": p.w_lower,
                "W_upper": p.w_upper,
                "S_lower": report_cell(p.s_lower),
                "S_point": report_cell(p.s_point),
                "S_upper": report_cell(p.s_upper),
            }
        )
    return rows


def report_cell(value):
    return str(ZERO_SURVIVORS) if value is ZERO_SURVIVORS else format_float(value)


# ---------------------------------------------------------------------------
# weights and tightness

UNIQUE = "unique"
RUN_ALONE = "run-alone"


@dataclass(frozen=True)
class WeightProfile:
    k_sizes: tuple[int, ...]
    alphas: tuple[float, ...] | None
    variant: str = UNIQUE

    @property
    def defined(self) -> bool:
        return self.alphas is not None


def information_weights(k_sizes: Sequence[int], variant: str = UNIQUE) -> WeightProfile:
    """Each test's share ``|K_i| / sum_j |K_j|``; undefined when every K_i is empty."""
    sizes = tuple(int(k) for k in k_sizes)
    if not sizes:
        raise ValueError("need at least one test")
    if any(k < 0 for k in sizes):
        raise ValueError("sizes must be non-negative")
    total = sum(sizes)
    if total == 0:
        return WeightProfile(sizes, None, variant)
    return WeightProfile(sizes, tuple(k / total for k in sizes), variant)


def mti1(k_sizes: Sequence[int]) -> float:
    """Fraction of tests that kill at least one mutant nobody else kills."""
    if not k_sizes:
        raise ValueError("need at least one test")
    return sum(1 for k in k_sizes if k > 0) / len(k_sizes)


def mti2(profile: WeightProfile) -> float:
    """Shannon entropy of the weights normalised by ``log m``, in ``[0, 1]``."""
    if not profile.defined:
        raise UndefinedWeights("weights undefined: no test has exclusive kills")
    m = len(profile.alphas)
    nonzero = [k for k in profile.k_sizes if k > 0]
    # exact endpoints: one contributor, or all m contributing equally
    if len(nonzero) == 1:
        return 1.0 if m == 1 else 0.0
    if len(nonzero) == m and len(set(nonzero)) == 1:
        return 1.0
    h = -math.fsum(a * math.log(a) for a in profile.alphas if a > 0)
    return min(1.0, max(0.0, h / math.log(m)))


@dataclass(frozen=True)
class WeightReport:
    unique: WeightProfile
    run_alone: WeightProfile

    @property
    def reported(self) -> WeightProfile:
        """The unique-kill profile, or the run-alone fallback when it is undefined."""
        return self.unique if self.unique.defined else self.run_alone


def weight_report(matrix: KillMatrix) -> WeightReport:
    uniq = unique_kill_sets(matrix)
    alone = killed_alone_sets(matrix)
    return WeightReport(
        information_weights([len(uniq[t]) for t in matrix.tests], UNIQUE),
        information_weights([len(alone[t]) for t in matrix.tests], RUN_ALONE),
    )


def sed_local(w_first: int, w_last: int, l_code: int, base=E) -> float:
    """Entropy lost across the whole suite per character of code."""
    if l_code < 1:
        raise ValueError("L_code must be >= 1")
    return entropy_loss(w_first, w_last, base).value / l_code


@dataclass(frozen=True)
class MutationScore:
    killed: int
    timeouts: int
    total: int

    @property
    def score(self) -> float:
        return self.killed / self.total

    @property
    def lower(self) -> float:
        return self.score

    @property
    def upper(self) -> float:
        return (self.killed + self.timeouts) / self.total


def mutation_score(matrix: KillMatrix) -> MutationScore:
    """Killed fraction under the full suite; timeout-only mutants widen the interval."""
    if not matrix.mutants:
        raise ValueError("no mutants")
    surv = survivors(matrix, matrix.tests)
    n = len(matrix.mutants)
    return MutationScore(n - surv.w_upper, len(surv.uncertain), n)


# ---------------------------------------------------------------------------
# fuzzy macrostates


def fuzzy_entropy(table, base=E) -> EntropyValue:
    """Gibbs-Shannon entropy of weights ``w(p) = prod_i t_i(p)``.

    ``table`` has one row per program and one column per property, entries
    being pass probabilities. Computed as ``log Z - sum w log w / Z`` so a
    crisp table gives ``log W`` exactly.
    """
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise ValueError("table must be 2-D (programs x properties)")
    if np.any(t < 0) or np.any(t > 1) or np.any(np.isnan(t)):
        raise ValueError("entries must lie in [0, 1]")
    w = np.prod(t, axis=1)
    w = w[w > 0]
    if len(w) == 0:
        raise AllZeroWeight("every program has zero weight")
    z = math.fsum(w)
    s = math.log(z) - math.fsum(w * np.log(w)) / z
    s = max(s, 0.0)
    base = normalize_base(base)
    return EntropyValue(s if base == E else s / math.log(2), base)


def gibbs_entropy(probabilities, base=E) -> EntropyValue:
    """``-sum p log p`` with ``0 log 0 = 0``."""
    p = np.asarray(probabilities, dtype=float)
    p = p[p > 0]
    h = -math.fsum(p * np.log(p))
    base = normalize_base(base)
    return EntropyValue(h if base == E else h / math.log(2), base)


# ---------------------------------------------------------------------------
# coverage contrast


@dataclass(frozen=True)
class ContrastRow:
    test_id: str
    alpha: float | None
    coverage: float
    flags: tuple[str, ...]


HIGH_COV_LOW_ALPHA = "high-coverage-low-alpha"
COVERAGE_BLIND = "coverage-blind"
COVERAGE_TOLERANCE = 0.05


def coverage_contrast(
    profile: WeightProfile, test_ids: Sequence[str], coverage: Mapping[str, float]
) -> list[ContrastRow]:
    """Pair each test's weight with its line coverage, highest weight first.

    Two flags are raised. ``high-coverage-low-alpha``: coverage at or above
    the median while the weight is under half the uniform share.
    ``coverage-blind``: some other test has coverage within 0.05 yet a
    weight larger by at least the uniform share ``1/m``.
    """
    missing = [t for t in test_ids if t not in coverage]
    if missing:
        raise MissingCoverage(missing)
    m = len(test_ids)
    covs = [float(coverage[t]) for t in test_ids]
    alphas = list(profile.alphas) if profile.defined else [None] * m
    median = float(np.median(covs)) if covs else 0.0
    rows = []
    for j, t in enumerate(test_ids):
        flags = []
        a = alphas[j]
        if a is not None:
            if covs[j] >= median and a < 0.5 / m:
                flags.append(HIGH_COV_LOW_ALPHA)
            if any(
                k != j
                and abs(covs[k] - covs[j]) <= COVERAGE_TOLERANCE
                and alphas[k] - a >= 1.0 / m
                for k in range(m)
            ):
                flags.append(COVERAGE_BLIND)
        rows.append(ContrastRow(t, a, covs[j], tuple(flags)))
    if profile.defined:
        order = sorted(range(m), key=lambda j: (-alphas[j], j))
        rows = [rows[j] for j in order]
    return rows
