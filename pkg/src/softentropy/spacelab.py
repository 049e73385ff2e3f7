"""Exact enumeration of tiny program spaces.

A program is a string of ``length`` symbols drawn from ``1..alphabet``. The
bundled semantics read each string as a stack-machine program (see
:func:`softentropy.kernels.stack_outputs`), so every predicate is total and
cheap. Predicates are built from declarative rules::

    {"kind": "output", "inputs": [0, 1], "expected": [2, 3]}
    {"kind": "count", "symbol": 1, "op": ">=", "value": 2}
    {"kind": "not", "rule": {...}}

Enumeration walks the lattice in chunks, so memory stays bounded unless the
feasible set is materialised.
"""

from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .entropy import E, ZERO_SURVIVORS, EntropyValue, NotNormalized, entropy_loss, log, normalize_base
from .matrix import FAIL, PASS, KillMatrix

DEFAULT_CAP = 10**7
DEFAULT_MODULUS = 7
CHUNK = 1 << 16
NORMALIZATION_TOL = 1e-12


class SpaceError(Exception):
    pass


class UniverseTooLarge(SpaceError):
    pass


class EmptyFeasibleSet(SpaceError):
    pass


@dataclass(frozen=True)
class SemanticPredicate:
    """A total boolean property of program strings.

    ``batch`` maps an ``(n, length)`` symbol array to ``n`` booleans; calling
    the predicate on a single string uses the same code path.
    """

    name: str
    batch: Callable[[np.ndarray], np.ndarray]

    def __call__(self, program: Sequence[int]) -> bool:
        return bool(self.batch(np.asarray([program], dtype=np.int64))[0])


@dataclass(frozen=True)
class ProgramSpace:
    length: int
    alphabet: int
    syntactic: SemanticPredicate | None = None
    modulus: int = DEFAULT_MODULUS
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.length < 1 or self.alphabet < 1:
            raise SpaceError("length and alphabet must be >= 1")

    @property
    def size(self) -> int:
        return self.alphabet**self.length

    def check_cap(self) -> None:
        if self.size > self.cap:
            raise UniverseTooLarge(f"{self.alphabet}^{self.length} = {self.size} exceeds cap {self.cap}")

    def decode(self, indices: np.ndarray) -> np.ndarray:
        """Lattice indices to symbol rows, most significant position first."""
        indices = np.asarray(indices, dtype=np.int64)
        powers = self.alphabet ** np.arange(self.length - 1, -1, -1, dtype=np.int64)
        return (indices[:, None] // powers[None, :]) % self.alphabet + 1

    def encode(self, programs) -> np.ndarray:
        programs = np.asarray(programs, dtype=np.int64).reshape(-1, self.length)
        powers = self.alphabet ** np.arange(self.length - 1, -1, -1, dtype=np.int64)
        return (programs - 1) @ powers

    def chunks(self, chunk: int = CHUNK):
        """Yield ``(indices, programs)`` over the lattice, syntactic filter applied."""
        self.check_cap()
        for start in range(0, self.size, chunk):
            idx = np.arange(start, min(start + chunk, self.size), dtype=np.int64)
            progs = self.decode(idx)
            if self.syntactic is not None:
                keep = self.syntactic.batch(progs)
                idx, progs = idx[keep], progs[keep]
            yield idx, progs


# ---------------------------------------------------------------------------
# rules

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq, "!=": operator.ne}


def predicate_from_rule(rule: Mapping, modulus: int = DEFAULT_MODULUS, name: str | None = None) -> SemanticPredicate:
    kind = rule.get("kind")
    name = name or rule.get("name") or kind

    if kind == "tautology":
        fn = lambda p: np.ones(len(p), dtype=bool)  # noqa: E731
    elif kind == "contradiction":
        fn = lambda p: np.zeros(len(p), dtype=bool)  # noqa: E731
    elif kind == "symbol_at":
        pos, value = int(rule["position"]), int(rule["value"])
        fn = lambda p: p[:, pos] == value  # noqa: E731
    elif kind == "count":
        sym, cmp, value = int(rule["symbol"]), _OPS[rule.get("op", "==")], int(rule["value"])
        fn = lambda p: cmp((p == sym).sum(axis=1), value)  # noqa: E731
    elif kind == "sum_mod":
        mod, residue = int(rule["modulus"]), int(rule.get("residue", 0))
        fn = lambda p: p.sum(axis=1) % mod == residue  # noqa: E731
    elif kind == "well_formed":
        fn = lambda p: kernels.stack_outputs(p, [0], modulus)[:, 0] != kernels.INVALID_OUTPUT  # noqa: E731
    elif kind == "output":
        inputs = [int(x) for x in rule["inputs"]]
        expected = np.array([int(y) % modulus for y in rule["expected"]], dtype=np.int64)
        if len(inputs) != len(expected):
            raise SpaceError(f"{name}: inputs and expected differ in length")

        def fn(p):
            out = kernels.stack_outputs(p, inputs, modulus)
            return (out == expected[None, :]).all(axis=1)

    elif kind == "not":
        inner = predicate_from_rule(rule["rule"], modulus)
        fn = lambda p: ~inner.batch(p)  # noqa: E731
    elif kind in ("all", "any"):
        parts = [predicate_from_rule(r, modulus) for r in rule["rules"]]
        red = np.logical_and if kind == "all" else np.logical_or

        def fn(p):
            acc = np.full(len(p), kind == "all")
            for part in parts:
                acc = red(acc, part.batch(p))
            return acc

    else:
        raise SpaceError(f"unknown predicate kind {kind!r}")
    return SemanticPredicate(name, fn)


# ---------------------------------------------------------------------------
# enumeration and exact quantities


@dataclass(frozen=True)
class FeasibleSet:
    space: ProgramSpace
    count: int
    indices: np.ndarray | None = None  # lattice indices, ascending

    @property
    def programs(self) -> np.ndarray:
        if self.indices is None:
            raise SpaceError("feasible set was not materialised")
        return self.space.decode(self.indices)

    def as_tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(s) for s in row) for row in self.programs]


def _pass_matrix(progs: np.ndarray, predicates: Sequence[SemanticPredicate]) -> np.ndarray:
    if not predicates:
        return np.ones((len(progs), 0), dtype=bool)
    return np.column_stack([np.asarray(p.batch(progs), dtype=bool) for p in predicates])


def enumerate_feasible(
    space: ProgramSpace, predicates: Sequence[SemanticPredicate] = (), materialize: bool = True
) -> FeasibleSet:
    """Programs in the syntactic set that satisfy every predicate."""
    count = 0
    kept = []
    for idx, progs in space.chunks():
        ok = _pass_matrix(progs, predicates).all(axis=1)
        count += int(ok.sum())
        if materialize:
            kept.append(idx[ok])
    indices = np.concatenate(kept) if materialize and kept else (np.empty(0, np.int64) if materialize else None)
    return FeasibleSet(space, count, indices)


def exact_entropy(feasible: FeasibleSet, distribution="uniform", base=E) -> EntropyValue:
    """``-sum mu log mu`` over the feasible set.

    ``distribution`` is ``"uniform"``, a sequence aligned with the feasible
    set's order, or a mapping from program tuples to probabilities (missing
    programs get zero).
    """
    w = feasible.count
    if w == 0:
        raise EmptyFeasibleSet("no feasible programs")
    if isinstance(distribution, str):
        if distribution != "uniform":
            raise ValueError(f"unknown distribution {distribution!r}")
        mu = np.full(w, 1.0 / w)
    elif isinstance(distribution, Mapping):
        pos = {p: i for i, p in enumerate(feasible.as_tuples())}
        mu = np.zeros(w)
        for prog, prob in distribution.items():
            key = tuple(int(s) for s in prog)
            if key not in pos:
                raise NotNormalized(f"probability assigned outside the feasible set: {key}")
            mu[pos[key]] = prob
    else:
        mu = np.asarray(distribution, dtype=float)
        if mu.shape != (w,):
            raise ValueError(f"distribution has {mu.size} entries for {w} programs")
    if np.any(mu < 0):
        raise NotNormalized("negative probability")
    total = math.fsum(mu)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"probabilities sum to {total!r}")
    nz = mu[mu > 0]
    h = -math.fsum(nz * np.log(nz))
    base = normalize_base(base)
    return EntropyValue(h if base == E else h / math.log(2), base)


def defect_fraction(feasible: FeasibleSet, benign: SemanticPredicate) -> float:
    """Share of feasible programs labelled benign."""
    if feasible.count == 0:
        raise EmptyFeasibleSet("no feasible programs")
    return int(benign.batch(feasible.programs).sum()) / feasible.count


@dataclass(frozen=True)
class TrajectoryPoint:
    j: int
    w: int
    s: object
    delta_s: float | None  # loss from the previous point; None at j=0 or when W hits zero


@dataclass(frozen=True)
class Trajectory:
    points: tuple[TrajectoryPoint, ...]
    names: tuple[str, ...]
    log_base: object = E


def nested_entropy_trajectory(
    space: ProgramSpace, predicates: Sequence[SemanticPredicate], base=E
) -> Trajectory:
    """Exact ``W_j`` after imposing the first ``j`` predicates, ``j = 0..m``."""
    base = normalize_base(base)
    m = len(predicates)
    counts = np.zeros(m + 1, dtype=np.int64)
    for _, progs in space.chunks():
        passes = _pass_matrix(progs, predicates)
        alive = np.cumprod(passes, axis=1, dtype=np.int64) if m else passes
        counts[0] += len(progs)
        if m:
            counts[1:] += alive.sum(axis=0)
    points = []
    for j, w in enumerate(counts):
        w = int(w)
        s = ZERO_SURVIVORS if w == 0 else log(w, base)
        delta = None
        if j > 0 and w > 0:
            delta = entropy_loss(points[-1].w, w, base).value
        points.append(TrajectoryPoint(j, w, s, delta))
    return Trajectory(tuple(points), tuple(p.name for p in predicates), base)


# ---------------------------------------------------------------------------
# configuration files


@dataclass(frozen=True)
class LabConfig:
    name: str
    space: ProgramSpace
    predicates: tuple[SemanticPredicate, ...]
    benign: SemanticPredicate | None = None
    distribution: Mapping = field(default_factory=lambda: {"kind": "uniform"})


def rank_power_distribution(w: int, exponent: float) -> np.ndarray:
    """``mu ∝ 1 / (rank + 1) ** exponent`` over the feasible order, normalised."""
    raw = 1.0 / np.arange(1, w + 1, dtype=float) ** exponent
    return raw / math.fsum(raw)


def resolve_distribution(spec: Mapping, feasible: FeasibleSet):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return "uniform"
    if kind == "rank-power":
        return rank_power_distribution(feasible.count, float(spec.get("exponent", 1.0)))
    if kind == "table":
        return {tuple(prog): float(p) for prog, p in spec["entries"]}
    raise SpaceError(f"unknown distribution kind {kind!r}")


def parse_lab_config(data: Mapping) -> LabConfig:
    modulus = int(data.get("modulus", DEFAULT_MODULUS))
    syntactic = data.get("syntactic")
    space = ProgramSpace(
        int(data["length"]),
        int(data["alphabet"]),
        predicate_from_rule(syntactic, modulus, "syntax") if syntactic else None,
        modulus,
        int(data.get("cap", DEFAULT_CAP)),
    )
    preds = []
    for i, rule in enumerate(data.get("predicates", [])):
        preds.append(predicate_from_rule(rule, modulus, rule.get("name") or f"p{i + 1}"))
    names = [p.name for p in preds]
    if len(set(names)) != len(names):
        raise SpaceError("predicate names must be unique")
    benign = data.get("benign")
    return LabConfig(
        data.get("name", "space"),
        space,
        tuple(preds),
        predicate_from_rule(benign, modulus, "benign") if benign else None,
        data.get("distribution", {"kind": "uniform"}),
    )


def load_lab_config(path) -> LabConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_lab_config(json.load(fh))


DEMO_SPACE = Path(__file__).with_name("fixtures") / "demo_space.json"


def predicate_kill_matrix(space: ProgramSpace, predicates: Sequence[SemanticPredicate]):
    """Kill matrix with each syntactic program as a mutant and each predicate as a test.

    Programs are named ``p<lattice index>``. A predicate that holds is a pass.
    """
    names, blocks = [], []
    for idx, progs in space.chunks():
        passes = _pass_matrix(progs, predicates)
        blocks.append(np.where(passes, PASS, FAIL).astype(np.int8))
        names.extend(f"p{i}" for i in idx)
    codes = np.concatenate(blocks) if blocks else np.empty((0, len(predicates)), np.int8)
    return KillMatrix(tuple(p.name for p in predicates), tuple(names), codes.reshape(len(names), len(predicates)))
