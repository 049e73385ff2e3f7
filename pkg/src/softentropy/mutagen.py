"""Deterministic syntactic mutant generation and application.

Two matching modes exist. Grammar mode tokenizes with the bundled toy-language
lexer, so comments and string literals are never touched and unary minus is
told apart from subtraction. Token mode runs a regex token table over
arbitrary text; it can and will mutate inside comments and strings.
"""

from __future__ import annotations

import fnmatch
import hashlib
import itertools
import json
import math
import random
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import toylang

PATTERN_CLASSES = (
    "binary-arithmetic-op",
    "relational-op",
    "boolean-literal",
    "numeric-literal",
    "unary-negation-site",
    "logical-connective",
)
NUMERIC_RULES = ("plus_one", "zero")
MODES = ("grammar", "token")
GRAMMARS = ("toy",)
ID_LENGTH = 16


class MutagenError(Exception):
    pass


class UnparsableSource(MutagenError):
    pass


class UnknownLanguageTag(MutagenError):
    pass


class StaleWorkspace(MutagenError):
    pass


class RegistryError(MutagenError):
    pass


@dataclass(frozen=True)
class SourceUnit:
    path: str
    text: str
    language_tag: str

    @property
    def char_count(self) -> int:
        return len(self.text)

    @property
    def line_count(self) -> int:
        if not self.text:
            return 0
        return self.text.count("\n") + (0 if self.text.endswith("\n") else 1)


@dataclass(frozen=True)
class MutationOperator:
    """One named rewrite: either a replacement table or numeric rules."""

    name: str
    pattern_class: str
    table: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    rules: tuple[str, ...] = ()

    def __post_init__(self):
        if self.pattern_class not in PATTERN_CLASSES:
            raise RegistryError(f"{self.name}: unknown pattern class {self.pattern_class!r}")
        for frag, repls in self.table.items():
            if frag in repls:
                raise RegistryError(f"{self.name}: {frag!r} maps to itself")
        bad = set(self.rules) - set(NUMERIC_RULES)
        if bad:
            raise RegistryError(f"{self.name}: unknown rules {sorted(bad)}")

    def replacements(self, fragment: str) -> list[str]:
        if self.pattern_class == "numeric-literal":
            value = int(fragment)
            out = []
            for rule in self.rules:
                new = str(value + 1) if rule == "plus_one" else "0"
                if new != fragment and new not in out:
                    out.append(new)
            return out
        return list(self.table.get(fragment, ()))


@dataclass(frozen=True)
class LanguageSpec:
    tag: str
    mode: str
    extensions: tuple[str, ...]
    operators: tuple[MutationOperator, ...]

    def __post_init__(self):
        if self.mode not in MODES:
            raise RegistryError(f"{self.tag}: unknown mode {self.mode!r}")
        if self.mode == "grammar" and self.tag not in GRAMMARS:
            raise RegistryError(f"no grammar available for {self.tag!r}")
        names = [op.name for op in self.operators]
        if len(set(names)) != len(names):
            raise RegistryError(f"{self.tag}: duplicate operator names")


def _standard_operators(words: Mapping[str, Mapping[str, tuple[str, ...]]]) -> tuple:
    return (
        MutationOperator(
            "arith_swap",
            "binary-arithmetic-op",
            {"+": ("-",), "-": ("+",), "*": ("/",), "/": ("*",)},
        ),
        MutationOperator(
            "rel_swap",
            "relational-op",
            {"<": ("<=",), "<=": ("<",), ">": (">=",), ">=": (">",), "==": ("!=",), "!=": ("==",)},
        ),
        MutationOperator("bool_flip", "boolean-literal", words["bool"]),
        MutationOperator("num_perturb", "numeric-literal", rules=NUMERIC_RULES),
        MutationOperator("logic_swap", "logical-connective", words["logic"]),
        MutationOperator("neg_drop", "unary-negation-site", words["neg"]),
    )


def default_registry() -> "OperatorRegistry":
    toy = LanguageSpec(
        "toy",
        "grammar",
        (".toy",),
        _standard_operators(
            {
                "bool": {"true": ("false",), "false": ("true",)},
                "logic": {"and": ("or",), "or": ("and",)},
                "neg": {"not": ("",), "-": ("",)},
            }
        ),
    )
    text = LanguageSpec(
        "text",
        "token",
        (),
        _standard_operators(
            {
                "bool": {"true": ("false",), "false": ("true",), "True": ("False",), "False": ("True",)},
                "logic": {"and": ("or",), "or": ("and",), "&&": ("||",), "||": ("&&",)},
                "neg": {"not": ("",)},
            }
        ),
    )
    return OperatorRegistry({"toy": toy, "text": text})


@dataclass(frozen=True)
class OperatorRegistry:
    languages: Mapping[str, LanguageSpec]
    fallback_tag: str = "text"

    def get(self, tag: str) -> LanguageSpec:
        try:
            return self.languages[tag]
        except KeyError:
            raise UnknownLanguageTag(tag) from None

    def tag_for(self, path: str) -> str:
        suffix = Path(path).suffix
        for spec in self.languages.values():
            if suffix in spec.extensions:
                return spec.tag
        return self.fallback_tag

    def with_config(self, data: Mapping) -> "OperatorRegistry":
        """Return a registry extended by a parsed configuration document.

        The document looks like ``{"languages": {tag: {"mode": ..., "extensions":
        [...], "operators": [{"name", "pattern_class", "table" | "rules"}]}}}``.
        Tags already present are replaced.
        """
        langs = dict(self.languages)
        for tag, spec in data.get("languages", {}).items():
            ops = []
            for raw in spec.get("operators", []):
                try:
                    ops.append(
                        MutationOperator(
                            raw["name"],
                            raw["pattern_class"],
                            {k: tuple(v) for k, v in raw.get("table", {}).items()},
                            tuple(raw.get("rules", ())),
                        )
                    )
                except KeyError as exc:
                    raise RegistryError(f"{tag}: operator missing {exc}") from None
            langs[tag] = LanguageSpec(
                tag, spec.get("mode", "token"), tuple(spec.get("extensions", ())), tuple(ops)
            )
        return OperatorRegistry(langs, data.get("fallback_tag", self.fallback_tag))


def load_registry(path) -> OperatorRegistry:
    with open(path, encoding="utf-8") as fh:
        return default_registry().with_config(json.load(fh))


@dataclass(frozen=True, order=True)
class Mutation:
    unit_path: str
    start: int
    end: int
    replacement: str
    operator: str = field(compare=False)
    original: str = field(compare=False)

    @property
    def key(self) -> tuple[str, int, int, str]:
        return (self.unit_path, self.start, self.end, self.replacement)

    def overlaps(self, other: "Mutation") -> bool:
        return (
            self.unit_path == other.unit_path
            and self.start < other.end
            and other.start < self.end
        )

    def to_json(self) -> dict:
        return {
            "unit_path": self.unit_path,
            "start": self.start,
            "end": self.end,
            "original": self.original,
            "replacement": self.replacement,
            "operator": self.operator,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Mutation":
        return cls(d["unit_path"], d["start"], d["end"], d["replacement"], d["operator"], d["original"])


def mutant_id(mutations: Iterable[Mutation]) -> str:
    canon = sorted([m.unit_path, m.start, m.end, m.replacement] for m in mutations)
    blob = json.dumps(canon, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:ID_LENGTH]


@dataclass(frozen=True)
class Mutant:
    id: str
    mutations: tuple[Mutation, ...]

    @classmethod
    def of(cls, mutations: Iterable[Mutation]) -> "Mutant":
        muts = tuple(sorted(mutations))
        for a, b in itertools.combinations(muts, 2):
            if a.overlaps(b):
                raise ValueError(f"overlapping mutations {a.key} and {b.key}")
        return cls(mutant_id(muts), muts)

    @property
    def order(self) -> int:
        return len(self.mutations)

    @property
    def key_set(self) -> frozenset:
        return frozenset(m.key for m in self.mutations)

    def describe(self) -> str:
        parts = [
            f"{m.unit_path}@{m.start}:{m.original!r}->{m.replacement!r}" for m in self.mutations
        ]
        return "; ".join(parts)

    def to_json(self) -> dict:
        return {"id": self.id, "order": self.order, "mutations": [m.to_json() for m in self.mutations]}

    @classmethod
    def from_json(cls, d: Mapping) -> "Mutant":
        return cls(d["id"], tuple(sorted(Mutation.from_json(m) for m in d["mutations"])))


# ---------------------------------------------------------------------------
# enumeration

_ARITH = frozenset("+-*/")
_TOKEN_RE = re.compile(
    r"(?P<num>(?<![\w.])\d+(?![\w.]))|(?P<word>(?<!\w)[A-Za-z_]\w*)|(?P<op>[-+*/<>=!%&|^~]+)"
)


def _grammar_sites(unit: SourceUnit):
    """Yield ``(pattern_class, token)`` for every mutable toy-language token."""
    try:
        toylang.parse(unit.text)
        tokens = toylang.tokenize(unit.text)
    except toylang.ToySyntaxError as exc:
        raise UnparsableSource(f"{unit.path}: {exc}") from None
    prev = None
    for tok in tokens:
        cls = None
        if tok.kind == "int":
            cls = "numeric-literal"
        elif tok.kind == "keyword":
            if tok.text in ("true", "false"):
                cls = "boolean-literal"
            elif tok.text in ("and", "or"):
                cls = "logical-connective"
            elif tok.text == "not":
                cls = "unary-negation-site"
        elif tok.kind == "op":
            if tok.text in _ARITH:
                unary = tok.text == "-" and (
                    prev is None
                    or (prev.kind == "op" and prev.text not in (")", "]"))
                    or (prev.kind == "keyword" and prev.text not in ("true", "false"))
                )
                cls = "unary-negation-site" if unary else "binary-arithmetic-op"
            elif tok.text in ("<", "<=", ">", ">=", "==", "!="):
                cls = "relational-op"
        if cls is not None:
            yield cls, tok.text, tok.start, tok.end
        prev = tok


def _token_sites(unit: SourceUnit):
    for m in _TOKEN_RE.finditer(unit.text):
        kind = m.lastgroup
        if kind == "num":
            yield "numeric-literal", m.group(), m.start(), m.end()
        else:
            yield None, m.group(), m.start(), m.end()


def enumerate_mutations(unit: SourceUnit, registry: OperatorRegistry | None = None) -> list[Mutation]:
    """All single-site mutations of ``unit``, sorted by (start, operator, replacement)."""
    registry = registry or default_registry()
    lang = registry.get(unit.language_tag)
    sites = _grammar_sites(unit) if lang.mode == "grammar" else _token_sites(unit)
    found = {}
    for cls, frag, start, end in sites:
        for op in lang.operators:
            if cls is not None and op.pattern_class != cls:
                continue
            if cls is None and op.pattern_class == "numeric-literal":
                continue
            for repl in op.replacements(frag):
                mut = Mutation(unit.path, start, end, repl, op.name, frag)
                found.setdefault(mut.key, mut)
    return sorted(found.values(), key=lambda m: (m.start, m.operator, m.replacement))


def enumerate_all(units: Sequence[SourceUnit], registry: OperatorRegistry | None = None) -> list[Mutation]:
    out = []
    for unit in sorted(units, key=lambda u: u.path):
        out.extend(enumerate_mutations(unit, registry))
    return out


# ---------------------------------------------------------------------------
# composition

EXHAUSTIVE_LIMIT = 200_000


def _disjoint(combo: Sequence[Mutation]) -> bool:
    return not any(a.overlaps(b) for a, b in itertools.combinations(combo, 2))


def _combinations(mutations, r, budget, rng):
    n = len(mutations)
    if math.comb(n, r) <= EXHAUSTIVE_LIMIT:
        pool = [c for c in itertools.combinations(range(n), r) if _disjoint([mutations[i] for i in c])]
        if len(pool) > budget:
            pool = sorted(rng.sample(pool, budget))
        return pool
    chosen = set()
    attempts = 0
    max_attempts = 50 * budget + 1000
    while len(chosen) < budget and attempts < max_attempts:
        attempts += 1
        combo = tuple(sorted(rng.sample(range(n), r)))
        if combo not in chosen and _disjoint([mutations[i] for i in combo]):
            chosen.add(combo)
    return sorted(chosen)


def compose_mutants(
    mutations: Sequence[Mutation], max_order: int = 1, cap: int = 1000, seed: int = 0
) -> list[Mutant]:
    """Order-1 mutants first, then seeded samples of disjoint higher-order sets.

    Each order is taken exhaustively when it fits in the remaining ``cap``;
    otherwise a uniform sample without replacement fills it.
    """
    if max_order < 1 or cap < 1:
        raise ValueError("max_order and cap must be >= 1")
    rng = random.Random(seed)
    muts = list(mutations)
    idx = list(range(len(muts)))
    if len(idx) > cap:
        idx = sorted(rng.sample(idx, cap))
    out = [Mutant.of([muts[i]]) for i in idx]
    seen = {m.id for m in out}
    for r in range(2, max_order + 1):
        budget = cap - len(out)
        if budget <= 0 or r > len(muts):
            break
        for combo in _combinations(muts, r, budget, rng):
            mutant = Mutant.of([muts[i] for i in combo])
            if mutant.id not in seen:
                seen.add(mutant.id)
                out.append(mutant)
    return out


# ---------------------------------------------------------------------------
# application

IGNORED_NAMES = ("__pycache__", "*.pyc", ".*")


def _ignored(name: str, extra: Sequence[str] = ()) -> bool:
    return any(fnmatch.fnmatch(name, pat) for pat in (*IGNORED_NAMES, *extra))


def tree_files(root, exclude: Sequence[str] = ()) -> list[Path]:
    root = Path(root)
    out = []
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root)
        if any(_ignored(part, exclude) for part in rel.parts):
            continue
        if path.is_file():
            out.append(path)
    return out


def tree_hash(root, exclude: Sequence[str] = ()) -> str:
    """Content hash over every non-ignored file below ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    for path in tree_files(root, exclude):
        rel = path.relative_to(root).as_posix().encode("utf-8")
        data = path.read_bytes()
        h.update(len(rel).to_bytes(8, "big") + rel + len(data).to_bytes(8, "big") + data)
    return h.hexdigest()


def load_units(root, patterns: Sequence[str], registry: OperatorRegistry | None = None) -> list[SourceUnit]:
    registry = registry or default_registry()
    root = Path(root)
    paths = set()
    for pat in patterns:
        paths.update(p for p in root.glob(pat) if p.is_file())
    units = []
    for path in sorted(paths):
        rel = path.relative_to(root).as_posix()
        units.append(SourceUnit(rel, path.read_bytes().decode("utf-8"), registry.tag_for(rel)))
    return units


def apply_to_text(text: str, mutations: Iterable[Mutation]) -> str:
    for m in sorted(mutations, key=lambda m: m.start, reverse=True):
        if text[m.start : m.end] != m.original:
            raise StaleWorkspace(
                f"{m.unit_path}@{m.start}: expected {m.original!r}, found {text[m.start:m.end]!r}"
            )
        text = text[: m.start] + m.replacement + text[m.end :]
    return text


@dataclass
class Workspace:
    """A private, mutable copy of a project tree."""

    root: Path
    _saved: dict = field(default_factory=dict)

    @classmethod
    def copy_of(cls, source, dest, exclude: Sequence[str] = ()) -> "Workspace":
        dest = Path(dest)
        shutil.copytree(
            source,
            dest,
            ignore=lambda d, names: [n for n in names if _ignored(n, exclude)],
        )
        return cls(dest)

    def read(self, rel: str) -> str:
        return (self.root / rel).read_bytes().decode("utf-8")

    def write(self, rel: str, text: str) -> None:
        (self.root / rel).write_bytes(text.encode("utf-8"))


def _by_unit(mutant: Mutant) -> dict[str, list[Mutation]]:
    groups: dict[str, list[Mutation]] = {}
    for m in mutant.mutations:
        groups.setdefault(m.unit_path, []).append(m)
    return groups


def apply_mutant(workspace: Workspace, mutant: Mutant) -> Workspace:
    """Patch ``workspace`` in place; raises StaleWorkspace before writing anything."""
    if workspace._saved:
        raise StaleWorkspace("another mutant is still applied")
    patched = {}
    originals = {}
    for rel, muts in _by_unit(mutant).items():
        try:
            text = workspace.read(rel)
        except FileNotFoundError:
            raise StaleWorkspace(f"{rel} missing from workspace") from None
        originals[rel] = text
        patched[rel] = apply_to_text(text, muts)
    for rel, text in patched.items():
        workspace.write(rel, text)
    workspace._saved = originals
    return workspace


def revert_mutant(workspace: Workspace) -> Workspace:
    for rel, text in workspace._saved.items():
        workspace.write(rel, text)
    workspace._saved = {}
    return workspace
