import json
import subprocess
import sys
from math import comb

import pytest
from hypothesis import given, strategies as st

from softentropy import mutagen
from softentropy.mutagen import (
    Mutant,
    Mutation,
    SourceUnit,
    StaleWorkspace,
    UnknownLanguageTag,
    UnparsableSource,
    Workspace,
    apply_mutant,
    apply_to_text,
    compose_mutants,
    enumerate_all,
    enumerate_mutations,
    load_units,
    revert_mutant,
    tree_hash,
)

from conftest import FIXTURE

# Counted by tools/count_sites.py, a regex-only counter that shares no code
# with the enumerator, before the enumerator existed.
TRIANGLE_SITE_COUNT = 52
SORTING_SITE_COUNT = 24


def toy(text, path="f.toy"):
    return SourceUnit(path, text, "toy")


def fixture_units():
    return load_units(FIXTURE, ["src/*.toy"])


def test_source_unit_sizes():
    u = toy("a\nbc\n")
    assert u.char_count == 5 and u.line_count == 2


def test_single_arithmetic_site():
    muts = enumerate_mutations(SourceUnit("f.txt", "a + b", "text"))
    assert [(m.original, m.replacement, m.start, m.end) for m in muts] == [("+", "-", 2, 3)]


def test_relational_and_literal_sites():
    muts = enumerate_mutations(toy("fn f(x) { return x == 0; }"))
    assert sorted((m.original, m.replacement) for m in muts) == [("0", "1"), ("==", "!=")]


def test_literal_rules_skip_self_maps():
    muts = enumerate_mutations(toy("fn f() { return 0 + 5; }"))
    lits = sorted((m.original, m.replacement) for m in muts if m.operator == "num_perturb")
    assert lits == [("0", "1"), ("5", "0"), ("5", "6")]


def test_fixture_counts_match_regex_oracle():
    by_path = {u.path: u for u in fixture_units()}
    assert len(enumerate_mutations(by_path["src/triangle.toy"])) == TRIANGLE_SITE_COUNT
    assert len(enumerate_mutations(by_path["src/sorting.toy"])) == SORTING_SITE_COUNT


def test_grammar_mode_skips_comments_and_strings():
    unit = toy('# a + b\nfn f() { let s = "x < y"; return 1; }\n')
    muts = enumerate_mutations(unit)
    assert all(m.original == "1" for m in muts)


def test_token_mode_may_touch_comments():
    unit = SourceUnit("f.txt", "# a + b\n", "text")
    assert [m.original for m in enumerate_mutations(unit)] == ["+"]


def test_unary_minus_is_a_negation_site():
    muts = enumerate_mutations(toy("fn f(a) { return -a - 1; }"))
    first = [m for m in muts if m.start == 17]
    assert [(m.operator, m.replacement) for m in first] == [("neg_drop", "")]
    second = [m for m in muts if m.original == "-" and m.start != 17]
    assert [(m.operator, m.replacement) for m in second] == [("arith_swap", "+")]


def test_logical_connectives_and_booleans():
    muts = enumerate_mutations(toy("fn f(a) { return not a and true; }"))
    assert sorted((m.original, m.replacement) for m in muts) == [("and", "or"), ("not", ""), ("true", "false")]


def test_enumeration_order_and_invariants():
    for unit in fixture_units():
        muts = enumerate_mutations(unit)
        assert muts == sorted(muts, key=lambda m: (m.start, m.operator, m.replacement))
        assert len({m.key for m in muts}) == len(muts)
        for m in muts:
            assert m.end > m.start
            assert unit.text[m.start:m.end] == m.original
            assert m.replacement != m.original


def test_unparsable_source_and_unknown_tag():
    with pytest.raises(UnparsableSource):
        enumerate_mutations(toy("fn f( { "))
    with pytest.raises(UnknownLanguageTag):
        enumerate_mutations(SourceUnit("f.x", "a + b", "cobol"))


def _three_disjoint():
    return enumerate_mutations(SourceUnit("f.txt", "a + b * c < d", "text"))


def test_compose_counts():
    muts = _three_disjoint()
    assert len(muts) == 3
    assert len(compose_mutants(muts, 1, 100)) == 3
    assert len(compose_mutants(muts, 2, 100)) == 3 + comb(3, 2)
    assert compose_mutants([], 2, 100) == []


def test_overlapping_mutations_never_pair():
    a = Mutation("f", 0, 2, "<", "rel_swap", "<=")
    b = Mutation("f", 1, 2, "", "x", "=")
    out = compose_mutants([a, b], 2, 100)
    assert len(out) == 2 and all(m.order == 1 for m in out)


def test_compose_is_seeded_and_capped():
    muts = enumerate_all(fixture_units())
    a = compose_mutants(muts, 2, 120, seed=5)
    b = compose_mutants(muts, 2, 120, seed=5)
    c = compose_mutants(muts, 2, 120, seed=6)
    assert [m.id for m in a] == [m.id for m in b]
    assert [m.id for m in a] != [m.id for m in c]
    assert len(a) == 120 and len({m.id for m in a}) == 120
    assert [m.order for m in a[: len(muts)]] == [1] * len(muts)
    for m in a:
        assert not any(x.overlaps(y) for i, x in enumerate(m.mutations) for y in m.mutations[i + 1:])


def test_order_one_completeness():
    muts = enumerate_all(fixture_units())
    out = compose_mutants(muts, 1, len(muts))
    assert sorted(m.mutations[0].key for m in out) == sorted(m.key for m in muts)


def test_order_one_sampled_when_over_cap():
    muts = enumerate_all(fixture_units())
    out = compose_mutants(muts, 1, 10, seed=1)
    assert len(out) == 10 and {m.mutations[0].key for m in out} <= {m.key for m in muts}


def test_mutant_ids_are_stable_across_processes():
    code = (
        "from softentropy import mutagen;"
        f"u = mutagen.load_units({str(FIXTURE)!r}, ['src/*.toy']);"
        "print(' '.join(m.id for m in mutagen.compose_mutants(mutagen.enumerate_all(u), 2, 90, 3)))"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    here = compose_mutants(enumerate_all(fixture_units()), 2, 90, 3)
    assert out.stdout.split() == [m.id for m in here]


def test_mutant_id_ignores_mutation_order():
    muts = _three_disjoint()
    assert Mutant.of(muts).id == Mutant.of(muts[::-1]).id
    assert mutagen.mutant_id(muts) == Mutant.of(muts).id
    assert len(Mutant.of(muts).id) == 16


def test_mutant_json_round_trip():
    m = Mutant.of(_three_disjoint()[:2])
    assert Mutant.from_json(json.loads(json.dumps(m.to_json()))) == m


def test_apply_example():
    m = Mutant.of([Mutation("f.txt", 2, 3, "-", "arith_swap", "+")])
    assert apply_to_text("a + b", m.mutations) == "a - b"


def test_apply_revert_round_trip_on_fixture(fixture_copy):
    before = tree_hash(fixture_copy)
    ws = Workspace(fixture_copy)
    for m in compose_mutants(enumerate_all(fixture_units()), 2, 150, seed=2):
        apply_mutant(ws, m)
        for mu in m.mutations:
            assert mu.replacement in ws.read(mu.unit_path)
        revert_mutant(ws)
    assert tree_hash(fixture_copy) == before


def test_stale_workspace(fixture_copy):
    ws = Workspace(fixture_copy)
    m = compose_mutants(enumerate_all(fixture_units()), 1, 1)[0]
    path = fixture_copy / m.mutations[0].unit_path
    path.write_text("\n\n" + path.read_text())
    with pytest.raises(StaleWorkspace):
        apply_mutant(ws, m)


def test_stale_check_happens_before_any_write(fixture_copy):
    units = fixture_units()
    a = enumerate_mutations(next(u for u in units if u.path == "src/sorting.toy"))[0]
    b = enumerate_mutations(next(u for u in units if u.path == "src/triangle.toy"))[0]
    stale = Mutation(b.unit_path, b.start, b.end, b.replacement, b.operator, "???"[: b.end - b.start])
    before = tree_hash(fixture_copy)
    with pytest.raises(StaleWorkspace):
        apply_mutant(Workspace(fixture_copy), Mutant.of([a, stale]))
    assert tree_hash(fixture_copy) == before


@given(st.text(alphabet="ab+-*/<>= 01", max_size=30))
def test_token_mode_round_trip(text):
    unit = SourceUnit("t.txt", text, "text")
    for m in enumerate_mutations(unit):
        patched = apply_to_text(text, [m])
        restored = patched[: m.start] + m.original + patched[m.start + len(m.replacement):]
        assert restored == text


def test_registry_from_config(tmp_path):
    cfg = {
        "languages": {
            "mini": {
                "mode": "token",
                "extensions": [".mini"],
                "operators": [
                    {"name": "swap_plus", "pattern_class": "binary-arithmetic-op", "table": {"+": ["-"]}}
                ],
            }
        }
    }
    path = tmp_path / "ops.json"
    path.write_text(json.dumps(cfg))
    reg = mutagen.load_registry(path)
    assert reg.tag_for("x.mini") == "mini"
    muts = enumerate_mutations(SourceUnit("x.mini", "a + b - c", "mini"), reg)
    assert [(m.original, m.replacement) for m in muts] == [("+", "-")]


def test_registry_rejects_self_map(tmp_path):
    with pytest.raises(mutagen.RegistryError):
        mutagen.MutationOperator("bad", "relational-op", {"<": ("<",)})
