import pytest

from softentropy import harness
from softentropy.harness import (
    BrokenBaseline,
    DiscoveryFailed,
    Status,
    SuiteConfig,
    TestCase,
    discover_tests,
    limit_for,
    measure_baseline,
    run_cell,
    run_group,
    run_tests,
)
from softentropy.mutagen import Mutant, Workspace, compose_mutants, enumerate_all, load_units, tree_hash

from conftest import FIXTURE, FIXTURE_TESTS, RANK_BOUNDARY_MUTANT, hang_mutant

DISCOVER = "{python} -m softentropy.toylang discover ."
RUN = "{python} -m softentropy.toylang test . --include={include} --exclude={exclude}"


def config(root, **kw):
    return SuiteConfig(DISCOVER, RUN, root, **kw)


@pytest.fixture(scope="module")
def baselined():
    cfg = config(FIXTURE)
    return cfg, measure_baseline(cfg, discover_tests(cfg))


def fixture_mutant(mid):
    units = load_units(FIXTURE, ["src/*.toy"])
    return next(m for m in compose_mutants(enumerate_all(units), 1, 1000) if m.id == mid)


def test_config_validation():
    with pytest.raises(ValueError):
        config(FIXTURE, timeout_factor=1.0)
    with pytest.raises(ValueError):
        SuiteConfig(DISCOVER, "{python} -m x", FIXTURE)


def test_discover_fixture_in_declaration_order():
    tests = discover_tests(config(FIXTURE))
    # the fixture declares seven tests
    assert [t.id for t in tests] == FIXTURE_TESTS
    assert all(t.baseline_duration is None for t in tests)


def test_discover_empty_and_duplicates(tmp_path):
    empty = SuiteConfig("{python} -c pass", RUN, tmp_path)
    assert discover_tests(empty) == []
    dup = SuiteConfig("{python} -c \"print('a');print('b');print('a')\"", RUN, tmp_path)
    assert [t.id for t in discover_tests(dup)] == ["a", "b"]


def test_discover_failures(tmp_path):
    with pytest.raises(DiscoveryFailed):
        discover_tests(SuiteConfig("no-such-command-softentropy-xyz", RUN, tmp_path))
    with pytest.raises(DiscoveryFailed) as err:
        discover_tests(SuiteConfig("{python} -c \"print('boom');raise SystemExit(3)\"", RUN, tmp_path))
    assert "boom" in err.value.output


def test_baseline_passes_with_positive_durations(baselined):
    _, tests = baselined
    assert [t.id for t in tests] == FIXTURE_TESTS
    assert all(t.baseline_duration > 0 for t in tests)


def test_baseline_remeasure_is_stable(baselined):
    cfg, first = baselined
    again = measure_baseline(cfg, discover_tests(cfg))
    assert [t.id for t in again] == [t.id for t in first]


def test_broken_baseline_names_failing_test(fixture_copy):
    with open(fixture_copy / "tests.toyt", "a") as fh:
        fh.write("\ntest broken { assert 1 == 2; }\n")
    cfg = config(fixture_copy)
    with pytest.raises(BrokenBaseline) as err:
        measure_baseline(cfg, discover_tests(cfg))
    assert err.value.failing == ["broken"]


def test_run_cell_without_mutant_replays_baseline(baselined, fixture_copy):
    cfg, tests = baselined
    ws = Workspace(fixture_copy)
    out = run_cell(ws, None, tests, cfg)
    assert list(out) == FIXTURE_TESTS
    assert all(o.status is Status.PASS for o in out.values())


def test_boundary_mutant_fails_only_boundary_test(baselined, fixture_copy):
    cfg, tests = baselined
    ws = Workspace(fixture_copy)
    before = tree_hash(fixture_copy)
    mutant = fixture_mutant(RANK_BOUNDARY_MUTANT)
    assert [(m.original, m.replacement) for m in mutant.mutations] == [("<", "<=")]
    out = run_cell(ws, mutant, tests, cfg)
    assert {t for t, o in out.items() if o.status is Status.FAIL} == {"rank_boundary"}
    assert all(o.status is Status.PASS for t, o in out.items() if t != "rank_boundary")
    assert tree_hash(fixture_copy) == before


def test_selector_runs_exactly_one_test(baselined):
    cfg, tests = baselined
    out = run_tests(cfg, FIXTURE, [tests[2]])
    assert out.status is Status.PASS
    assert "ran 1 tests" in out.detail
    assert out.detail.count("PASS ") == 1


def test_non_terminating_mutant_times_out(baselined, fixture_copy):
    cfg, tests = baselined
    ws = Workspace(fixture_copy)
    before = tree_hash(fixture_copy)
    boundary = [t for t in tests if t.id == "rank_boundary"]
    out = run_cell(ws, hang_mutant(), boundary, cfg)["rank_boundary"]
    assert out.status is Status.TIMEOUT
    assert out.limit == limit_for(cfg, boundary)
    assert out.duration >= out.limit
    assert tree_hash(fixture_copy) == before


def test_group_limit_sums_baselines(baselined):
    cfg, tests = baselined
    total = sum(t.baseline_duration for t in tests)
    assert limit_for(cfg, tests) == max(cfg.timeout_factor * total, cfg.min_timeout)
    loose = config(FIXTURE, min_timeout=0.0)
    assert limit_for(loose, tests) == pytest.approx(loose.timeout_factor * total)


def test_run_group_with_exclusion(baselined, fixture_copy):
    cfg, tests = baselined
    ws = Workspace(fixture_copy)
    mutant = fixture_mutant(RANK_BOUNDARY_MUTANT)
    others = [t for t in tests if t.id != "rank_boundary"]
    skip = [t for t in tests if t.id == "rank_boundary"]
    assert run_group(ws, mutant, others, skip, cfg).status is Status.PASS
    assert run_group(ws, mutant, tests, [], cfg).status is Status.FAIL


def test_timeout_classification_is_by_deadline(tmp_path):
    cfg = SuiteConfig(DISCOVER, "{python} -c \"import time; time.sleep(5)\" {include}", tmp_path,
                      min_timeout=0.2)
    out = run_tests(cfg, tmp_path, [TestCase("t", "t", 0.01)], limit=0.3)
    assert out.status is Status.TIMEOUT and out.duration >= 0.3


def test_child_environment_is_scrubbed(tmp_path, monkeypatch):
    monkeypatch.setenv("SOFTENTROPY_SECRET_PROBE", "1")
    probe = "{python} -c \"import os,sys; sys.exit('SOFTENTROPY_SECRET_PROBE' in os.environ)\" {include}"
    cfg = SuiteConfig(DISCOVER, probe, tmp_path)
    assert run_tests(cfg, tmp_path, [TestCase("t", "t")]).status is Status.PASS
    allowed = SuiteConfig(DISCOVER, probe, tmp_path,
                          env_allowlist=harness.DEFAULT_ENV_ALLOWLIST + ("SOFTENTROPY_SECRET_PROBE",))
    assert run_tests(allowed, tmp_path, [TestCase("t", "t")]).status is Status.FAIL


def test_output_is_truncated(tmp_path):
    cfg = SuiteConfig(DISCOVER, "{python} -c \"print('x' * 10000)\" {include}", tmp_path, output_limit=100)
    assert len(run_tests(cfg, tmp_path, [TestCase("t", "t")]).detail) == 100


def test_missing_command_is_exec_error(tmp_path):
    cfg = SuiteConfig(DISCOVER, "no-such-command-softentropy-xyz {include}", tmp_path)
    assert run_tests(cfg, tmp_path, [TestCase("t", "t")]).status is Status.ERROR


def test_run_cell_needs_tests(baselined, fixture_copy):
    cfg, _ = baselined
    with pytest.raises(ValueError):
        run_cell(Workspace(fixture_copy), None, [], cfg)
