import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from softentropy import _accel, kernels

needs_numba = pytest.mark.skipif(kernels.prefix_survivor_counts_numba is None, reason="numba disabled")

codes_st = st.tuples(st.integers(0, 12), st.integers(0, 6)).flatmap(
    lambda s: hnp.arrays(np.int8, s, elements=st.integers(0, 2))
)


def _brute_prefix(codes, order):
    n, _ = codes.shape
    lower, upper = [], []
    for i in range(len(order) + 1):
        cols = list(order[:i])
        sub = codes[:, cols]
        killed = (sub == kernels.FAIL).any(axis=1)
        confirmed = (sub == kernels.PASS).all(axis=1)
        lower.append(int(confirmed.sum()))
        upper.append(int((~killed).sum()))
    return lower, upper


@given(codes_st, st.randoms(use_true_random=False))
def test_prefix_counts_all_backends_match_brute_force(codes, rnd):
    order = list(range(codes.shape[1]))
    rnd.shuffle(order)
    order = np.array(order, dtype=np.int64)
    expect = _brute_prefix(codes, order)
    for fn in (kernels._prefix_survivor_counts_loop, kernels.prefix_survivor_counts_numpy):
        lo, up = fn(codes, order)
        assert list(lo) == expect[0] and list(up) == expect[1]


@given(codes_st)
def test_unique_killer_backends_agree(codes):
    ref = kernels._unique_killer_loop(codes)
    assert np.array_equal(kernels.unique_killer_numpy(codes), ref)
    for r in range(codes.shape[0]):
        row = codes[r]
        fails = np.flatnonzero(row == kernels.FAIL)
        ok = len(fails) == 1 and np.all(np.delete(row, fails) == kernels.PASS)
        assert ref[r] == (fails[0] if ok else -1)


edges_st = st.integers(1, 30).flatmap(
    lambda n: st.tuples(
        st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40)
    )
)


@given(edges_st)
def test_component_labels_backends_agree(data):
    n, edges = data
    src = np.array([a for a, _ in edges], dtype=np.int64)
    dst = np.array([b for _, b in edges], dtype=np.int64)
    ref = kernels._label_components_loop(n, src, dst)
    assert np.array_equal(kernels.label_components_numpy(n, src, dst), ref)
    # the label of each component is its smallest member
    for i in range(n):
        assert ref[i] <= i and ref[ref[i]] == ref[i]


programs_st = st.integers(1, 6).flatmap(
    lambda L: hnp.arrays(np.int64, st.tuples(st.integers(0, 20), st.just(L)), elements=st.integers(1, 7))
)


@given(programs_st, st.lists(st.integers(-5, 20), min_size=1, max_size=4), st.integers(2, 11))
def test_stack_outputs_backends_agree(programs, inputs, modulus):
    inputs = np.array(inputs, dtype=np.int64)
    ref = kernels._stack_outputs_loop(programs, inputs, modulus)
    assert np.array_equal(kernels.stack_outputs_numpy(programs, inputs, modulus), ref)


def test_stack_machine_examples():
    progs = np.array([[2, 3], [1, 1], [3, 1], [5, 4]], dtype=np.int64)
    out = kernels.stack_outputs(progs, [3], 7)
    # DUP ADD doubles, INC INC adds two, ADD underflows, PUSH1 MUL multiplies by one
    assert out[:, 0].tolist() == [6, 5, kernels.INVALID_OUTPUT, 3]


@needs_numba
@given(codes_st)
def test_numba_matches_numpy(codes):
    order = np.arange(codes.shape[1], dtype=np.int64)
    a = kernels.prefix_survivor_counts_numba(codes, order)
    b = kernels.prefix_survivor_counts_numpy(codes, order)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.array_equal(kernels.unique_killer_numba(codes), kernels.unique_killer_numpy(codes))


@needs_numba
def test_numba_graph_and_stack_match_numpy():
    rng = np.random.default_rng(3)
    src = rng.integers(0, 50, 60)
    dst = rng.integers(0, 50, 60)
    assert np.array_equal(
        kernels.label_components_numba(50, src, dst), kernels.label_components_numpy(50, src, dst)
    )
    progs = rng.integers(1, 8, (200, 5))
    inputs = np.arange(4, dtype=np.int64)
    assert np.array_equal(
        kernels.stack_outputs_numba(progs, inputs, 7), kernels.stack_outputs_numpy(progs, inputs, 7)
    )


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, **{_accel.ENV_FLAG: "1"})
    out = subprocess.run(
        [sys.executable, "-c", "from softentropy import _accel, kernels; "
         "print(_accel.BACKEND, kernels.unique_killer_numba is None)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split() == ["numpy", "True"]


def test_empty_inputs():
    codes = np.zeros((0, 3), dtype=np.int8)
    lo, up = kernels.prefix_survivor_counts(codes, [0, 1, 2])
    assert lo.tolist() == [0, 0, 0, 0] and up.tolist() == [0, 0, 0, 0]
    assert kernels.label_components(0, [], []).tolist() == []


def test_benchmark_script_runs():
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run([sys.executable, str(script), "--scale", "0.01", "--repeat", "1"],
                         capture_output=True, text=True, check=True)
    assert "stack_outputs" in out.stdout
