"""Hot numeric loops, each with a numba kernel and a pure-numpy twin.

The public names at the bottom of the module are bound to whichever backend
:mod:`softentropy._accel` selected. Both implementations stay importable as
``<name>_numba`` / ``<name>_numpy`` so tests and the benchmark can compare them.

Outcome codes used in kill-matrix arrays are defined here because the kernels
branch on them.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

PASS = 0
FAIL = 1
TIMEOUT = 2
ERROR = 3
MISSING = 4

# stack-machine opcodes; symbols >= OP_PUSH_BASE + 1 push (symbol - OP_PUSH_BASE)
OP_INC = 1
OP_DUP = 2
OP_ADD = 3
OP_MUL = 4
OP_PUSH_BASE = 4
INVALID_OUTPUT = -1


# ---------------------------------------------------------------------------
# prefix survivor counts


def _prefix_survivor_counts_loop(codes, order):
    n = codes.shape[0]
    m = order.shape[0]
    lower_hist = np.zeros(m + 1, dtype=np.int64)
    upper_hist = np.zeros(m + 1, dtype=np.int64)
    for r in range(n):
        first_fail = m
        first_timeout = m
        for i in range(m):
            c = codes[r, order[i]]
            if c == 1:
                first_fail = i
                break
            if c == 2 and first_timeout == m:
                first_timeout = i
        upper_hist[first_fail] += 1
        lower_hist[min(first_fail, first_timeout)] += 1
    lower = np.zeros(m + 1, dtype=np.int64)
    upper = np.zeros(m + 1, dtype=np.int64)
    acc_lo = 0
    acc_up = 0
    for j in range(m, -1, -1):
        acc_lo += lower_hist[j]
        acc_up += upper_hist[j]
        lower[j] = acc_lo
        upper[j] = acc_up
    return lower, upper


def _first_index(mask: np.ndarray, default: int) -> np.ndarray:
    if mask.shape[1] == 0:
        return np.full(mask.shape[0], default, dtype=np.int64)
    hit = mask.any(axis=1)
    return np.where(hit, mask.argmax(axis=1), default)


def prefix_survivor_counts_numpy(codes: np.ndarray, order: np.ndarray):
    """Survivor counts for every prefix of ``order``.

    Returns ``(lower, upper)``, each of length ``len(order) + 1``; entry ``j``
    counts mutants surviving the first ``j`` tests, without (lower) and with
    (upper) the mutants whose only non-pass outcomes are timeouts.
    """
    m = len(order)
    cols = codes[:, order]
    first_fail = _first_index(cols == FAIL, m)
    first_timeout = _first_index(cols == TIMEOUT, m)
    upper_hist = np.bincount(first_fail, minlength=m + 1)
    lower_hist = np.bincount(np.minimum(first_fail, first_timeout), minlength=m + 1)
    lower = np.cumsum(lower_hist[::-1])[::-1].astype(np.int64)
    upper = np.cumsum(upper_hist[::-1])[::-1].astype(np.int64)
    return lower, upper


# ---------------------------------------------------------------------------
# unique killers


def _unique_killer_loop(codes):
    n, m = codes.shape
    out = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        killer = -1
        ok = True
        for i in range(m):
            c = codes[r, i]
            if c == 1:
                if killer >= 0:
                    ok = False
                    break
                killer = i
            elif c != 0:
                ok = False
                break
        if ok:
            out[r] = killer
    return out


def unique_killer_numpy(codes: np.ndarray) -> np.ndarray:
    """Index of the only failing test per row, or -1.

    A row qualifies when it has exactly one FAIL and PASS everywhere else, so
    a timeout on any other test disqualifies it.
    """
    m = codes.shape[1]
    fails = codes == FAIL
    n_fail = fails.sum(axis=1)
    n_pass = (codes == PASS).sum(axis=1)
    unique = (n_fail == 1) & (n_pass == m - 1)
    return np.where(unique, _first_index(fails, -1), -1).astype(np.int64)


# ---------------------------------------------------------------------------
# connected components


def _label_components_loop(n, src, dst):
    parent = np.arange(n, dtype=np.int64)
    for e in range(src.shape[0]):
        a = src[e]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = dst[e]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a < b:
            parent[b] = a
        elif b < a:
            parent[a] = b
    for v in range(n):
        r = v
        while parent[r] != r:
            r = parent[r]
        parent[v] = r
    return parent


def label_components_numpy(n: int, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Component label per node; the label is the smallest node index in it."""
    labels = np.arange(n, dtype=np.int64)
    if n == 0 or len(src) == 0:
        return labels
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    while True:
        new = labels.copy()
        np.minimum.at(new, src, labels[dst])
        np.minimum.at(new, dst, labels[src])
        new = new[new]
        if np.array_equal(new, labels):
            return labels
        labels = new


# ---------------------------------------------------------------------------
# toy stack machine


def _stack_outputs_loop(programs, inputs, modulus):
    n, length = programs.shape
    k = inputs.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    stack = np.empty(length + 1, dtype=np.int64)
    for r in range(n):
        for q in range(k):
            stack[0] = inputs[q] % modulus
            sp = 1
            valid = True
            for j in range(length):
                op = programs[r, j]
                if op == 1:
                    stack[sp - 1] = (stack[sp - 1] + 1) % modulus
                elif op == 2:
                    stack[sp] = stack[sp - 1]
                    sp += 1
                elif op == 3 or op == 4:
                    if sp < 2:
                        valid = False
                        break
                    if op == 3:
                        stack[sp - 2] = (stack[sp - 2] + stack[sp - 1]) % modulus
                    else:
                        stack[sp - 2] = (stack[sp - 2] * stack[sp - 1]) % modulus
                    sp -= 1
                else:
                    stack[sp] = (op - 4) % modulus
                    sp += 1
            out[r, q] = stack[sp - 1] if valid else -1
    return out


def stack_outputs_numpy(programs: np.ndarray, inputs: np.ndarray, modulus: int) -> np.ndarray:
    """Run every program on every input; returns ``(n_programs, n_inputs)``.

    Programs are rows of opcodes. The stack starts as ``[x]``; INC and DUP act
    on the top, ADD and MUL pop two and push one, larger symbols push a
    constant. Arithmetic is mod ``modulus``. Underflow yields ``-1``.
    """
    programs = np.asarray(programs, dtype=np.int64)
    inputs = np.asarray(inputs, dtype=np.int64)
    n, length = programs.shape
    rows = np.arange(n)
    out = np.empty((n, len(inputs)), dtype=np.int64)
    for q, x in enumerate(inputs):
        stack = np.zeros((n, length + 1), dtype=np.int64)
        stack[:, 0] = x % modulus
        sp = np.ones(n, dtype=np.int64)
        valid = np.ones(n, dtype=bool)
        for j in range(length):
            op = programs[:, j]
            top = stack[rows, sp - 1]
            inc = valid & (op == OP_INC)
            stack[rows[inc], sp[inc] - 1] = (top[inc] + 1) % modulus
            push = valid & ((op == OP_DUP) | (op > OP_PUSH_BASE))
            pushed = np.where(op == OP_DUP, top, (op - OP_PUSH_BASE) % modulus)
            stack[rows[push], sp[push]] = pushed[push]
            binop = valid & ((op == OP_ADD) | (op == OP_MUL))
            valid &= ~(binop & (sp < 2))
            binop &= valid
            r = rows[binop]
            a = stack[r, sp[binop] - 2]
            b = stack[r, sp[binop] - 1]
            stack[r, sp[binop] - 2] = np.where(op[binop] == OP_ADD, a + b, a * b) % modulus
            sp = sp + push.astype(np.int64) - binop.astype(np.int64)
        out[:, q] = np.where(valid, stack[rows, sp - 1], INVALID_OUTPUT)
    return out


# ---------------------------------------------------------------------------
# backend binding

prefix_survivor_counts_numba = njit(_prefix_survivor_counts_loop)
unique_killer_numba = njit(_unique_killer_loop)
label_components_numba = njit(_label_components_loop)
stack_outputs_numba = njit(_stack_outputs_loop)


def _pick(fast, slow):
    return fast if HAVE_NUMBA and fast is not None else slow


def prefix_survivor_counts(codes: np.ndarray, order) -> tuple[np.ndarray, np.ndarray]:
    fn = _pick(prefix_survivor_counts_numba, prefix_survivor_counts_numpy)
    return fn(np.ascontiguousarray(codes, dtype=np.int8), np.asarray(order, dtype=np.int64))


def unique_killer(codes: np.ndarray) -> np.ndarray:
    fn = _pick(unique_killer_numba, unique_killer_numpy)
    return fn(np.ascontiguousarray(codes, dtype=np.int8))


def label_components(n: int, src, dst) -> np.ndarray:
    fn = _pick(label_components_numba, label_components_numpy)
    return fn(int(n), np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64))


def stack_outputs(programs, inputs, modulus: int) -> np.ndarray:
    fn = _pick(stack_outputs_numba, stack_outputs_numpy)
    return fn(
        np.ascontiguousarray(programs, dtype=np.int64),
        np.asarray(inputs, dtype=np.int64),
        int(modulus),
    )
