"""A tiny imperative language used by the bundled fixture project.

Source files (``*.toy``) hold ``fn`` declarations; a test file holds ``test``
blocks written in the same language. The lexer doubles as the exact token
classifier for grammar-mode mutation.

Run as a module to act as the fixture's test runner::

    python -m softentropy.toylang discover ROOT
    python -m softentropy.toylang test ROOT --include=a,b --exclude=c
    python -m softentropy.toylang coverage ROOT -o coverage.json

Only the standard library is imported here; the runner is spawned once per
kill-matrix cell.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

KEYWORDS = frozenset(
    "fn test let if else while for to return true false and or not assert".split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[-+*/%<>=(){}\[\],;])
    """,
    re.VERBOSE,
)


class ToySyntaxError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ToyRuntimeError(Exception):
    pass


class StepLimitExceeded(ToyRuntimeError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # int, name, keyword, op, string, comment
    text: str
    start: int
    end: int
    line: int


def tokenize(text: str, keep_comments: bool = False) -> list[Token]:
    tokens = []
    pos = 0
    line = 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ToySyntaxError(f"unexpected character {text[pos]!r}", line)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "name" and chunk in KEYWORDS:
            kind = "keyword"
        if kind != "ws" and (kind != "comment" or keep_comments):
            tokens.append(Token(kind, chunk, m.start(), m.end(), line))
        line += chunk.count("\n")
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# AST as plain tuples: (tag, line, *fields)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self, offset: int = 0) -> Token | None:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def line(self) -> int:
        tok = self.peek()
        if tok is not None:
            return tok.line
        return self.toks[-1].line if self.toks else 1

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text and tok.kind in ("op", "keyword")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            tok = self.peek()
            got = tok.text if tok else "end of file"
            raise ToySyntaxError(f"expected {text!r}, got {got!r}", self.line())
        self.i += 1
        return self.toks[self.i - 1]

    def name(self) -> str:
        tok = self.peek()
        if tok is None or tok.kind != "name":
            raise ToySyntaxError("expected identifier", self.line())
        self.i += 1
        return tok.text

    def module(self):
        functions, tests = {}, []
        while self.peek() is not None:
            line = self.line()
            if self.at("fn"):
                self.i += 1
                fname = self.name()
                self.expect("(")
                params = []
                while not self.at(")"):
                    params.append(self.name())
                    if not self.at(")"):
                        self.expect(",")
                self.expect(")")
                functions[fname] = (params, self.block())
            elif self.at("test"):
                self.i += 1
                tests.append((self.name(), self.block(), line))
            else:
                raise ToySyntaxError("expected 'fn' or 'test'", line)
        return functions, tests

    def block(self):
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek() is None:
                raise ToySyntaxError("unterminated block", self.line())
            body.append(self.statement())
        self.expect("}")
        return body

    def statement(self):
        line = self.line()
        if self.at("let"):
            self.i += 1
            target = self.name()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return ("let", line, target, value)
        if self.at("if"):
            return self.if_statement()
        if self.at("while"):
            self.i += 1
            cond = self.expr()
            return ("while", line, cond, self.block())
        if self.at("for"):
            self.i += 1
            var = self.name()
            self.expect("=")
            lo = self.expr()
            self.expect("to")
            hi = self.expr()
            return ("for", line, var, lo, hi, self.block())
        if self.at("return"):
            self.i += 1
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return ("return", line, value)
        if self.at("assert"):
            self.i += 1
            cond = self.expr()
            message = None
            if self.at(","):
                self.i += 1
                tok = self.peek()
                if tok is None or tok.kind != "string":
                    raise ToySyntaxError("expected message string", line)
                self.i += 1
                message = tok.text[1:-1]
            self.expect(";")
            return ("assert", line, cond, message)
        expr = self.expr()
        if self.at("="):
            self.i += 1
            value = self.expr()
            self.expect(";")
            if expr[0] == "var":
                return ("assign", line, expr[2], value)
            if expr[0] == "index":
                return ("setitem", line, expr[2], expr[3], value)
            raise ToySyntaxError("invalid assignment target", line)
        self.expect(";")
        return ("expr", line, expr)

    def if_statement(self):
        line = self.line()
        self.expect("if")
        cond = self.expr()
        body = self.block()
        orelse = []
        if self.at("else"):
            self.i += 1
            orelse = [self.if_statement()] if self.at("if") else self.block()
        return ("if", line, cond, body, orelse)

    def expr(self):
        return self.binary(0)

    _LEVELS = (("or",), ("and",), None, ("<", "<=", ">", ">=", "==", "!="), ("+", "-"), ("*", "/", "%"))

    def binary(self, level: int):
        if level == len(self._LEVELS):
            return self.unary()
        ops = self._LEVELS[level]
        if ops is None:  # prefix 'not' sits between 'and' and comparisons
            if self.at("not"):
                line = self.line()
                self.i += 1
                return ("not", line, self.binary(level))
            return self.binary(level + 1)
        left = self.binary(level + 1)
        while True:
            tok = self.peek()
            if tok is None or tok.kind not in ("op", "keyword") or tok.text not in ops:
                return left
            self.i += 1
            right = self.binary(level + 1)
            left = ("bin", tok.line, tok.text, left, right)
            if level == 3:  # comparisons do not chain
                return left

    def unary(self):
        if self.at("-"):
            line = self.line()
            self.i += 1
            return ("neg", line, self.unary())
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while self.at("["):
            line = self.line()
            self.i += 1
            idx = self.expr()
            self.expect("]")
            node = ("index", line, node, idx)
        return node

    def primary(self):
        tok = self.peek()
        if tok is None:
            raise ToySyntaxError("unexpected end of file", self.line())
        line = tok.line
        if tok.kind == "int":
            self.i += 1
            return ("const", line, int(tok.text))
        if tok.kind == "string":
            self.i += 1
            return ("const", line, tok.text[1:-1])
        if tok.text in ("true", "false") and tok.kind == "keyword":
            self.i += 1
            return ("const", line, tok.text == "true")
        if tok.kind == "name":
            self.i += 1
            if self.at("("):
                self.i += 1
                args = []
                while not self.at(")"):
                    args.append(self.expr())
                    if not self.at(")"):
                        self.expect(",")
                self.expect(")")
                return ("call", line, tok.text, args)
            return ("var", line, tok.text)
        if self.at("("):
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        if self.at("["):
            self.i += 1
            items = []
            while not self.at("]"):
                items.append(self.expr())
                if not self.at("]"):
                    self.expect(",")
            self.expect("]")
            return ("list", line, items)
        raise ToySyntaxError(f"unexpected token {tok.text!r}", line)


def parse(text: str):
    """Parse a module; returns ``(functions, tests)``."""
    return _Parser(tokenize(text)).module()


# ---------------------------------------------------------------------------
# interpreter


class _Return(Exception):
    def __init__(self, value):
        self.value = value


MAX_CALL_DEPTH = 200


def _as_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ToyRuntimeError(f"{what} expects an integer, got {value!r}")
    return value


def _builtin_len(args):
    if not isinstance(args[0], (list, str)):
        raise ToyRuntimeError("len expects a list")
    return len(args[0])


def _builtin_copy(args):
    if not isinstance(args[0], list):
        raise ToyRuntimeError("copy expects a list")
    return list(args[0])


def _builtin_array(args):
    return [args[1]] * _as_int(args[0], "array")


BUILTINS = {"len": (1, _builtin_len), "copy": (1, _builtin_copy), "array": (2, _builtin_array)}


@dataclass
class Interpreter:
    """Tree-walking evaluator.

    ``functions`` maps names to ``(params, body, unit_path)``. Executed lines
    are recorded per unit in ``covered`` when ``track_coverage`` is set.
    """

    functions: dict
    max_steps: int | None = None
    track_coverage: bool = False
    covered: dict = field(default_factory=dict)
    steps: int = 0
    _unit: str | None = None

    def _tick(self, line: int):
        self.steps += 1
        if self.max_steps is not None and self.steps > self.max_steps:
            raise StepLimitExceeded("step limit exceeded")
        if self.track_coverage and self._unit is not None:
            self.covered.setdefault(self._unit, set()).add(line)

    def call(self, name: str, args: list, depth: int = 0):
        if name in BUILTINS:
            arity, fn = BUILTINS[name]
            if len(args) != arity:
                raise ToyRuntimeError(f"{name} takes {arity} arguments")
            return fn(args)
        if name not in self.functions:
            raise ToyRuntimeError(f"unknown function {name!r}")
        if depth > MAX_CALL_DEPTH:
            raise ToyRuntimeError("call depth exceeded")
        params, body, unit = self.functions[name]
        if len(args) != len(params):
            raise ToyRuntimeError(f"{name} takes {len(params)} arguments")
        saved = self._unit
        self._unit = unit
        try:
            self.block(body, dict(zip(params, args)), depth)
        except _Return as ret:
            return ret.value
        finally:
            self._unit = saved
        return None

    def run_test(self, body, unit: str | None = None):
        self._unit = unit
        try:
            self.block(body, {}, 0)
        except _Return:
            pass

    def block(self, body, env, depth):
        for stmt in body:
            self.statement(stmt, env, depth)

    def statement(self, stmt, env, depth):
        tag, line = stmt[0], stmt[1]
        self._tick(line)
        if tag == "let":
            env[stmt[2]] = self.eval(stmt[3], env, depth)
        elif tag == "assign":
            if stmt[2] not in env:
                raise ToyRuntimeError(f"assignment to undeclared {stmt[2]!r}")
            env[stmt[2]] = self.eval(stmt[3], env, depth)
        elif tag == "setitem":
            seq = self.eval(stmt[2], env, depth)
            idx = self.eval(stmt[3], env, depth)
            self._check_index(seq, idx)
            seq[idx] = self.eval(stmt[4], env, depth)
        elif tag == "if":
            if self._truth(self.eval(stmt[2], env, depth)):
                self.block(stmt[3], env, depth)
            else:
                self.block(stmt[4], env, depth)
        elif tag == "while":
            while self._truth(self.eval(stmt[2], env, depth)):
                self.block(stmt[3], env, depth)
                self._tick(line)
        elif tag == "for":
            lo = _as_int(self.eval(stmt[3], env, depth), "for")
            hi = _as_int(self.eval(stmt[4], env, depth), "for")
            for value in range(lo, hi):
                env[stmt[2]] = value
                self.block(stmt[5], env, depth)
        elif tag == "return":
            raise _Return(None if stmt[2] is None else self.eval(stmt[2], env, depth))
        elif tag == "assert":
            if not self._truth(self.eval(stmt[2], env, depth)):
                raise AssertionError(stmt[3] or f"assertion failed at line {line}")
        else:
            self.eval(stmt[2], env, depth)

    @staticmethod
    def _truth(value) -> bool:
        if not isinstance(value, bool):
            raise ToyRuntimeError(f"condition must be boolean, got {value!r}")
        return value

    @staticmethod
    def _check_index(seq, idx):
        if not isinstance(seq, list):
            raise ToyRuntimeError("indexing a non-list")
        _as_int(idx, "index")
        if not 0 <= idx < len(seq):
            raise ToyRuntimeError(f"index {idx} out of range")

    def eval(self, node, env, depth):
        tag = node[0]
        if tag == "const":
            return node[2]
        if tag == "var":
            try:
                return env[node[2]]
            except KeyError:
                raise ToyRuntimeError(f"undefined variable {node[2]!r}") from None
        if tag == "list":
            return [self.eval(item, env, depth) for item in node[2]]
        if tag == "index":
            seq = self.eval(node[2], env, depth)
            idx = self.eval(node[3], env, depth)
            self._check_index(seq, idx)
            return seq[idx]
        if tag == "call":
            args = [self.eval(a, env, depth) for a in node[3]]
            return self.call(node[2], args, depth + 1)
        if tag == "neg":
            return -_as_int(self.eval(node[2], env, depth), "negation")
        if tag == "not":
            return not self._truth(self.eval(node[2], env, depth))
        op = node[2]
        if op == "and":
            return self._truth(self.eval(node[3], env, depth)) and self._truth(
                self.eval(node[4], env, depth)
            )
        if op == "or":
            return self._truth(self.eval(node[3], env, depth)) or self._truth(
                self.eval(node[4], env, depth)
            )
        left = self.eval(node[3], env, depth)
        right = self.eval(node[4], env, depth)
        if op == "==":
            return left == right and type(left) is type(right)
        if op == "!=":
            return not (left == right and type(left) is type(right))
        a, b = _as_int(left, op), _as_int(right, op)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op in ("/", "%"):
            if b == 0:
                raise ToyRuntimeError("division by zero")
            q = abs(a) // abs(b) * (1 if (a < 0) == (b < 0) else -1)
            return q if op == "/" else a - b * q
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


# ---------------------------------------------------------------------------
# project loading and the runner CLI

TEST_FILE = "tests.toyt"


@dataclass
class ToyProject:
    root: Path
    functions: dict
    tests: list  # (name, body, line)
    units: dict  # relative path -> text

    @classmethod
    def load(cls, root) -> "ToyProject":
        root = Path(root)
        functions, units = {}, {}
        for path in sorted(root.rglob("*.toy")):
            rel = path.relative_to(root).as_posix()
            text = path.read_bytes().decode("utf-8")
            units[rel] = text
            fns, _ = parse(text)
            for name, (params, body) in fns.items():
                functions[name] = (params, body, rel)
        test_path = root / TEST_FILE
        tests = []
        if test_path.exists():
            extra, tests = parse(test_path.read_text(encoding="utf-8"))
            for name, (params, body) in extra.items():
                functions.setdefault(name, (params, body, None))
        names = [t[0] for t in tests]
        if len(set(names)) != len(names):
            raise ToySyntaxError("duplicate test name", 1)
        return cls(root, functions, tests, units)

    def run(self, name: str, max_steps: int | None = None, track_coverage: bool = False):
        """Run one test in-process; returns ``(passed, message, interpreter)``."""
        body = next(t[1] for t in self.tests if t[0] == name)
        interp = Interpreter(self.functions, max_steps=max_steps, track_coverage=track_coverage)
        try:
            interp.run_test(body)
        except StepLimitExceeded:
            raise
        except (AssertionError, ToyRuntimeError) as exc:
            return False, str(exc), interp
        except RecursionError:
            return False, "recursion limit", interp
        return True, "", interp


def executable_lines(text: str) -> set[int]:
    """Lines holding at least one statement inside a function body."""
    lines = set()

    def walk(body):
        for stmt in body:
            lines.add(stmt[1])
            for part in stmt[2:]:
                if isinstance(part, list) and part and isinstance(part[0], tuple):
                    walk(part)

    fns, _ = parse(text)
    for _, body in fns.values():
        walk(body)
    return lines


def _split(value: str | None) -> list[str]:
    return [v for v in (value or "").split(",") if v]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m softentropy.toylang")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("discover")
    p.add_argument("root")
    p = sub.add_parser("test")
    p.add_argument("root")
    p.add_argument("--include", default="")
    p.add_argument("--exclude", default="")
    p = sub.add_parser("coverage")
    p.add_argument("root")
    p.add_argument("-o", "--output", default="-")
    args = ap.parse_args(argv)

    try:
        project = ToyProject.load(args.root)
    except ToySyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return 2
    names = [t[0] for t in project.tests]

    if args.cmd == "discover":
        for name in names:
            print(name)
        return 0

    if args.cmd == "coverage":
        return _coverage(project, names, args.output)

    include = _split(args.include) or names
    exclude = set(_split(args.exclude))
    unknown = [n for n in list(include) + sorted(exclude) if n not in names]
    if unknown:
        print(f"unknown tests: {', '.join(unknown)}", file=sys.stderr)
        return 2
    failed = 0
    ran = 0
    for name in names:
        if name not in include or name in exclude:
            continue
        ok, message, _ = project.run(name)
        ran += 1
        if ok:
            print(f"PASS {name}")
        else:
            failed += 1
            print(f"FAIL {name}: {message}")
    print(f"ran {ran} tests, {failed} failed")
    return 1 if failed else 0


def _coverage(project: ToyProject, names: list[str], output: str) -> int:
    units = []
    for path, text in sorted(project.units.items()):
        units.append(
            {
                "path": path,
                "char_count": len(text),
                "line_count": text.count("\n") + (0 if text.endswith("\n") or not text else 1),
                "executable_lines": len(executable_lines(text)),
            }
        )
    coverage = []
    for name in names:
        _, _, interp = project.run(name, track_coverage=True)
        for path in sorted(interp.covered):
            coverage.append(
                {"test_id": name, "unit_path": path, "covered_lines": sorted(interp.covered[path])}
            )
    doc = {
        "schema_version": 1,
        "provenance": {"tool": "softentropy.toylang"},
        "units": units,
        "coverage": coverage,
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    if output == "-":
        print(text)
    else:
        Path(output).write_text(text + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
