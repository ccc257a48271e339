"""Scalar expression language: tokenizer, precedence parser, printer, evaluators.

Grammar (highest binding first)::

    primary  := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
    power    := primary ['^' unary]          # right associative
    unary    := ('-' | '+') unary | power
    product  := unary (('*' | '/') unary)*
    expr     := product (('+' | '-') product)*

so ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  Identifiers are not
resolved at parse time; :func:`free_variables` lists them for later binding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence, Union

from . import dual as _d
from .dual import Dual, ExprDomainError

__all__ = [
    "Span",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Expr",
    "ExprSyntaxError",
    "UnboundVariableError",
    "ExprDomainError",
    "parse_expression",
    "to_source",
    "free_variables",
    "evaluate",
    "eval_dual",
    "eval_second",
    "compile_expressions",
]


class ExprSyntaxError(SyntaxError):
    def __init__(self, message: str, line: int, column: int, token: str):
        super().__init__(f"{message} at line {line}, column {column} (token {token!r})")
        self.reason = message
        self.line = line
        self.column = column
        self.token = token


class UnboundVariableError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound variable {self.name!r}"


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    length: int = 1


_NOSPAN = Span(0, 0, 0)


@dataclass(frozen=True)
class Const:
    value: float
    span: Span = field(default=_NOSPAN, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=_NOSPAN, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a name from dual.UNARY_FUNCTIONS
    arg: "Expr"
    span: Span = field(default=_NOSPAN, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"
    span: Span = field(default=_NOSPAN, compare=False)


Expr = Union[Const, Var, Unary, Binary]

FUNCTIONS = frozenset(_d.UNARY_FUNCTIONS)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    span: Span


def _tokenize(text: str, first_line: int = 1) -> Iterator[_Token]:
    pos, line, line_start = 0, first_line, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExprSyntaxError("unexpected character", line, col, text[pos])
        kind = m.lastgroup
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            yield _Token(kind, m.group(), Span(line, col, m.end() - pos))
        pos = m.end()
    yield _Token("end", "", Span(line, pos - line_start + 1, 0))


class _Parser:
    def __init__(self, text: str, first_line: int = 1):
        self.tokens = list(_tokenize(text, first_line))
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.span.line, tok.span.column, tok.text or "<end>")

    def expect(self, text: str) -> _Token:
        if self.tok.text != text:
            raise self.error(f"expected {text!r}")
        return self.advance()

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error("unexpected token")
        return node

    def expr(self) -> Expr:
        node = self.product()
        while self.tok.text in ("+", "-"):
            op = self.advance()
            node = Binary(op.text, node, self.product(), op.span)
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.advance()
            node = Binary(op.text, node, self.unary(), op.span)
        return node

    def unary(self) -> Expr:
        if self.tok.text == "-":
            op = self.advance()
            return Unary("neg", self.unary(), op.span)
        if self.tok.text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok.text == "^":
            op = self.advance()
            return Binary("^", base, self.unary(), op.span)
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Const(float(t.text), t.span)
        if t.kind == "name":
            self.advance()
            if self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise self.error("unknown function", t)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(t.text, arg, t.span)
            return Var(t.text, t.span)
        if t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("unexpected token" if t.kind != "end" else "unexpected end of input")


def parse_expression(text: str, *, line: int = 1) -> Expr:
    """Parse ``text`` into an AST.  ``line`` offsets reported error positions."""
    return _Parser(text, line).parse()


# ---------------------------------------------------------------------------
# printing / inspection

def to_source(e: Expr) -> str:
    """Canonical, fully parenthesized text that re-parses to an equivalent AST."""
    if isinstance(e, Const):
        if math.isfinite(e.value):
            return repr(e.value) if e.value >= 0 else f"(-{-e.value!r})"
        raise ValueError("non-finite constant has no source form")
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.arg)})"
        return f"{e.op}({to_source(e.arg)})"
    return f"({to_source(e.left)} {e.op} {to_source(e.right)})"


def free_variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return free_variables(e.arg)
    if isinstance(e, Binary):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset()


# ---------------------------------------------------------------------------
# evaluation

def _apply(e: Expr, env: Mapping[str, object]):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        a = _apply(e.arg, env)
        return -a if e.op == "neg" else _d.UNARY_FUNCTIONS[e.op](a)
    a = _apply(e.left, env)
    b = _apply(e.right, env)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return _d.div(a, b)
    return _d.power(a, b)


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """IEEE double evaluation.  Non-finite results are returned, not raised."""
    return float(_apply(e, {k: float(v) for k, v in bindings.items()}))


def eval_dual(e: Expr, bindings: Mapping[str, float], seed_var: str) -> tuple[float, float]:
    """Value and exact derivative with respect to ``seed_var``."""
    if seed_var not in bindings:
        raise UnboundVariableError(seed_var)
    env: dict[str, object] = {k: float(v) for k, v in bindings.items()}
    env[seed_var] = Dual(float(bindings[seed_var]), 1.0)
    r = _apply(e, env)
    if isinstance(r, Dual):
        return float(r.val), float(r.der)
    return float(r), 0.0


def eval_second(
    e: Expr, bindings: Mapping[str, float], direction: Mapping[str, float]
) -> tuple[float, float, float]:
    """Value, first and second directional derivatives along ``direction``.

    Uses nested duals, so the second derivative is ``v^T H v`` without forming H.
    """
    env: dict[str, object] = {k: float(v) for k, v in bindings.items()}
    for name, v in direction.items():
        if name not in env:
            raise UnboundVariableError(name)
        env[name] = Dual(Dual(env[name], float(v)), Dual(float(v), 0.0))
    r = _apply(e, env)
    if not isinstance(r, Dual):
        return float(r), 0.0, 0.0
    inner, outer = r.val, r.der
    val = inner.val if isinstance(inner, Dual) else inner
    d1 = inner.der if isinstance(inner, Dual) else 0.0
    d2 = outer.der if isinstance(outer, Dual) else 0.0
    return float(val), float(d1), float(d2)


# ---------------------------------------------------------------------------
# compilation to Python closures

_NAMESPACE = {
    "__builtins__": {},
    "_div": _d.div,
    "_pow": _d.power,
    **{f"_{name}": fn for name, fn in _d.UNARY_FUNCTIONS.items()},
}


def _emit(e: Expr, names: Mapping[str, str], consts: Mapping[str, float]) -> str:
    if isinstance(e, Const):
        return repr(e.value) if e.value >= 0 else f"(-{-e.value!r})"
    if isinstance(e, Var):
        if e.name in names:
            return names[e.name]
        if e.name in consts:
            c = float(consts[e.name])
            return repr(c) if c >= 0 else f"(-{-c!r})"
        raise UnboundVariableError(e.name)
    if isinstance(e, Unary):
        inner = _emit(e.arg, names, consts)
        return f"(-{inner})" if e.op == "neg" else f"_{e.op}({inner})"
    a, b = _emit(e.left, names, consts), _emit(e.right, names, consts)
    if e.op == "/":
        return f"_div({a}, {b})"
    if e.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {e.op} {b})"


def compile_expressions(
    exprs: Sequence[Expr],
    arg_names: Sequence[Sequence[str]],
    constants: Mapping[str, float] | None = None,
) -> Callable[..., tuple]:
    """Build ``fn(*args) -> tuple`` evaluating ``exprs`` with the same primitives as
    :func:`evaluate`, so results are bit-identical.

    ``arg_names[i]`` names the components of the i-th positional (indexable)
    argument; ``constants`` are inlined.  Arguments may hold floats or duals.
    """
    names: dict[str, str] = {}
    for i, group in enumerate(arg_names):
        for j, name in enumerate(group):
            names[name] = f"a{i}[{j}]"
    body = ", ".join(_emit(e, names, constants or {}) for e in exprs)
    params = ", ".join(f"a{i}" for i in range(len(arg_names)))
    src = f"def _fn({params}):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    ns = dict(_NAMESPACE)
    exec(compile(src, "<slowfast-expr>", "exec"), ns)
    fn = ns["_fn"]
    fn.__doc__ = src
    return fn
