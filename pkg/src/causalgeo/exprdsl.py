"""Expression language for defining functions and metric components.

Grammar (precedence climbing, tightest first)::

    ^          right-associative
    unary -
    * /        left-associative
    + -        left-associative

Primaries are numbers (decimal or scientific), identifiers ``x0..x9``,
``y1..y9`` or declared constants, calls ``f(expr)`` with ``f`` in
``exp log sin cos sqrt``, and parenthesized expressions.  There is no
implicit multiplication.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

from . import jets
from .errors import DomainError, ParseError, UnboundVariable

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


# tokens --------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # number | identifier | operator | paren | function | comma | end
    lexeme: str
    pos: int
    value: float | None = None


_NUMBER = re.compile(rb"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_IDENT = re.compile(rb"[A-Za-z_][A-Za-z0-9_]*")


def tokenize(src: str) -> list[Token]:
    """Split ``src`` into tokens; positions are byte offsets into its UTF-8 form."""
    data = src.encode("utf-8")
    out: list[Token] = []
    i, n = 0, len(data)
    while i < n:
        ch = data[i:i + 1]
        if ch in b" \t\r\n":
            i += 1
            continue
        m = _NUMBER.match(data, i)
        if m:
            lex = m.group().decode()
            out.append(Token("number", lex, i, float(lex)))
            i = m.end()
            continue
        m = _IDENT.match(data, i)
        if m:
            lex = m.group().decode()
            kind = "function" if lex in FUNCTIONS else "identifier"
            out.append(Token(kind, lex, i))
            i = m.end()
            continue
        if ch in b"+-*/^":
            out.append(Token("operator", ch.decode(), i))
        elif ch in b"()":
            out.append(Token("paren", ch.decode(), i))
        elif ch == b",":
            out.append(Token("comma", ",", i))
        else:
            raise ParseError(f"invalid character {data[i:i + 1]!r}", i, src)
        i += 1
    out.append(Token("end", "", n))
    return out


# syntax tree ---------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    value: float
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Ast"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Ast"
    right: "Ast"
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Ast", ...]
    pos: int = field(default=-1, compare=False)


Ast = Union[Constant, Var, Unary, Binary, Call]

_BINARY_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_PREC = 3
_RIGHT_ASSOC = {"^"}


class _Parser:
    def __init__(self, tokens: Sequence[Token], names: frozenset[str] | None,
                 source: str | None):
        self.toks = list(tokens)
        if not self.toks or self.toks[-1].kind != "end":
            end = self.toks[-1].pos + len(self.toks[-1].lexeme) if self.toks else 0
            self.toks.append(Token("end", "", end))
        self.i = 0
        self.names = names
        self.source = source

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def fail(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.pos, self.source)

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self) -> Ast:
        node = self.expr(1)
        if self.tok.kind != "end":
            if self.tok.lexeme == ")":
                self.fail("unbalanced parenthesis: unexpected ')'")
            self.fail(f"unexpected token {self.tok.lexeme!r}")
        return node

    def expr(self, min_prec: int) -> Ast:
        lhs = self.unary()
        while True:
            t = self.tok
            if t.kind != "operator":
                break
            prec = _BINARY_PREC[t.lexeme]
            if prec < min_prec:
                break
            self.advance()
            rhs = self.expr(prec if t.lexeme in _RIGHT_ASSOC else prec + 1)
            lhs = Binary(t.lexeme, lhs, rhs, t.pos)
        return lhs

    def unary(self) -> Ast:
        t = self.tok
        if t.kind == "operator" and t.lexeme == "-":
            self.advance()
            return Unary("-", self.expr(_UNARY_PREC), t.pos)
        return self.primary()

    def primary(self) -> Ast:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Constant(t.value, t.pos)
        if t.kind == "identifier":
            self.advance()
            if self.tok.kind == "paren" and self.tok.lexeme == "(":
                self.fail(f"unknown function {t.lexeme!r}", t)
            if self.names is not None and t.lexeme not in self.names:
                self.fail(f"unknown identifier {t.lexeme!r}", t)
            return Var(t.lexeme, t.pos)
        if t.kind == "function":
            self.advance()
            if not (self.tok.kind == "paren" and self.tok.lexeme == "("):
                self.fail(f"expected '(' after {t.lexeme}")
            open_tok = self.advance()
            args = [self.expr(1)]
            while self.tok.kind == "comma":
                self.advance()
                args.append(self.expr(1))
            self.close(open_tok)
            if len(args) != 1:
                self.fail(f"{t.lexeme} takes exactly one argument", t)
            return Call(t.lexeme, tuple(args), t.pos)
        if t.kind == "paren" and t.lexeme == "(":
            open_tok = self.advance()
            node = self.expr(1)
            self.close(open_tok)
            return node
        if t.kind == "end":
            self.fail("unexpected end of input")
        if t.lexeme == ")":
            self.fail("unbalanced parenthesis: unexpected ')'")
        self.fail(f"unexpected token {t.lexeme!r}")

    def close(self, open_tok: Token) -> None:
        if self.tok.kind == "paren" and self.tok.lexeme == ")":
            self.advance()
            return
        if self.tok.kind == "end":
            self.fail("unbalanced parenthesis: '(' never closed", open_tok)
        self.fail(f"expected ')' but found {self.tok.lexeme!r}")


def default_names(n: int | None = None, constants: Iterable[str] = ()) -> frozenset[str]:
    """Admissible identifiers: coordinates for dimension n+1 plus constants."""
    if n is None:
        coords = {f"x{i}" for i in range(10)} | {f"y{i}" for i in range(1, 10)}
    else:
        coords = {f"x{i}" for i in range(n + 1)} | {f"y{i}" for i in range(1, n)}
    return frozenset(coords) | frozenset(constants)


def parse(tokens: Sequence[Token] | str, names: Iterable[str] | None = None,
          source: str | None = None) -> Ast:
    """Parse a token stream (or raw text) into an Ast.

    ``names`` restricts the admissible identifiers; pass ``default_names(n)``
    to tie an expression to a dimension.  ``None`` admits any identifier.
    """
    if isinstance(tokens, str):
        source = tokens
        tokens = tokenize(tokens)
    allowed = frozenset(names) if names is not None else None
    return _Parser(tokens, allowed, source).parse()


def parse_expr(src: str, n: int | None = None, constants: Iterable[str] = ()) -> Ast:
    return parse(tokenize(src), default_names(n, constants), src)


# evaluation ----------------------------------------------------------------

_REAL_FUNCS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": jets.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": jets.sqrt,
}


def _evaluate(node: Ast, env: Mapping, funcs: Mapping[str, Callable]):
    if isinstance(node, Constant):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariable(f"unbound variable {node.name!r}") from None
    if isinstance(node, Binary):
        a = _evaluate(node.left, env, funcs)
        b = _evaluate(node.right, env, funcs)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if not isinstance(b, jets.Jet) and b == 0:
                raise DomainError("division by zero")
            return a / b
        return jets.power(a, b)
    if isinstance(node, Unary):
        return -_evaluate(node.operand, env, funcs)
    if isinstance(node, Call):
        return funcs[node.func](_evaluate(node.args[0], env, funcs))
    raise TypeError(f"not an Ast node: {node!r}")


def eval_real(ast: Ast, env: Mapping[str, float]) -> float:
    try:
        return float(_evaluate(ast, env, _REAL_FUNCS))
    except OverflowError as exc:
        raise DomainError(str(exc)) from None


def eval_jet(ast: Ast, env: Mapping[str, "jets.Jet | float"]) -> jets.Jet:
    out = evaluate(ast, env)
    if isinstance(out, jets.Jet):
        return out
    sample = next((v for v in env.values() if isinstance(v, jets.Jet)), None)
    if sample is None:
        raise UnboundVariable("eval_jet needs at least one jet in the environment")
    return jets.Jet.constant(float(out), sample.nvars, sample.order)


def evaluate(ast: Ast, env: Mapping):
    """Mixed evaluation: jets where the env holds jets, floats elsewhere."""
    try:
        return _evaluate(ast, env, jets.ELEMENTARY)
    except OverflowError as exc:
        raise DomainError(str(exc)) from None


# utilities -----------------------------------------------------------------

def variables(ast: Ast) -> set[str]:
    if isinstance(ast, Var):
        return {ast.name}
    if isinstance(ast, Constant):
        return set()
    if isinstance(ast, Unary):
        return variables(ast.operand)
    if isinstance(ast, Binary):
        return variables(ast.left) | variables(ast.right)
    return set().union(*(variables(a) for a in ast.args))


def substitute(ast: Ast, mapping: Mapping[str, Ast]) -> Ast:
    """Replace variables by sub-trees."""
    if isinstance(ast, Var):
        return mapping.get(ast.name, ast)
    if isinstance(ast, Constant):
        return ast
    if isinstance(ast, Unary):
        return Unary(ast.op, substitute(ast.operand, mapping))
    if isinstance(ast, Binary):
        return Binary(ast.op, substitute(ast.left, mapping), substitute(ast.right, mapping))
    return Call(ast.func, tuple(substitute(a, mapping) for a in ast.args))


def _prec(node: Ast) -> int:
    if isinstance(node, Binary):
        return _BINARY_PREC[node.op]
    if isinstance(node, Unary):
        return _UNARY_PREC
    return 10


def _fmt_number(v: float) -> str:
    text = repr(float(v))
    return text if v >= 0 else f"({text})"


def pretty(ast: Ast) -> str:
    """Source text that reparses to a structurally identical tree."""
    if isinstance(ast, Constant):
        if not math.isfinite(ast.value):
            raise ValueError("only finite constants are printable")
        return _fmt_number(ast.value)
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Call):
        return f"{ast.func}({pretty(ast.args[0])})"
    if isinstance(ast, Unary):
        inner = pretty(ast.operand)
        if _prec(ast.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _BINARY_PREC[ast.op]
    if ast.op in _RIGHT_ASSOC:
        need_left, need_right = p + 1, p
    else:
        need_left, need_right = p, p + 1
    left = pretty(ast.left)
    right = pretty(ast.right)
    if _prec(ast.left) < need_left:
        left = f"({left})"
    if _prec(ast.right) < need_right and not isinstance(ast.right, Unary):
        right = f"({right})"
    return f"{left}{ast.op}{right}"
