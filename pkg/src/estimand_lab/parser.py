"""Reader and writer for ``.scm`` model files.

A model file is line oriented::

    # paper example
    Z  ~ Bernoulli(0.3)
    U  ~ Bernoulli(0.5)
    eX ~ Normal(0, 1)
    eY ~ Normal(0, 1)
    X  = 2*Z + U + eX
    Y  = 2*X^2 + U + eY
    @instrument Z
    @exposure X
    @outcome Y

Expressions use ``^`` (right associative) above unary minus, above ``* /``,
above ``+ -``; ``exp(...)`` and ``log(...)`` are the only functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .expr import Add, Const, Div, Exp, Expr, Log, Mul, Neg, Pow, Sub, Var, evaluate, format_number, to_text, variables
from .model import (
    DIST_ARITY,
    DISTRIBUTIONS,
    Endogenous,
    Exogenous,
    ModelError,
    ModelTemplate,
    SourceDiagnostic,
    StructuralModel,
)

ROLES = ("instrument", "exposure", "outcome")
FUNCTIONS = {"exp": Exp, "log": Log}
RESERVED = frozenset(FUNCTIONS)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<directive>@[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),=~])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | directive | op | end
    text: str
    col: int


class _LineError(Exception):
    def __init__(self, message: str, col: int):
        super().__init__(message)
        self.message = message
        self.col = col


def _lex(line: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(line):
        if line[pos] == "#":
            break
        m = _TOKEN.match(line, pos)
        if m is None:
            raise _LineError(f"unexpected character {line[pos]!r}", pos + 1)
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    tokens.append(Token("end", "", len(line) + 1))
    return tokens


class _ExprParser:
    """Recursive descent over one line's tokens."""

    def __init__(self, tokens: list[Token], start: int):
        self.tokens = tokens
        self.i = start
        self.refs: list[tuple[str, int]] = []

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind not in ("op",):
            raise _LineError(f"expected '{text}', found {_describe(self.tok)}", self.tok.col)
        return self.advance()

    def parse(self) -> Expr:
        e = self.additive()
        if self.tok.kind != "end":
            raise _LineError(f"unexpected {_describe(self.tok)}", self.tok.col)
        return e

    def additive(self) -> Expr:
        e = self.multiplicative()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            rhs = self.multiplicative()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            if self.tok.kind == "num":
                nxt = self.tokens[self.i + 1]
                if not (nxt.kind == "op" and nxt.text == "^"):
                    return Const(-float(self.advance().text))
            return Neg(self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            raise _LineError("unary '+' is not supported", self.tok.col)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            caret = self.advance()
            start = len(self.refs)
            exponent = self.unary()
            if len(self.refs) > start:
                raise _LineError("exponent must be a numeric constant", caret.col)
            value = float(evaluate(exponent, {}))
            if value != value or value in (float("inf"), float("-inf")):
                raise _LineError("exponent must be a finite number", caret.col)
            return Pow(base, value)
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Const(float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.additive()
                self.expect(")")
                return FUNCTIONS[t.text](arg)
            if self.tok.kind == "op" and self.tok.text == "(":
                raise _LineError(f"unknown function '{t.text}'", t.col)
            self.refs.append((t.text, t.col))
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.additive()
            self.expect(")")
            return e
        raise _LineError(f"expected an expression, found {_describe(t)}", t.col)


def _describe(t: Token) -> str:
    return "end of line" if t.kind == "end" else f"'{t.text}'"


def _parse_dist(tokens: list[Token], i: int):
    name = tokens[i]
    if name.kind != "ident" or name.text not in DISTRIBUTIONS:
        known = ", ".join(DISTRIBUTIONS)
        raise _LineError(f"unknown distribution {_describe(name)} (expected one of {known})", name.col)
    p = _ExprParser(tokens, i + 1)
    p.expect("(")
    args: list[float] = []
    while True:
        neg = False
        if p.tok.kind == "op" and p.tok.text == "-":
            p.advance()
            neg = True
        if p.tok.kind != "num":
            raise _LineError(f"expected a number, found {_describe(p.tok)}", p.tok.col)
        value = float(p.advance().text)
        args.append(-value if neg else value)
        if p.tok.kind == "op" and p.tok.text == ",":
            p.advance()
            continue
        break
    p.expect(")")
    if p.tok.kind != "end":
        raise _LineError(f"unexpected {_describe(p.tok)}", p.tok.col)
    arity = DIST_ARITY[name.text]
    if len(args) != arity:
        raise _LineError(f"{name.text} takes {arity} parameter(s), got {len(args)}", name.col)
    return DISTRIBUTIONS[name.text](*args)


@dataclass
class _Parsed:
    definitions: list
    roles: dict[str, str]
    role_lines: dict[str, int]
    diagnostics: list[SourceDiagnostic]
    n_lines: int
    used: set[str]


def _read(source: str | bytes, params: Iterable[str] = ()) -> _Parsed:
    params = tuple(params)
    diags: list[SourceDiagnostic] = []
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(source)[: exc.start].count(b"\n") + 1
            diags.append(SourceDiagnostic("error", "input is not valid UTF-8", line, 1))
            return _Parsed([], {}, {}, diags, line, set())
    lines = source.splitlines()
    defs: list = []
    seen: dict[str, int] = {p: 0 for p in params}
    roles: dict[str, str] = {}
    role_lines: dict[str, int] = {}
    used: set[str] = set()

    for lineno, text in enumerate(lines, start=1):
        def error(message: str, col: int) -> None:
            diags.append(SourceDiagnostic("error", message, lineno, max(col, 1)))

        try:
            tokens = _lex(text)
            head = tokens[0]
            if head.kind == "end":
                continue
            if head.kind == "directive":
                role = head.text[1:]
                if role not in ROLES:
                    raise _LineError(f"unknown directive '{head.text}'", head.col)
                target = tokens[1]
                if target.kind != "ident":
                    raise _LineError(f"@{role} expects a variable name", target.col)
                if tokens[2].kind != "end":
                    raise _LineError(f"unexpected {_describe(tokens[2])}", tokens[2].col)
                if role in roles:
                    raise _LineError(f"@{role} given more than once (first on line {role_lines[role]})", head.col)
                roles[role] = target.text
                role_lines[role] = lineno
                used.add(target.text)
                continue
            if head.kind != "ident":
                raise _LineError(f"expected a definition, found {_describe(head)}", head.col)
            name = head.text
            sep = tokens[1]
            if not (sep.kind == "op" and sep.text in "=~"):
                raise _LineError(f"expected '=' or '~' after '{name}', found {_describe(sep)}", sep.col)
            if name in RESERVED:
                raise _LineError(f"'{name}' is a reserved function name", head.col)
            if sep.text == "~":
                definition = Exogenous(name, _parse_dist(tokens, 2), lineno)
            else:
                p = _ExprParser(tokens, 2)
                expr = p.parse()
                for ref, col in p.refs:
                    if ref == name:
                        raise _LineError(f"'{name}' cannot depend on itself", col)
                    if ref not in seen:
                        raise _LineError(f"'{ref}' is used before it is defined", col)
                    used.add(ref)
                definition = Endogenous(name, expr, lineno)
            if name in seen:
                where = "a scan parameter" if seen[name] == 0 else f"already defined on line {seen[name]}"
                raise _LineError(f"'{name}' is {where}", head.col)
            seen[name] = lineno
            dist = getattr(definition, "dist", None)
            problem = dist.check() if dist is not None else None
            if problem:
                raise _LineError(problem, tokens[2].col)
            defs.append(definition)
        except _LineError as exc:
            error(exc.message, exc.col)
        except RecursionError:
            error("expression is nested too deeply", 1)

    return _Parsed(defs, roles, role_lines, diags, max(len(lines), 1), used)


def _build(parsed: _Parsed, params: tuple[str, ...] = ()):
    if parsed.diagnostics:
        raise ModelError(parsed.diagnostics)
    roles = parsed.roles
    missing = [r for r in ROLES if r not in roles]
    if missing:
        raise ModelError(
            [SourceDiagnostic("error", f"missing role: no @{r} directive", parsed.n_lines, 1) for r in missing]
        )
    for role in ROLES:
        if roles[role] in params:
            raise ModelError(
                [SourceDiagnostic("error", f"@{role} cannot name a scan parameter", parsed.role_lines[role], 1)]
            )
    args = (tuple(parsed.definitions), roles["instrument"], roles["exposure"], roles["outcome"])
    if params:
        template = ModelTemplate(*args, params=params, role_lines=parsed.role_lines)
        template.bind({p: 1.0 for p in params})
        return template
    return StructuralModel(*args, role_lines=parsed.role_lines)


def parse_model(source: str | bytes) -> StructuralModel:
    """Parse and validate model text; raise :class:`ModelError` on any error."""
    return _build(_read(source))


def parse_template(source: str | bytes, params: Iterable[str]) -> ModelTemplate:
    """Parse a model whose equations may reference the free names ``params``."""
    params = tuple(dict.fromkeys(params))
    return _build(_read(source, params), params)


def check_source(source: str | bytes) -> tuple[StructuralModel | None, list[SourceDiagnostic]]:
    """Parse like :func:`parse_model` but return diagnostics, including warnings."""
    parsed = _read(source)
    try:
        model = _build(parsed)
    except ModelError as exc:
        return None, exc.diagnostics
    warnings = [
        SourceDiagnostic("warning", f"'{d.name}' is defined but never used", d.line, 1)
        for d in model.definitions
        if d.name not in parsed.used
    ]
    return model, warnings


def pretty_print(model: StructuralModel | ModelTemplate) -> str:
    """Canonical source text; ``parse_model(pretty_print(m)) == m``."""
    out = []
    for d in model.definitions:
        if isinstance(d, Exogenous):
            kind = type(d.dist).__name__
            args = ", ".join(format_number(a) for a in d.dist.args)
            out.append(f"{d.name} ~ {kind}({args})")
        else:
            out.append(f"{d.name} = {to_text(d.expr)}")
    out.append(f"@instrument {model.instrument}")
    out.append(f"@exposure {model.exposure}")
    out.append(f"@outcome {model.outcome}")
    return "\n".join(out) + "\n"


def parse_expr(text: str) -> Expr:
    """Parse a standalone expression (no name resolution)."""
    try:
        return _ExprParser(_lex(text), 0).parse()
    except _LineError as exc:
        raise ModelError([SourceDiagnostic("error", exc.message, 1, exc.col)]) from None


__all__ = [
    "check_source",
    "parse_expr",
    "parse_model",
    "parse_template",
    "pretty_print",
    "variables",
]
