"""Arithmetic expression trees over named variables.

Expressions are immutable, hashable dataclasses, so structural equality is
plain ``==``. Evaluation goes through numpy and works on scalars and arrays
alike; domain problems (division by zero, log of a non-positive number)
surface as non-finite values rather than exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np


class Expr:
    """Base class for expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    """``base ^ exponent`` with a literal numeric exponent."""

    base: Expr
    exponent: float


@dataclass(frozen=True, eq=True)
class Exp(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class Log(Expr):
    operand: Expr


Number = Union[float, np.ndarray]

UNARY = (Neg, Exp, Log)
BINARY = (Add, Sub, Mul, Div)


def variables(e: Expr) -> frozenset[str]:
    """Names of all variables referenced by ``e``."""
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, BINARY):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, UNARY):
            stack.append(node.operand)
        elif isinstance(node, Pow):
            stack.append(node.base)
    return frozenset(out)


def references(e: Expr, name: str) -> bool:
    return name in variables(e)


def replace(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, without any simplification."""
    if not mapping:
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, BINARY):
        return type(e)(replace(e.left, mapping), replace(e.right, mapping))
    if isinstance(e, UNARY):
        return type(e)(replace(e.operand, mapping))
    if isinstance(e, Pow):
        return Pow(replace(e.base, mapping), e.exponent)
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr, env: Mapping[str, Number]) -> Number:
    """Evaluate ``e`` with numpy semantics.

    Missing variables raise ``KeyError``. Floating-point warnings are
    silenced; callers check the result for finiteness.
    """
    with np.errstate(all="ignore"):
        return _eval(e, env)


def _eval(e: Expr, env: Mapping[str, Number]) -> Number:
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Add):
        return np.add(_eval(e.left, env), _eval(e.right, env))
    if isinstance(e, Sub):
        return np.subtract(_eval(e.left, env), _eval(e.right, env))
    if isinstance(e, Mul):
        return np.multiply(_eval(e.left, env), _eval(e.right, env))
    if isinstance(e, Div):
        return np.divide(_eval(e.left, env), _eval(e.right, env))
    if isinstance(e, Neg):
        return np.negative(_eval(e.operand, env))
    if isinstance(e, Pow):
        base = _eval(e.base, env)
        if e.exponent == 2.0:
            return np.multiply(base, base)
        return np.power(base, np.float64(e.exponent))
    if isinstance(e, Exp):
        return np.exp(_eval(e.operand, env))
    if isinstance(e, Log):
        x = _eval(e.operand, env)
        # numpy gives -inf at 0 and nan below; both are invalid here
        return np.where(np.greater(x, 0), np.log(np.where(np.greater(x, 0), x, 1.0)), np.nan)[()]
    raise TypeError(f"not an expression: {e!r}")


# -- text rendering ---------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def format_number(value: float) -> str:
    if math.isfinite(value) and value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def _precedence(e: Expr) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_UNARY
    if isinstance(e, Const) and e.value < 0:
        return _PREC_UNARY
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def to_text(e: Expr) -> str:
    """Render ``e`` in model-file syntax with minimal parentheses.

    The output parses back to exactly the same tree.
    """

    def wrap(child: Expr, min_prec: int) -> str:
        s = to_text(child)
        return f"({s})" if _precedence(child) < min_prec else s

    if isinstance(e, Const):
        return format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, BINARY):
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
        prec = _precedence(e)
        # right operand needs strictly higher precedence to keep the tree shape
        return f"{wrap(e.left, prec)} {op} {wrap(e.right, prec + 1)}"
    if isinstance(e, Neg):
        operand = e.operand
        if isinstance(operand, Const) and operand.value >= 0:
            # "-2" would parse back as the literal Const(-2)
            return f"-({to_text(operand)})"
        s = wrap(operand, _PREC_UNARY)
        return f"-{s}" if not s.startswith("-") else f"-({s})"
    if isinstance(e, Pow):
        return f"{wrap(e.base, _PREC_ATOM)}^{format_number(e.exponent)}"
    if isinstance(e, Exp):
        return f"exp({to_text(e.operand)})"
    if isinstance(e, Log):
        return f"log({to_text(e.operand)})"
    raise TypeError(f"not an expression: {e!r}")
