"""Structural model data types and their semantic validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .expr import Const, Expr, Var, replace, variables
from .rng import normal_quantile


class ModelError(Exception):
    """Raised when model text or a model object fails to lex, parse or validate.

    ``diagnostics`` holds every problem found, errors first.
    """

    def __init__(self, diagnostics: Sequence["SourceDiagnostic"]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class EvaluationError(ArithmeticError):
    """An expression produced a non-finite value (e.g. log of zero)."""


@dataclass(frozen=True)
class SourceDiagnostic:
    severity: str
    message: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.severity}: {self.message} at {self.line}:{self.column}"

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "message": self.message,
            "line": self.line,
            "column": self.column,
        }


# -- distributions ----------------------------------------------------------


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def check(self) -> str | None:
        if not 0.0 <= self.p <= 1.0:
            return f"Bernoulli probability must lie in [0, 1], got {self.p:g}"
        return None

    def quantile(self, u):
        return np.where(u < self.p, 1.0, 0.0)

    def support(self) -> tuple[float, ...]:
        if self.p == 0.0:
            return (0.0,)
        if self.p == 1.0:
            return (1.0,)
        return (0.0, 1.0)

    @property
    def args(self) -> tuple[float, ...]:
        return (self.p,)


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def check(self) -> str | None:
        if not self.sigma > 0:
            return f"Normal standard deviation must be positive, got {self.sigma:g}"
        return None

    def quantile(self, u):
        return self.mu + self.sigma * normal_quantile(u)

    def support(self) -> None:
        return None

    @property
    def args(self) -> tuple[float, ...]:
        return (self.mu, self.sigma)


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def check(self) -> str | None:
        if not self.a < self.b:
            return f"Uniform bounds must satisfy a < b, got a={self.a:g}, b={self.b:g}"
        return None

    def quantile(self, u):
        return self.a + (self.b - self.a) * u

    def support(self) -> None:
        return None

    @property
    def args(self) -> tuple[float, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class PointMass:
    c: float

    def check(self) -> str | None:
        return None

    def quantile(self, u):
        return np.full(np.shape(u), self.c, dtype=float)

    def support(self) -> tuple[float, ...]:
        return (self.c,)

    @property
    def args(self) -> tuple[float, ...]:
        return (self.c,)


Distribution = Union[Bernoulli, Normal, Uniform, PointMass]

DISTRIBUTIONS: dict[str, type] = {
    "Bernoulli": Bernoulli,
    "Normal": Normal,
    "Uniform": Uniform,
    "PointMass": PointMass,
}
DIST_ARITY = {"Bernoulli": 1, "Normal": 2, "Uniform": 2, "PointMass": 1}


def is_binary(dist: Distribution) -> bool:
    support = dist.support()
    return support is not None and set(support) <= {0.0, 1.0}


# -- definitions and models -------------------------------------------------


@dataclass(frozen=True)
class Exogenous:
    name: str
    dist: Distribution
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Endogenous:
    name: str
    expr: Expr
    line: int = field(default=0, compare=False, repr=False)


Definition = Union[Exogenous, Endogenous]


@dataclass(frozen=True)
class StructuralModel:
    """A validated structural causal model with instrument/exposure/outcome roles.

    Definitions are kept in source order, which doubles as a topological
    order. Construction validates the model and raises :class:`ModelError`.
    """

    definitions: tuple[Definition, ...]
    instrument: str
    exposure: str
    outcome: str
    role_lines: Mapping[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "definitions", tuple(self.definitions))
        errors = validate(self)
        if errors:
            raise ModelError(errors)

    def __hash__(self) -> int:
        return hash((self.definitions, self.instrument, self.exposure, self.outcome))

    @cached_property
    def by_name(self) -> dict[str, Definition]:
        return {d.name: d for d in self.definitions}

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.definitions]

    @property
    def exogenous(self) -> list[Exogenous]:
        return [d for d in self.definitions if isinstance(d, Exogenous)]

    @property
    def endogenous(self) -> list[Endogenous]:
        return [d for d in self.definitions if isinstance(d, Endogenous)]

    def inline(self, name: str, keep: Iterable[str] = ()) -> Expr:
        """Expression for ``name`` with endogenous parents expanded.

        Names in ``keep`` stay symbolic; the result references only
        exogenous variables and kept names.
        """
        keep = frozenset(keep)
        return _inline(self.by_name, name, keep, {})

    def reduced_exposure(self) -> Expr:
        """The exposure as a function of exogenous variables only."""
        return self.inline(self.exposure)

    def reduced_outcome(self) -> Expr:
        """The outcome as a function of the exposure and exogenous variables."""
        return self.inline(self.outcome, keep=(self.exposure,))


def _inline(defs: Mapping[str, Definition], name: str, keep: frozenset, memo: dict) -> Expr:
    d = defs[name]
    if isinstance(d, Exogenous):
        return Var(name)
    if name not in memo:
        mapping = {
            v: Var(v) if v in keep else _inline(defs, v, keep, memo)
            for v in variables(d.expr)
            if isinstance(defs[v], Endogenous)
        }
        memo[name] = replace(d.expr, mapping)
    return memo[name]


def _ancestors(model: StructuralModel, name: str) -> set[str]:
    seen: set[str] = set()
    stack = [name]
    while stack:
        d = model.by_name[stack.pop()]
        if isinstance(d, Endogenous):
            for v in variables(d.expr):
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return seen


def validate(model: StructuralModel) -> list[SourceDiagnostic]:
    """Semantic checks shared by the parser and programmatic construction."""
    errors: list[SourceDiagnostic] = []

    def err(msg: str, line: int) -> None:
        errors.append(SourceDiagnostic("error", msg, max(line, 1), 1))

    defined: dict[str, Definition] = {}
    for d in model.definitions:
        if d.name in defined:
            err(f"'{d.name}' is already defined on line {defined[d.name].line}", d.line)
            continue
        if isinstance(d, Exogenous):
            problem = d.dist.check()
            if problem is None and not all(math.isfinite(a) for a in d.dist.args):
                problem = "distribution parameters must be finite"
            if problem:
                err(problem, d.line)
        else:
            for v in sorted(variables(d.expr)):
                if v not in defined:
                    err(f"'{v}' is used before it is defined", d.line)
            if not _finite_constants(d.expr):
                err("numeric constants must be finite", d.line)
        defined[d.name] = d
    if errors:
        return errors

    lines = model.role_lines
    roles = {"instrument": model.instrument, "exposure": model.exposure, "outcome": model.outcome}
    for role, name in roles.items():
        if not name:
            err(f"missing role: no @{role} directive", 1)
        elif name not in defined:
            err(f"@{role} names undefined variable '{name}'", lines.get(role, 1))
    if errors:
        return errors

    z, x, y = model.instrument, model.exposure, model.outcome
    if z == x:
        err("instrument and exposure must differ", lines.get("exposure", 1))
    if y in (z, x):
        err("outcome must differ from instrument and exposure", lines.get("outcome", 1))
    if errors:
        return errors

    zd, xd, yd = defined[z], defined[x], defined[y]
    if not isinstance(zd, Exogenous):
        err(f"instrument '{z}' must be exogenous", zd.line)
    elif not is_binary(zd.dist):
        err(f"instrument '{z}' must have binary support (Bernoulli or PointMass at 0/1)", zd.line)
    if not isinstance(xd, Endogenous):
        err(f"exposure '{x}' must be defined by an equation", xd.line)
    elif z not in _ancestors(model, x):
        err(f"exposure '{x}' does not depend on instrument '{z}'", xd.line)
    if not isinstance(yd, Endogenous):
        err(f"outcome '{y}' must be defined by an equation", yd.line)
    elif z in variables(yd.expr):
        err("instrument appears in outcome equation", yd.line)
    return errors


def _finite_constants(e: Expr) -> bool:
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Const) and not math.isfinite(node.value):
            return False
        for attr in ("left", "right", "operand", "base"):
            child = getattr(node, attr, None)
            if child is not None:
                stack.append(child)
        if hasattr(node, "exponent") and not math.isfinite(node.exponent):
            return False
    return True


@dataclass(frozen=True)
class ModelTemplate:
    """A model whose equations mention free parameters bound later to constants."""

    definitions: tuple[Definition, ...]
    instrument: str
    exposure: str
    outcome: str
    params: tuple[str, ...]
    role_lines: Mapping[str, int] = field(default_factory=dict, compare=False, repr=False)

    def bind(self, values: Mapping[str, float]) -> StructuralModel:
        missing = [p for p in self.params if p not in values]
        if missing:
            raise KeyError(f"no value for parameter(s): {', '.join(missing)}")
        mapping = {p: Const(float(values[p])) for p in self.params}
        defs = tuple(
            Endogenous(d.name, replace(d.expr, mapping), d.line) if isinstance(d, Endogenous) else d
            for d in self.definitions
        )
        return StructuralModel(defs, self.instrument, self.exposure, self.outcome, self.role_lines)
