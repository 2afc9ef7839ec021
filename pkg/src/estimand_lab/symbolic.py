"""Symbolic calculus on :mod:`estimand_lab.expr` trees.

``simplify`` puts sums into a canonical linear combination of terms and
products into a coefficient times a sorted list of powers. Numeric
coefficients are distributed over sums, but products of non-constant
factors are never expanded.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import Add, Const, Div, Exp, Expr, Log, Mul, Neg, Pow, Sub, Var, evaluate, replace, to_text, variables
from .model import Endogenous, Exogenous, StructuralModel

ZERO = Const(0.0)
ONE = Const(1.0)

SAMPLING_SEED = 20_240_611
SAMPLING_TRIALS = 64
SAMPLING_TOL = 1e-9
SAMPLING_RETRIES = 16


class UndecidableError(ArithmeticError):
    """Sampling could not find enough points where both expressions are defined."""


# -- simplification ---------------------------------------------------------


def _key(e: Expr) -> tuple:
    return (0 if isinstance(e, Var) else 1, to_text(e))


def _fold_pow(base: float, exponent: float) -> Optional[float]:
    try:
        value = math.pow(base, exponent)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    return value if math.isfinite(value) else None


def _as_terms(e: Expr) -> list[tuple[float, Optional[Expr]]]:
    """Read a simplified expression as ``[(coefficient, term)]``; ``None`` is the unit term."""
    if isinstance(e, Const):
        return [(e.value, None)]
    if isinstance(e, Add):
        return _as_terms(e.left) + _as_terms(e.right)
    if isinstance(e, Sub):
        return _as_terms(e.left) + [(-c, t) for c, t in _as_terms(e.right)]
    if isinstance(e, Neg):
        return [(-c, t) for c, t in _as_terms(e.operand)]
    if isinstance(e, Mul) and isinstance(e.left, Const):
        return [(e.left.value * c, t) for c, t in _as_terms(e.right)]
    return [(1.0, e)]


def _scaled(c: float, t: Expr) -> Expr:
    if c == 1.0:
        return t
    if c == -1.0:
        return Neg(t)
    return Mul(Const(c), t)


def _from_terms(terms) -> Expr:
    const = 0.0
    coefs: dict[Expr, float] = {}
    for c, t in terms:
        if t is None:
            const += c
        else:
            coefs[t] = coefs.get(t, 0.0) + c
    ordered = sorted(((t, c) for t, c in coefs.items() if c != 0.0), key=lambda tc: _key(tc[0]))
    if not ordered:
        return Const(const)
    t0, c0 = ordered[0]
    out = _scaled(c0, t0)
    for t, c in ordered[1:]:
        out = Sub(out, _scaled(-c, t)) if c < 0 else Add(out, _scaled(c, t))
    if const > 0:
        out = Add(out, Const(const))
    elif const < 0:
        out = Sub(out, Const(-const))
    return out


def _collect_factors(e: Expr, power: float, acc: dict, coef: list) -> None:
    """Accumulate ``e ** power`` into ``acc`` (base -> exponent) and ``coef``."""
    integral = power == int(power)
    if isinstance(e, Const):
        folded = _fold_pow(e.value, power)
        if folded is None:
            acc[e] = acc.get(e, 0.0) + power
        else:
            coef[0] *= folded
    elif isinstance(e, Mul) and integral:
        _collect_factors(e.left, power, acc, coef)
        _collect_factors(e.right, power, acc, coef)
    elif isinstance(e, Neg) and integral:
        coef[0] *= (-1.0) ** power
        _collect_factors(e.operand, power, acc, coef)
    elif isinstance(e, Pow) and integral:
        _collect_factors(e.base, power * e.exponent, acc, coef)
    else:
        acc[e] = acc.get(e, 0.0) + power


def _product(factors: list[tuple[Expr, float]], coef: float) -> Expr:
    """Rebuild ``coef * prod(base ** exp)``; factors must be simplified."""
    if coef == 0.0:
        return ZERO
    factors = [(b, p) for b, p in factors if p != 0.0]
    if not factors:
        return Const(coef)
    if len(factors) == 1 and factors[0][1] == 1.0 and isinstance(factors[0][0], (Add, Sub, Neg)):
        # distribute a numeric coefficient over a sum
        return _from_terms((coef * c, t) for c, t in _as_terms(factors[0][0]))
    factors.sort(key=lambda bp: _key(bp[0]))
    out: Optional[Expr] = None
    for base, p in factors:
        f = base if p == 1.0 else Pow(base, p)
        out = f if out is None else Mul(out, f)
    return _scaled(coef, out)


def _simplify_product(e: Expr) -> Expr:
    acc: dict[Expr, float] = {}
    coef = [1.0]
    _collect_factors(e, 1.0, acc, coef)
    return _product(list(acc.items()), coef[0])


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 identities, like-term collection, canonical order.

    Idempotent: ``simplify(simplify(e)) == simplify(e)``.
    """
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, (Add, Sub)):
        return _from_terms(_as_terms(type(e)(simplify(e.left), simplify(e.right))))
    if isinstance(e, Neg):
        return _from_terms(_as_terms(Neg(simplify(e.operand))))
    if isinstance(e, Mul):
        return _simplify_product(Mul(simplify(e.left), simplify(e.right)))
    if isinstance(e, Div):
        num, den = simplify(e.left), simplify(e.right)
        if isinstance(den, Const) and den.value == 0.0:
            return Div(num, den)
        if num == ZERO:
            return ZERO
        return _simplify_product(Mul(num, Pow(den, -1.0)))
    if isinstance(e, Pow):
        if e.exponent == 0.0:
            return ONE
        return _simplify_product(Pow(simplify(e.base), e.exponent))
    if isinstance(e, Exp):
        a = simplify(e.operand)
        if isinstance(a, Const):
            try:
                return Const(math.exp(a.value))
            except OverflowError:
                pass
        return Exp(a)
    if isinstance(e, Log):
        a = simplify(e.operand)
        if isinstance(a, Const) and a.value > 0:
            return Const(math.log(a.value))
        if isinstance(a, Exp):
            return a.operand
        return Log(a)
    raise TypeError(f"not an expression: {e!r}")


# -- calculus ---------------------------------------------------------------


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if v not in variables(e):
        return ZERO
    if isinstance(e, Neg):
        return Neg(_d(e.operand, v))
    if isinstance(e, Add):
        return Add(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Sub):
        return Sub(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Mul):
        return Add(Mul(_d(e.left, v), e.right), Mul(e.left, _d(e.right, v)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        return Div(Sub(Mul(_d(a, v), b), Mul(a, _d(b, v))), Pow(b, 2.0))
    if isinstance(e, Pow):
        c = e.exponent
        return Mul(Mul(Const(c), Pow(e.base, c - 1.0)), _d(e.base, v))
    if isinstance(e, Exp):
        return Mul(e, _d(e.operand, v))
    if isinstance(e, Log):
        return Div(_d(e.operand, v), e.operand)
    raise TypeError(f"not an expression: {e!r}")


def differentiate(e: Expr, v: str) -> Expr:
    """Partial derivative of ``e`` in ``v`` with every other variable held fixed."""
    return simplify(_d(e, v))


def substitute(e: Expr, v: str, replacement: Expr) -> Expr:
    """Replace every ``v`` by ``replacement`` and simplify."""
    return simplify(replace(e, {v: replacement}))


def equal_by_sampling(
    a: Expr,
    b: Expr,
    trials: int = SAMPLING_TRIALS,
    tol: float = SAMPLING_TOL,
    *,
    seed: int = SAMPLING_SEED,
) -> bool:
    """Probabilistic identity test on random points in ``[-10, 10]``.

    Points where either side is undefined are redrawn. Raises
    :class:`UndecidableError` when too few defined points turn up.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    names = sorted(variables(a) | variables(b))
    rng = np.random.default_rng(seed)
    got_a: list[np.ndarray] = []
    got_b: list[np.ndarray] = []
    have = 0
    for _ in range(SAMPLING_RETRIES):
        env = {n: rng.uniform(-10.0, 10.0, size=trials) for n in names}
        va = np.broadcast_to(evaluate(a, env), (trials,))
        vb = np.broadcast_to(evaluate(b, env), (trials,))
        ok = np.isfinite(va) & np.isfinite(vb)
        got_a.append(va[ok])
        got_b.append(vb[ok])
        have += int(ok.sum())
        if have >= trials:
            break
    else:
        raise UndecidableError(
            f"only {have} of {trials} sample points were in the domain of both expressions"
        )
    va = np.concatenate(got_a)[:trials]
    vb = np.concatenate(got_b)[:trials]
    return bool(np.all(np.abs(va - vb) <= tol * (1.0 + np.maximum(np.abs(va), np.abs(vb)))))


@dataclass(frozen=True)
class LinearDecomposition:
    """``expr == variable * slope + intercept`` with neither part depending on ``variable``."""

    variable: str
    slope: Expr
    intercept: Expr

    def recompose(self) -> Expr:
        return Add(Mul(Var(self.variable), self.slope), self.intercept)


@dataclass(frozen=True)
class NotLinear:
    variable: str
    second_derivative: Expr


def linear_decompose(e: Expr, v: str):
    """Split ``e`` as ``v * slope + intercept``, or return :class:`NotLinear`.

    May raise :class:`UndecidableError` from the sampling oracle.
    """
    d1 = differentiate(e, v)
    if v in variables(d1):
        d2 = differentiate(d1, v)
        if d2 != ZERO and not equal_by_sampling(d2, ZERO):
            return NotLinear(v, d2)
        # linear but disguised; the slope does not change along v
        d1 = substitute(d1, v, ZERO)
    intercept = simplify(Sub(e, Mul(Var(v), d1)))
    if v in variables(intercept):
        intercept = substitute(e, v, ZERO)
    return LinearDecomposition(v, d1, intercept)


# -- assumption checks ------------------------------------------------------


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDABLE = "undecidable"


@dataclass(frozen=True)
class Check:
    verdict: Verdict
    witness: Optional[Expr]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "witness": None if self.witness is None else to_text(self.witness),
        }


@dataclass(frozen=True)
class AssumptionReport:
    """Symbolic verdicts for one model.

    ``homogeneity_zx`` carries dX/dZ as witness, ``linearity_yx`` carries
    d2Y/dX2.
    """

    homogeneity_zx: Check
    linearity_yx: Check
    exclusion_structural: bool
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "homogeneity_zx": self.homogeneity_zx.to_dict(),
            "linearity_yx": self.linearity_yx.to_dict(),
            "exclusion_structural": self.exclusion_structural,
            "notes": list(self.notes),
        }


def is_constant(e: Expr) -> bool:
    """True when ``e`` has no variables, or every partial derivative vanishes."""
    names = variables(e)
    if not names:
        return True
    return all(equal_by_sampling(differentiate(e, n), ZERO) for n in sorted(names))


def binary_contrast(e: Expr, v: str) -> Expr:
    """``e(v=1) - e(v=0)``, simplified."""
    return simplify(Sub(replace(e, {v: ONE}), replace(e, {v: ZERO})))


def _binary_valued(model: StructuralModel, e: Expr, limit: int = 16) -> bool:
    names = sorted(variables(e))
    supports = []
    for n in names:
        d = model.by_name[n]
        if not isinstance(d, Exogenous) or d.dist.support() is None or len(names) > limit:
            return False
        supports.append(d.dist.support())
    for combo in itertools.product(*supports):
        value = float(evaluate(e, dict(zip(names, combo))))
        if value not in (0.0, 1.0):
            return False
    return True


def check_assumptions(model: StructuralModel) -> AssumptionReport:
    """Symbolic verdicts on Z-X additive homogeneity and X-Y additive linearity.

    The exposure equation is read with intermediate variables expanded, so
    it is a function of exogenous inputs; the outcome equation is expanded
    the same way except that the exposure stays symbolic.
    """
    z, x = model.instrument, model.exposure
    f_x = model.reduced_exposure()
    f_y = model.reduced_outcome()
    notes: list[str] = []

    try:
        dec = linear_decompose(f_x, z)
        if isinstance(dec, NotLinear):
            slope = binary_contrast(f_x, z)
            notes.append(
                f"{x} is non-linear in {z} symbolically; with binary {z} the effect is the contrast "
                f"{to_text(slope)}"
            )
        else:
            slope = dec.slope
        homogeneity = Check(Verdict.HOLDS if is_constant(slope) else Verdict.FAILS, slope)
    except UndecidableError as exc:
        homogeneity = Check(Verdict.UNDECIDABLE, None)
        notes.append(f"homogeneity check undecidable: {exc}")

    try:
        dec = linear_decompose(f_y, x)
        if isinstance(dec, NotLinear):
            linearity = Check(Verdict.FAILS, dec.second_derivative)
        else:
            linearity = Check(Verdict.HOLDS, differentiate(dec.slope, x))
    except UndecidableError as exc:
        linearity = Check(Verdict.UNDECIDABLE, None)
        notes.append(f"linearity check undecidable: {exc}")

    if linearity.verdict is Verdict.FAILS and _binary_valued(model, f_x):
        notes.append(
            f"{x} only takes the values 0 and 1, so its effect on the outcome is linear on its "
            "support even though the equation is not"
        )

    exclusion = z not in variables(f_y)
    if not exclusion:
        notes.append(f"{z} reaches the outcome through an intermediate variable other than {x}")
    return AssumptionReport(homogeneity, linearity, exclusion, tuple(notes))


__all__ = [
    "AssumptionReport",
    "Check",
    "LinearDecomposition",
    "NotLinear",
    "UndecidableError",
    "Verdict",
    "binary_contrast",
    "check_assumptions",
    "differentiate",
    "equal_by_sampling",
    "is_constant",
    "linear_decompose",
    "simplify",
    "substitute",
]
