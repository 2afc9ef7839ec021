"""Potential-outcome simulation: exogenous draws, interventions, unit effects.

Everything here is vectorised over blocks of units. The scalar entry points
(:func:`draw_exogenous`, :func:`evaluate`, :func:`unit_effects`) run a block
of one unit, so they agree bit for bit with population runs.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .expr import Expr, evaluate as eval_expr
from .model import EvaluationError, Exogenous, StructuralModel
from .rng import uniforms
from .symbolic import binary_contrast, differentiate

DEFAULT_CHUNK = 65_536
INVALID_LIMIT = 0.01
SLOPE_EPS = 1e-12
THREADS_ENV = "ESTIMAND_LAB_THREADS"

EFFECT_STATS = ("x", "y", "beta_zx", "beta_zy", "dydx", "dxdz", "dydz", "identity")
ARM_STATS = ("x", "y")


class ModelDomainError(ArithmeticError):
    """Too many simulated units hit an evaluation error."""


@dataclass(frozen=True)
class UnitDraw:
    unit_index: int
    values: Mapping[str, float]


@dataclass(frozen=True)
class Intervention:
    """Ordered ``do(target=value, ...)`` assignments with distinct targets."""

    assignments: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        targets = [t for t, _ in self.assignments]
        if len(set(targets)) != len(targets):
            raise ValueError(f"intervention targets must be distinct: {targets}")

    @classmethod
    def of(cls, mapping: Mapping[str, float] | None = None, **kwargs: float) -> "Intervention":
        items = dict(mapping or {}, **kwargs)
        return cls(tuple((k, float(v)) for k, v in items.items()))

    def as_dict(self) -> dict[str, float]:
        return dict(self.assignments)


NO_INTERVENTION = Intervention()


# -- draws and evaluation ---------------------------------------------------


def draw_block(model: StructuralModel, seed: int, start: int, stop: int) -> dict[str, np.ndarray]:
    """Exogenous values for units ``start..stop-1``."""
    return {
        d.name: np.asarray(d.dist.quantile(uniforms(seed, k, start, stop)), dtype=np.float64)
        for k, d in enumerate(model.exogenous)
    }


def draw_exogenous(model: StructuralModel, unit_index: int, seed: int) -> UnitDraw:
    block = draw_block(model, seed, unit_index, unit_index + 1)
    return UnitDraw(unit_index, {k: float(v[0]) for k, v in block.items()})


def evaluate_block(
    model: StructuralModel,
    exo: Mapping[str, np.ndarray],
    iv: Intervention = NO_INTERVENTION,
) -> dict[str, np.ndarray]:
    """Walk the definitions in order, forcing intervened variables."""
    forced = iv.as_dict()
    unknown = set(forced) - set(model.by_name)
    if unknown:
        raise KeyError(f"intervention on unknown variable(s): {', '.join(sorted(unknown))}")
    size = len(next(iter(exo.values())))
    env: dict[str, np.ndarray] = {}
    for d in model.definitions:
        if d.name in forced:
            env[d.name] = np.full(size, forced[d.name])
        elif isinstance(d, Exogenous):
            env[d.name] = exo[d.name]
        else:
            env[d.name] = np.broadcast_to(eval_expr(d.expr, env), (size,))
    return env


def evaluate(model: StructuralModel, draw: UnitDraw, iv: Intervention = NO_INTERVENTION) -> dict[str, float]:
    """Every variable's value for one unit under ``iv``.

    Raises :class:`EvaluationError` if any value is not finite.
    """
    env = evaluate_block(model, {k: np.array([v]) for k, v in draw.values.items()}, iv)
    out = {k: float(v[0]) for k, v in env.items()}
    bad = [k for k, v in out.items() if not math.isfinite(v)]
    if bad:
        raise EvaluationError(f"non-finite value for {', '.join(bad)} in unit {draw.unit_index}")
    return out


@dataclass(frozen=True)
class SimulationPlan:
    """Symbolic pieces needed per unit, derived once per model."""

    model: StructuralModel
    dydx: Expr
    dxdz: Expr
    beta_zx: Expr
    dydz: Expr


@lru_cache(maxsize=256)
def plan_for(model: StructuralModel) -> SimulationPlan:
    f_x = model.reduced_exposure()
    return SimulationPlan(
        model=model,
        dydx=differentiate(model.reduced_outcome(), model.exposure),
        dxdz=differentiate(f_x, model.instrument),
        # symbolic contrast so that a homogeneous effect comes out exactly constant
        beta_zx=binary_contrast(f_x, model.instrument),
        dydz=differentiate(model.inline(model.outcome), model.instrument),
    )


def effects_block(plan: SimulationPlan, exo: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Unit-level effects for a block of draws, plus a ``valid`` mask."""
    m = plan.model
    z, x, y = m.instrument, m.exposure, m.outcome
    size = len(next(iter(exo.values())))
    natural = evaluate_block(m, exo)
    under0 = evaluate_block(m, exo, Intervention(((z, 0.0),)))
    under1 = evaluate_block(m, exo, Intervention(((z, 1.0),)))

    def at(e: Expr, env: Mapping[str, np.ndarray]) -> np.ndarray:
        return np.broadcast_to(eval_expr(e, env), (size,))

    out = {
        "z": natural[z],
        "x": natural[x],
        "y": natural[y],
        "x0": under0[x],
        "x1": under1[x],
        "y0": under0[y],
        "y1": under1[y],
        "beta_zx": at(plan.beta_zx, natural),
        "dydx": at(plan.dydx, natural),
        "dxdz": at(plan.dxdz, natural),
        "dydz": at(plan.dydz, natural),
    }
    with np.errstate(all="ignore"):
        out["beta_zy"] = out["y1"] - out["y0"]
        out["identity"] = out["beta_zy"] - out["dydx"] * out["beta_zx"]
        defined = np.abs(out["beta_zx"]) > SLOPE_EPS
        out["slope"] = np.where(defined, out["beta_zy"] / np.where(defined, out["beta_zx"], 1.0), np.nan)
    valid = np.ones(size, dtype=bool)
    for key in ("x", "y", "x0", "x1", "y0", "y1", *EFFECT_STATS):
        valid &= np.isfinite(out[key])
    out["valid"] = valid
    return out


@dataclass(frozen=True)
class UnitEffects:
    x0: float
    x1: float
    y0: float
    y1: float
    beta_zx: float
    beta_zy: float
    dydx: float
    dxdz: float
    slope: Optional[float]
    valid: bool = True


def unit_effects(model: StructuralModel, draw: UnitDraw) -> UnitEffects:
    """Potential outcomes under do(Z=0) and do(Z=1) sharing one unit's noise."""
    block = effects_block(plan_for(model), {k: np.array([v]) for k, v in draw.values.items()})
    get = {k: float(v[0]) for k, v in block.items() if k != "valid"}
    slope = get["slope"]
    return UnitEffects(
        x0=get["x0"],
        x1=get["x1"],
        y0=get["y0"],
        y1=get["y1"],
        beta_zx=get["beta_zx"],
        beta_zy=get["beta_zy"],
        dydx=get["dydx"],
        dxdz=get["dxdz"],
        slope=None if math.isnan(slope) else slope,
        valid=bool(block["valid"][0]),
    )


# -- streaming moments ------------------------------------------------------


class Accumulator:
    """Running count, means and co-moment matrix for named statistics.

    Batches are reduced with a two-pass pass over the batch and merged with
    the pairwise update of Chan, Golub and LeVeque; a one-row batch is the
    classic Welford step.
    """

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        self._index = {n: i for i, n in enumerate(self.names)}
        k = len(self.names)
        self.count = 0
        self.means = np.zeros(k)
        self.comoments = np.zeros((k, k))

    def __repr__(self) -> str:
        return f"Accumulator(names={self.names}, count={self.count})"

    @classmethod
    def from_batch(cls, names: Sequence[str], columns: np.ndarray) -> "Accumulator":
        """Build from a ``(len(names), m)`` array of observations."""
        acc = cls(names)
        columns = np.ascontiguousarray(columns, dtype=np.float64)
        m = columns.shape[1]
        if m == 0:
            return acc
        acc.count = m
        acc.means = columns.sum(axis=1) / m
        dev = columns - acc.means[:, None]
        k = len(acc.names)
        for i in range(k):
            for j in range(i, k):
                # elementwise product + pairwise sum; avoids BLAS thread-order effects
                acc.comoments[i, j] = acc.comoments[j, i] = np.sum(dev[i] * dev[j])
        return acc

    def add_batch(self, columns: np.ndarray) -> "Accumulator":
        self.merge_in(Accumulator.from_batch(self.names, columns))
        return self

    def update(self, row: Sequence[float]) -> "Accumulator":
        return self.add_batch(np.asarray(row, dtype=np.float64).reshape(-1, 1))

    def merge_in(self, other: "Accumulator") -> None:
        if other.names != self.names:
            raise ValueError("cannot merge accumulators over different statistics")
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.means, self.comoments = other.count, other.means.copy(), other.comoments.copy()
            return
        n = self.count + other.count
        delta = other.means - self.means
        self.means = self.means + delta * (other.count / n)
        self.comoments = self.comoments + other.comoments + np.outer(delta, delta) * (self.count * other.count / n)
        self.count = n

    def merge(self, other: "Accumulator") -> "Accumulator":
        out = Accumulator(self.names)
        out.merge_in(self)
        out.merge_in(other)
        return out

    def mean(self, name: str) -> float:
        return float(self.means[self._index[name]])

    def cov(self, a: str, b: str) -> float:
        if self.count < 2:
            return 0.0
        return float(self.comoments[self._index[a], self._index[b]] / (self.count - 1))

    def var(self, name: str) -> float:
        return max(self.cov(name, name), 0.0)

    def se(self, name: str) -> float:
        """Standard error of the mean of ``name``."""
        return math.sqrt(self.var(name) / self.count) if self.count else math.inf

    def linear_se(self, weights: Mapping[str, float]) -> float:
        """Standard error of ``sum(w * mean)``, using the full covariance."""
        if self.count < 2:
            return 0.0
        total = 0.0
        for a, wa in weights.items():
            for b, wb in weights.items():
                total += wa * wb * self.cov(a, b)
        return math.sqrt(max(total, 0.0) / self.count)


# -- population runs --------------------------------------------------------


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _chunks(n: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


def stream(
    n: int,
    chunk_size: int,
    work: Callable[[int, int], tuple[int, list[Accumulator]]],
    workers: Optional[int] = None,
) -> tuple[int, list[Accumulator]]:
    """Run ``work`` over chunks and merge its accumulators in chunk order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if chunk_size < 1:
        raise ValueError("chunk_size must be at least 1")
    chunks = _chunks(n, chunk_size)
    w = min(worker_count(workers), len(chunks))
    if w == 1:
        parts: Iterable = map(lambda c: work(*c), chunks)
        results = list(parts)
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            results = list(pool.map(lambda c: work(*c), chunks))
    invalid = 0
    merged: Optional[list[Accumulator]] = None
    for bad, accs in results:
        invalid += bad
        if merged is None:
            merged = [Accumulator(a.names) for a in accs]
        for target, part in zip(merged, accs):
            target.merge_in(part)
    if invalid > INVALID_LIMIT * n:
        raise ModelDomainError(
            f"{invalid} of {n} units hit an evaluation error (limit {INVALID_LIMIT:.0%}); "
            "check for division by zero or log of a non-positive value"
        )
    return invalid, merged or []


@dataclass
class Population:
    """Accumulated unit effects for units ``0..n-1``."""

    effects: Accumulator
    arms: tuple[Accumulator, Accumulator]
    n: int
    seed: int
    n_invalid: int


def run_population(
    model: StructuralModel,
    n: int,
    seed: int,
    *,
    chunk_size: int = DEFAULT_CHUNK,
    workers: Optional[int] = None,
    stats: Sequence[str] = EFFECT_STATS,
) -> Population:
    """Stream unit effects for ``n`` units into accumulators.

    ``stats`` picks which per-unit quantities are accumulated; the factual
    ``x`` and ``y`` are also accumulated separately within each arm of the
    instrument. Results depend only on ``(model, n, seed, chunk_size)``.
    """
    plan = plan_for(model)
    stats = tuple(stats)
    unknown = set(stats) - set(EFFECT_STATS)
    if unknown:
        raise ValueError(f"unknown statistic(s): {', '.join(sorted(unknown))}")

    def work(start: int, stop: int) -> tuple[int, list[Accumulator]]:
        block = effects_block(plan, draw_block(model, seed, start, stop))
        ok = block["valid"]
        effects = Accumulator.from_batch(stats, np.stack([block[s][ok] for s in stats]))
        arms = []
        for arm in (0.0, 1.0):
            sel = ok & (block["z"] == arm)
            arms.append(Accumulator.from_batch(ARM_STATS, np.stack([block[s][sel] for s in ARM_STATS])))
        return int((~ok).sum()), [effects, *arms]

    invalid, (effects, arm0, arm1) = stream(n, chunk_size, work, workers)
    return Population(effects, (arm0, arm1), n, seed, invalid)
