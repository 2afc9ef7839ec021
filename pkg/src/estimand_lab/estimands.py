"""Monte Carlo estimands over simulated potential outcomes.

All estimands of one call come from a single coupled run: every unit is
evaluated under do(Z=0) and do(Z=1) with the same exogenous draws, so
ratio and difference estimates share noise. Standard errors of ratios use
the first-order delta method with the covariance from that run.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .engine import DEFAULT_CHUNK, Accumulator, Intervention, Population, draw_block, evaluate_block, run_population, stream
from .model import ModelError, ModelTemplate, StructuralModel
from .rng import mix_int
from .symbolic import AssumptionReport, UndecidableError, check_assumptions

RELEVANCE_TOL = 1e-8
MAX_GRID_POINTS = 1_000_000


class RelevanceError(ArithmeticError):
    """The instrument has (numerically) no effect on the exposure."""


class InsufficientDataError(ValueError):
    """One arm of the instrument has no units."""


@dataclass(frozen=True)
class Estimate:
    value: float
    mc_se: float
    n: int
    seed: int
    kind: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "mc_se": self.mc_se, "n": self.n, "seed": self.seed}


def _mean_estimate(pop: Population, stat: str, kind: str) -> Estimate:
    return Estimate(pop.effects.mean(stat), pop.effects.se(stat), pop.n, pop.seed, kind)


def _wald_from_population(pop: Population) -> Estimate:
    acc = pop.effects
    mx, my = acc.mean("beta_zx"), acc.mean("beta_zy")
    if abs(mx) < RELEVANCE_TOL:
        raise RelevanceError(
            f"mean instrument effect on the exposure is {mx:.3g}; the Wald ratio is undefined"
        )
    ratio = my / mx
    se = acc.linear_se({"beta_zy": 1.0 / mx, "beta_zx": -ratio / mx})
    return Estimate(ratio, se, pop.n, pop.seed, "wald_true")


def wald_from_arms(arm0: Accumulator, arm1: Accumulator) -> tuple[float, float]:
    """Ratio of arm differences in ``y`` and ``x`` with a delta-method SE."""
    if arm0.count == 0 or arm1.count == 0:
        raise InsufficientDataError(
            f"both instrument arms need units (got {arm0.count} with Z=0, {arm1.count} with Z=1)"
        )
    dx = arm1.mean("x") - arm0.mean("x")
    dy = arm1.mean("y") - arm0.mean("y")
    if abs(dx) < RELEVANCE_TOL:
        raise RelevanceError(f"exposure difference between instrument arms is {dx:.3g}")
    ratio = dy / dx

    def arm_cov(a: str, b: str) -> float:
        return arm1.cov(a, b) / arm1.count + arm0.cov(a, b) / arm0.count

    var = arm_cov("y", "y") - 2.0 * ratio * arm_cov("x", "y") + ratio**2 * arm_cov("x", "x")
    return ratio, math.sqrt(max(var, 0.0)) / abs(dx)


def _run(model, n, seed, chunk_size, workers) -> Population:
    return run_population(model, n, seed, chunk_size=chunk_size, workers=workers)


def ade(model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None) -> Estimate:
    """Average derivative effect: mean of the unit-level dY/dX at factual values."""
    return _mean_estimate(_run(model, n, seed, chunk_size, workers), "dydx", "ade")


def wald_true(model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None) -> Estimate:
    """E[Y(Z=1) - Y(Z=0)] / E[X(Z=1) - X(Z=0)] from potential outcomes."""
    return _wald_from_population(_run(model, n, seed, chunk_size, workers))


def wald_observational(
    model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None
) -> Estimate:
    """The Wald ratio an analyst computes from factual (Z, X, Y) data."""
    pop = _run(model, n, seed, chunk_size, workers)
    value, se = wald_from_arms(*pop.arms)
    return Estimate(value, se, n, seed, "wald_obs")


def reduced_form_dydz(
    model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None
) -> Estimate:
    """Mean over factual draws of dY/dZ with the exposure equation substituted in."""
    return _mean_estimate(_run(model, n, seed, chunk_size, workers), "dydz", "reduced_form_dydz")


def exposure_mean(model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None) -> Estimate:
    return _mean_estimate(_run(model, n, seed, chunk_size, workers), "x", "diagnostic")


def ace(
    model: StructuralModel,
    x_from: float,
    x_to: float,
    n: int,
    seed: int,
    *,
    chunk_size=DEFAULT_CHUNK,
    workers=None,
) -> Estimate:
    """E[Y(X=x_to) - Y(X=x_from)] with shared noise across the two interventions."""
    x, y = model.exposure, model.outcome
    do_from = Intervention(((x, float(x_from)),))
    do_to = Intervention(((x, float(x_to)),))

    def work(start: int, stop: int):
        exo = draw_block(model, seed, start, stop)
        y_from = evaluate_block(model, exo, do_from)[y]
        y_to = y_from if x_to == x_from else evaluate_block(model, exo, do_to)[y]
        diff = y_to - y_from
        ok = np.isfinite(diff)
        return int((~ok).sum()), [Accumulator.from_batch(("ace",), diff[ok][None, :])]

    _, (acc,) = stream(n, chunk_size, work, workers)
    return Estimate(acc.mean("ace"), acc.se("ace"), n, seed, "ace")


@dataclass(frozen=True)
class GapReport:
    """Wald-versus-ADE comparison for one model from one coupled run.

    ``gap_se`` is the delta-method standard error of ``gap``.
    """

    ade: Estimate
    wald_true: Estimate
    wald_obs: Estimate
    gap: float
    gap_se: float
    identity_gap: Estimate
    nosh_cov: Estimate
    var_beta_zx: Estimate
    exposure_mean: Estimate
    beta_zx_mean: Estimate
    beta_zy_mean: Estimate
    reduced_form: Estimate
    assumptions: AssumptionReport
    n_invalid: int = 0

    def estimates(self) -> list[tuple[str, Estimate]]:
        return [
            ("ade", self.ade),
            ("wald_true", self.wald_true),
            ("wald_obs", self.wald_obs),
            ("identity_gap", self.identity_gap),
            ("nosh_cov", self.nosh_cov),
            ("var_beta_zx", self.var_beta_zx),
            ("mean_x", self.exposure_mean),
            ("mean_beta_zx", self.beta_zx_mean),
            ("mean_beta_zy", self.beta_zy_mean),
            ("reduced_form_dydz", self.reduced_form),
        ]


def diagnostics(model: StructuralModel, n: int, seed: int, *, chunk_size=DEFAULT_CHUNK, workers=None) -> GapReport:
    """ADE, Wald estimands, identity and NOSH diagnostics in one pass."""
    pop = _run(model, n, seed, chunk_size, workers)
    acc = pop.effects
    ade_est = _mean_estimate(pop, "dydx", "ade")
    wald = _wald_from_population(pop)
    obs_value, obs_se = wald_from_arms(*pop.arms)
    mx = acc.mean("beta_zx")
    gap_se = acc.linear_se({"beta_zy": 1.0 / mx, "beta_zx": -wald.value / mx, "dydx": -1.0})

    cov = acc.cov("beta_zx", "dydx")
    var_zx, var_dydx = acc.var("beta_zx"), acc.var("dydx")
    # normal-theory standard errors for second moments
    cov_se = math.sqrt((var_zx * var_dydx + cov**2) / n)
    var_se = var_zx * math.sqrt(2.0 / max(pop.effects.count - 1, 1))

    def diag(value: float, se: float) -> Estimate:
        return Estimate(value, se, n, seed, "diagnostic")

    return GapReport(
        ade=ade_est,
        wald_true=wald,
        wald_obs=Estimate(obs_value, obs_se, n, seed, "wald_obs"),
        gap=wald.value - ade_est.value,
        gap_se=gap_se,
        identity_gap=diag(acc.mean("identity"), acc.se("identity")),
        nosh_cov=diag(cov, cov_se),
        var_beta_zx=diag(var_zx, var_se),
        exposure_mean=diag(acc.mean("x"), acc.se("x")),
        beta_zx_mean=diag(acc.mean("beta_zx"), acc.se("beta_zx")),
        beta_zy_mean=diag(acc.mean("beta_zy"), acc.se("beta_zy")),
        reduced_form=_mean_estimate(pop, "dydz", "reduced_form_dydz"),
        assumptions=check_assumptions(model),
        n_invalid=pop.n_invalid,
    )


# -- parameter scans --------------------------------------------------------


def grid_values(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive arithmetic grid ``lo, lo+step, ..., <= hi``."""
    if not all(math.isfinite(v) for v in (lo, hi, step)):
        raise ValueError("grid bounds and step must be finite")
    if hi < lo:
        raise ValueError(f"grid upper bound {hi:g} is below lower bound {lo:g}")
    if lo == hi:
        return [float(lo)]
    if step <= 0:
        raise ValueError("grid step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if count > MAX_GRID_POINTS:
        raise ValueError(f"grid has {count} points; the limit is {MAX_GRID_POINTS}")
    return [round(lo + i * step, 12) for i in range(count)]


@dataclass(frozen=True)
class ScanRow:
    index: int
    params: Mapping[str, float]
    seed: int
    ade: Optional[Estimate] = None
    wald_true: Optional[Estimate] = None
    gap: Optional[float] = None
    gap_se: Optional[float] = None
    error: Optional[str] = None


def scan_gap(
    template: ModelTemplate,
    grid: Mapping[str, Sequence[float]],
    n: int,
    seed: int,
    *,
    chunk_size=DEFAULT_CHUNK,
    workers=None,
) -> list[ScanRow]:
    """Wald-minus-ADE gap over a grid of parameter values.

    ``grid`` maps each template parameter to its values (see
    :func:`grid_values`). Points are visited in lexicographic order and
    point ``i`` is simulated with seed ``mix(seed, i)``. A failing point
    yields a row with ``error`` set; the scan carries on. Rows are
    exploratory output and are not corrected for multiple comparisons.
    """
    names = list(grid)
    if set(names) != set(template.params):
        raise ValueError(
            f"grid parameters {sorted(names)} do not match template parameters {sorted(template.params)}"
        )
    axes = [list(grid[p]) for p in names]
    total = math.prod(len(a) for a in axes)
    if total == 0:
        raise ValueError("the grid is empty")
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid has {total} points; the limit is {MAX_GRID_POINTS}")

    rows = []
    for index, point in enumerate(itertools.product(*axes)):
        params = dict(zip(names, point))
        point_seed = mix_int(seed, index)
        try:
            report = diagnostics(template.bind(params), n, point_seed, chunk_size=chunk_size, workers=workers)
        except (ArithmeticError, ModelError, UndecidableError, ValueError) as exc:
            rows.append(ScanRow(index, params, point_seed, error=str(exc).splitlines()[0]))
            continue
        rows.append(ScanRow(index, params, point_seed, report.ade, report.wald_true, report.gap, report.gap_se))
    return rows


# -- estimator on factual data ---------------------------------------------


class WaldEstimator(RegressorMixin, BaseEstimator):
    """Wald (grouping) IV estimator for a binary instrument.

    Parameters
    ----------
    relevance_tol : float, default=1e-8
        Smallest absolute difference in mean exposure between the two
        instrument arms accepted as a non-degenerate first stage.

    Attributes
    ----------
    coef_ : ndarray of shape (1,)
        Ratio of the outcome difference to the exposure difference between
        instrument arms.
    intercept_ : float
        ``mean(y) - coef_ * mean(X)``, so that ``predict`` passes through
        the sample means.
    se_ : float
        Delta-method standard error of ``coef_``.
    n_features_in_ : int
        Always 1.
    """

    def __init__(self, relevance_tol=RELEVANCE_TOL):
        self.relevance_tol = relevance_tol

    def fit(self, X, y, instrument):
        """Fit from exposure ``X``, outcome ``y`` and binary ``instrument``.

        Parameters
        ----------
        X : array-like of shape (n_samples,) or (n_samples, 1)
        y : array-like of shape (n_samples,)
        instrument : array-like of shape (n_samples,), values in {0, 1}

        Returns
        -------
        self : object
        """
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1))
        if X.shape[1] != 1:
            raise ValueError(f"WaldEstimator takes a single exposure column, got {X.shape[1]}")
        y = check_array(np.asarray(y, dtype=float), ensure_2d=False)
        z = check_array(np.asarray(instrument, dtype=float), ensure_2d=False)
        check_consistent_length(X, y, z)
        if not np.isin(z, (0.0, 1.0)).all():
            raise ValueError("instrument must be binary (0/1)")
        x = X[:, 0]
        arms = [Accumulator.from_batch(("x", "y"), np.stack([x[z == a], y[z == a]])) for a in (0.0, 1.0)]
        if arms[0].count and arms[1].count:
            dx = arms[1].mean("x") - arms[0].mean("x")
            if abs(dx) < self.relevance_tol:
                raise RelevanceError(f"exposure difference between instrument arms is {dx:.3g}")
        coef, se = wald_from_arms(*arms)
        self.coef_ = np.array([coef])
        self.intercept_ = float(y.mean() - coef * x.mean())
        self.se_ = se
        self.arm_counts_ = (arms[0].count, arms[1].count)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, ["coef_", "intercept_"])
        X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1))
        return self.intercept_ + X @ self.coef_
