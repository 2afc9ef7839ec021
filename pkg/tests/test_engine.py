import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from estimand_lab.engine import (
    Accumulator,
    Intervention,
    ModelDomainError,
    UnitDraw,
    draw_block,
    draw_exogenous,
    effects_block,
    evaluate,
    plan_for,
    run_population,
    unit_effects,
)
from estimand_lab.model import EvaluationError

from .conftest import make_model


def paper_unit(z=0.0, u=0.0, ex=0.0, ey=0.0):
    return UnitDraw(0, {"Z": z, "U": u, "eX": ex, "eY": ey})


def test_do_instrument(paper):
    one = evaluate(paper, paper_unit(), Intervention.of(Z=1))
    zero = evaluate(paper, paper_unit(), Intervention.of(Z=0))
    assert (one["X"], one["Y"]) == (2.0, 8.0)
    assert (zero["X"], zero["Y"]) == (0.0, 0.0)


def test_do_exposure(paper):
    assert evaluate(paper, paper_unit(z=1.0), Intervention.of(X=1))["Y"] == 2.0


def test_natural_values(paper):
    v = evaluate(paper, paper_unit(z=1.0, u=1.0, ex=0.5, ey=-1.0))
    assert v["X"] == 3.5
    assert v["Y"] == 2 * 3.5**2 + 1.0 - 1.0


def test_intervention_targets_distinct():
    with pytest.raises(ValueError):
        Intervention((("X", 1.0), ("X", 2.0)))


def test_intervention_unknown_target(paper):
    with pytest.raises(KeyError):
        evaluate(paper, paper_unit(), Intervention.of(Q=1))


def test_evaluation_error():
    m = make_model("2*Z + eX", "log(X) + eY")
    with pytest.raises(EvaluationError):
        evaluate(m, UnitDraw(0, {"Z": 0.0, "U": 0.0, "eX": -1.0, "eY": 0.0}))


def test_unit_effects_paper(paper):
    e = unit_effects(paper, paper_unit())
    assert (e.x0, e.x1, e.y0, e.y1) == (0.0, 2.0, 0.0, 8.0)
    assert e.beta_zx == 2.0 and e.beta_zy == 8.0 and e.slope == 4.0
    e = unit_effects(paper, paper_unit(u=1.0))
    assert e.beta_zy == 16.0 and e.slope == 8.0


def test_unit_effects_linear():
    m = make_model("2*Z + U + eX", "3*X + eY")
    e = unit_effects(m, draw_exogenous(m, 5, 1))
    assert e.slope == e.dydx == 3.0


def test_undefined_slope_is_none():
    m = make_model("Z + U*Z - Z + eX", "X + eY", extra="")
    e = unit_effects(m, UnitDraw(0, {"Z": 0.0, "U": 0.0, "eX": 0.0, "eY": 0.0}))
    assert e.beta_zx == 0.0 and e.slope is None


def test_draws_are_coupled(paper):
    block = effects_block(plan_for(paper), draw_block(paper, 1, 0, 1000))
    exo = draw_block(paper, 1, 0, 1000)
    assert np.allclose(block["x1"] - block["x0"], 2.0, rtol=0, atol=1e-12)
    assert np.all(block["beta_zx"] == 2.0)  # symbolic contrast, no rounding
    assert np.array_equal(block["y0"], 2 * (exo["U"] + exo["eX"]) ** 2 + exo["U"] + exo["eY"])


def test_draw_exogenous_matches_block(paper):
    block = draw_block(paper, 9, 0, 50)
    unit = draw_exogenous(paper, 37, 9)
    assert unit.values == {k: float(v[37]) for k, v in block.items()}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2**32))
def test_identity_per_unit_quadratic(index, seed):
    # on the quadratic model the slope equals the derivative at the midpoint
    from estimand_lab.parser import parse_model
    from estimand_lab.builtins import PAPER

    m = parse_model(PAPER)
    e = unit_effects(m, draw_exogenous(m, index, seed))
    assert e.slope * e.beta_zx == pytest.approx(e.beta_zy, rel=1e-12, abs=1e-12)
    assert e.slope == pytest.approx(4 * (e.x0 + e.x1) / 2, rel=1e-9, abs=1e-9)


# -- accumulator ------------------------------------------------------------

_cols = st.integers(1, 40).flatmap(
    lambda m: arrays(np.float64, (3, m), elements=st.floats(-1e3, 1e3, allow_nan=False))
)


def _close(a: Accumulator, b: Accumulator) -> None:
    assert a.count == b.count
    scale = 1.0 + np.abs(a.means).max()
    assert np.allclose(a.means, b.means, rtol=1e-12, atol=1e-12 * scale)
    cscale = 1.0 + np.abs(a.comoments).max()
    assert np.allclose(a.comoments, b.comoments, rtol=1e-12, atol=1e-12 * cscale)


NAMES = ("a", "b", "c")


@settings(max_examples=200, deadline=None)
@given(_cols, _cols, _cols)
def test_merge_associative(x, y, z):
    A, B, C = (Accumulator.from_batch(NAMES, c) for c in (x, y, z))
    _close(A.merge(B).merge(C), A.merge(B.merge(C)))


@settings(max_examples=200, deadline=None)
@given(_cols, _cols)
def test_merge_matches_direct(x, y):
    merged = Accumulator.from_batch(NAMES, x).merge(Accumulator.from_batch(NAMES, y))
    _close(merged, Accumulator.from_batch(NAMES, np.hstack([x, y])))


@settings(max_examples=100, deadline=None)
@given(_cols)
def test_welford_rows_match_numpy(x):
    acc = Accumulator(NAMES)
    for col in x.T:
        acc.update(col)
    assert np.allclose(acc.means, x.mean(axis=1), rtol=1e-12, atol=1e-9)
    if x.shape[1] > 1:
        assert acc.cov("a", "b") == pytest.approx(np.cov(x)[0, 1], rel=1e-9, abs=1e-6)


def test_linear_se_of_difference():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(10_000)
    acc = Accumulator.from_batch(("a", "b"), np.stack([a, a + 1.0]))
    assert acc.linear_se({"a": 1.0, "b": -1.0}) == 0.0
    assert acc.linear_se({"a": 1.0}) == pytest.approx(acc.se("a"))


def test_merge_rejects_mismatched_names():
    with pytest.raises(ValueError):
        Accumulator(("a",)).merge_in(Accumulator(("b",)))


# -- population runs --------------------------------------------------------


def _snapshot(pop):
    return (pop.effects.means.tobytes(), pop.effects.comoments.tobytes(),
            pop.arms[0].means.tobytes(), pop.arms[1].comoments.tobytes(), pop.n_invalid)


def test_worker_count_does_not_change_results(paper, monkeypatch):
    base = _snapshot(run_population(paper, 50_000, 3, chunk_size=4096, workers=1))
    assert _snapshot(run_population(paper, 50_000, 3, chunk_size=4096, workers=4)) == base
    monkeypatch.setenv("ESTIMAND_LAB_THREADS", "3")
    assert _snapshot(run_population(paper, 50_000, 3, chunk_size=4096)) == base


def test_chunking_changes_only_rounding(paper):
    a = run_population(paper, 20_000, 3, chunk_size=1000)
    b = run_population(paper, 20_000, 3, chunk_size=20_000)
    assert np.allclose(a.effects.means, b.effects.means, rtol=1e-12)


def test_prefix_units_shared(paper):
    # unit i has the same draws whatever n is
    small = draw_block(paper, 1, 0, 100)
    big = draw_block(paper, 1, 0, 1000)
    assert all(np.array_equal(small[k], big[k][:100]) for k in small)


def test_too_many_invalid_units_abort():
    m = make_model("2*Z + eX", "log(X) + eY")  # about half the units have X <= 0
    with pytest.raises(ModelDomainError, match="evaluation error"):
        run_population(m, 10_000, 1)


def test_few_invalid_units_are_skipped():
    m = make_model("2*Z + eX + 4", "log(X) + eY")  # X <= 0 only far in the tail
    pop = run_population(m, 100_000, 1)
    assert 0 < pop.n_invalid <= 1000
    assert pop.effects.count == 100_000 - pop.n_invalid


def test_unknown_stat_rejected(paper):
    with pytest.raises(ValueError, match="unknown statistic"):
        run_population(paper, 10, 1, stats=("nope",))
