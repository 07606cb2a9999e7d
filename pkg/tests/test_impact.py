import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ataria.core import AtomicTask, Category
from ataria.errors import InsufficientHistory, InvalidSizes
from ataria.impact import (
    FALLBACK_IT,
    TSQM,
    ai,
    estimate_w,
    impact_curve,
    impact_exploration_factor,
    impact_interpolate,
    impact_transform,
    ki,
    mni,
    ni,
    tsqm_update,
)
from ataria.quality import QualityModel


def T(tt, i=0):
    return AtomicTask(tt, 0, i)


def _model():
    return QualityModel({("a", 0): 0.9, ("b", 0): 0.5, ("c", 1): 0.7, ("a", 1): 0.2})


def test_ni_identical_and_hand_value():
    m = _model()
    tasks = [T(0)]
    assert ni(m, tasks, {"a"}, {"a"}) == 0
    assert ni(m, tasks, {"b"}, {"a"}) == pytest.approx(0.4)
    assert ni(m, tasks, {"a"}, {"b"}) == pytest.approx(-0.4)


def test_mni_hand_instances():
    m = _model()
    assert mni(m, [T(0)], {"a"}) == 0
    # allocable subsets of {a, b, c} for type 0 reach 0.9 (with a) or 0.5 (b only)
    assert mni(m, [T(0)], {"a", "b", "c"}) == pytest.approx(0.4)
    assert mni(m, [T(1)], {"b"}) == 0  # nobody capable


def test_ki_hand_and_identity():
    m = _model()
    assert ki(m, [T(0)], {"b"}, {"b"}) == 0
    assert ki(m, [T(0)], {"b"}, {"a", "b"}) == pytest.approx(0.4)


def test_ai_linear():
    m = _model()
    args = (m, [T(0)], {"b"}, {"a"}, {"b"}, {"a", "b"}, None)
    assert ai(*args, 0.0, 0.0) == 0
    assert ai(*args, 1.0, 0.0) == pytest.approx(ni(m, [T(0)], {"b"}, {"a"}))
    assert ai(*args, 0.5, 0.25) == pytest.approx(0.5 * 0.4 + 0.25 * 0.4)


@st.composite
def small(draw):
    agents = ["a", "b", "c", "d"]
    table = {(g, t): draw(st.floats(0.05, 1.0)) for g in agents for t in range(2) if draw(st.booleans())}
    table.setdefault(("a", 0), 0.5)
    table.setdefault(("b", 1), 0.5)
    tasks = [T(draw(st.integers(0, 1)), i) for i in range(draw(st.integers(1, 3)))]
    x = frozenset(draw(st.sets(st.sampled_from(agents), min_size=1)) | {"a", "b"})
    y = frozenset(draw(st.sets(st.sampled_from(agents), min_size=1)) | {"a", "b"})
    return QualityModel(table), tasks, x, y


@given(small())
def test_ni_antisymmetric_and_mni_non_negative(inst):
    m, tasks, x, y = inst
    assert ni(m, tasks, x, y) == pytest.approx(-ni(m, tasks, y, x))
    assert mni(m, tasks, x) >= 0
    assert ki(m, tasks, x, x | y) >= -1e-12


@given(small(), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_ai_is_linear_in_probabilities(inst, p, q, lam):
    m, tasks, x, y = inst
    f = lambda pn, pk: ai(m, tasks, x, y, x, x | y, None, pn, pk)
    assert f(lam * p, lam * q) == pytest.approx(lam * f(p, q), abs=1e-9)


def test_estimate_w_worked_example_exact():
    w = estimate_w(100, 10, 20)
    assert w[Category.LINK] == Fraction(1, 8)
    assert w[Category.INFO] == Fraction(3, 5)
    assert w[Category.ALLOC] == 0


def test_estimate_w_boundaries():
    assert estimate_w(50, 7, 7)[Category.LINK] == 0
    assert estimate_w(20, 5, 20)[Category.INFO] == 0
    for bad in [(10, 0, 5), (10, 6, 5), (4, 2, 5)]:
        with pytest.raises(InvalidSizes):
            estimate_w(*bad)


def test_tsqm_two_by_two_trace():
    t = TSQM(2, 2)
    tsqm_update(t, 0.5)
    tsqm_update(t, 0.7)
    assert t.rows[0] == [0.7, 0.5]
    assert t.rows[1][0] == pytest.approx(0.6)
    assert t.rows[1][1] is None


def test_tsqm_constant_inserts():
    t = TSQM(3, 4)
    for _ in range(70):
        t.update(0.3)
    assert all(v == pytest.approx(0.3) for row in t.rows for v in row if v is not None)


def test_tsqm_row_one_full_after_n_squared():
    t = TSQM(3, 5)
    for i in range(25):
        t.update(i / 25)
    assert sum(v is not None for v in t.rows[1]) == 5


def _reference_rows(values, m, n):
    hist = [list(values)]
    for _ in range(1, m):
        prev = hist[-1]
        hist.append([sum(prev[k * n:(k + 1) * n]) / n for k in range(len(prev) // n)])
    rows = []
    for h in hist:
        latest = list(reversed(h[-n:])) if h else []
        rows.append(latest + [None] * (n - len(latest)))
    return rows


@given(st.integers(1, 4), st.integers(1, 4), st.lists(st.floats(0, 1), max_size=120))
def test_tsqm_rollup_matches_reference(m, n, values):
    t = TSQM(m, n)
    for v in values:
        t.update(v)
    ref = _reference_rows(values, m, n)
    for got, want in zip(t.rows, ref):
        assert [g is None for g in got] == [w is None for w in want]
        assert [g for g in got if g is not None] == pytest.approx([w for w in want if w is not None])
    for i in range(m):
        assert t.inserted[i] == (len(values) // n ** i) % n
    if values:
        lo, hi = min(values), max(values)
        assert all(lo - 1e-12 <= v <= hi + 1e-12 for row in t.rows for v in row if v is not None)


def _tsqm_from_averages(avgs, n=2):
    t = TSQM(len(avgs), n)
    for i, a in enumerate(avgs):
        t.rows[i] = [a] + [None] * (n - 1)
    return t


def test_interpolate_flat_and_knots():
    t = _tsqm_from_averages([0.4, 0.4, 0.4])
    for x in (0, 0.3, 1):
        assert impact_interpolate(t, 1.0, x) == pytest.approx(0.4)
    t2 = _tsqm_from_averages([0.8, 0.2])
    assert impact_interpolate(t2, 0.7, 0.0) == 0.8


def test_interpolate_zero_decay():
    t = _tsqm_from_averages([0.8, 0.6])
    assert impact_interpolate(t, 0.0, 0.5) == pytest.approx(0.4)
    assert impact_interpolate(t, 0.0, 1.0) == 0


def test_interpolate_needs_two_rows():
    t = TSQM(3, 3)
    t.update(0.4)
    with pytest.raises(InsufficientHistory):
        impact_interpolate(t, 1.0, 0.5)


def test_transform_endpoints_and_symmetry():
    t = _tsqm_from_averages([0.5, 0.5, 0.5])
    assert impact_transform(t, 1.0, 0.0) == 1.0
    assert impact_transform(t, 1.0, 1.0) == 0.0
    assert impact_exploration_factor(t, 1.0) == pytest.approx(0.5)
    assert impact_transform(t, 1.0, 0.2) == pytest.approx(0.8)
    assert impact_transform(t, 1.0, 0.1) == pytest.approx(0.9)


def test_transform_front_loaded_hand_value():
    # II falls linearly 1.0 -> 0.2; first half holds 0.4 of the 0.6 total
    t = _tsqm_from_averages([1.0, 0.2])
    assert impact_exploration_factor(t, 1.0) == pytest.approx(1 / 3)


def test_transform_fallbacks():
    assert impact_transform(TSQM(), 1.0, 0.3) == FALLBACK_IT
    assert impact_transform(_tsqm_from_averages([0.0, 0.0]), 1.0, 0.3) == FALLBACK_IT


@settings(max_examples=1000, deadline=None)
@given(st.integers(2, 6), st.lists(st.floats(0, 1), min_size=2, max_size=6), st.floats(0, 1),
       st.lists(st.floats(0, 1), min_size=2, max_size=8))
def test_transform_bounded_and_monotone(n, avgs, decay, xs):
    t = _tsqm_from_averages(avgs, n)
    curve = impact_curve(t, decay)
    xs = sorted(xs)
    vals = [impact_transform(t, decay, x) for x in xs]
    assert all(0.0 <= v <= 1.0 for v in vals)
    if curve is not None and curve.total > 0:
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        assert impact_transform(t, decay, 0.0) == 1.0
        assert impact_transform(t, decay, 1.0) == 0.0


def test_curve_integral_matches_numeric_quadrature():
    rng = random.Random(2)
    for _ in range(50):
        t = _tsqm_from_averages([rng.random() for _ in range(rng.randint(2, 7))])
        curve = impact_curve(t, 0.9)
        x = rng.random()
        grid = np.linspace(0, x, 20001)
        trap = getattr(np, "trapezoid", None) or np.trapz
        numeric = trap(np.interp(grid, curve.xs, curve.ys), grid)
        assert curve.integral(x) == pytest.approx(float(numeric), abs=1e-6)
