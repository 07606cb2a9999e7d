"""Action-impact quantities and the time-summarised quality matrix (TSQM).

The TSQM keeps a rolling history of returned qualities at ``m`` time scales.
Row 0 holds the latest raw values; every ``n`` fresh entries in a row push the
row's mean onto the front of the next row. The impact transformation compares
how much of the (decayed) quality mass sits at short versus long time scales.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Mapping, Optional

import numpy as np

from .core import Category
from .errors import InsufficientHistory, InvalidSizes, NonAllocable
from .quality import DEFAULT_BUDGET, QualityModel, _allocable, _ordered, allhoods, oq

FALLBACK_IT = 0.5


def ni(model: QualityModel, tasks, n_old, n_new, fixed_alloc=None, budget: int = DEFAULT_BUDGET) -> float:
    tasks = list(tasks)
    if set(n_old) == set(n_new):
        return 0.0
    return oq(model, tasks, n_new, fixed_alloc, budget) - oq(model, tasks, n_old, fixed_alloc, budget)


def mni(model: QualityModel, tasks, pool, fixed_alloc=None, budget: int = DEFAULT_BUDGET) -> float:
    """Largest neighbourhood impact between any two subsets of ``pool``.

    Subsets that cannot cover the tasks have no locally-optimal quality and are
    skipped; with no coverable subset the result is 0.
    """
    tasks = list(tasks)
    pool = _ordered(pool)
    if 2 ** len(pool) > budget:
        from .errors import BudgetExceeded
        raise BudgetExceeded(f"2^{len(pool)} subsets")
    values = []
    for hood in allhoods(None, pool, budget, max_size=len(pool)):
        if _allocable(model, tasks, hood):
            values.append(oq(model, tasks, hood, fixed_alloc, budget))
    if not values:
        return 0.0
    # max over ordered pairs of oq(Y) - oq(X)
    return max(values) - min(values)


def ki(model: QualityModel, tasks, k_old, k_new, fixed_alloc=None, budget: int = DEFAULT_BUDGET) -> float:
    if set(k_old) == set(k_new):
        return 0.0
    return mni(model, tasks, k_new, fixed_alloc, budget) - mni(model, tasks, k_old, fixed_alloc, budget)


def ai(model: QualityModel, tasks, n_old, n_new, k_old, k_new, fixed_alloc, p_n: float, p_k: float,
       budget: int = DEFAULT_BUDGET) -> float:
    total = 0.0
    if p_n:
        total += p_n * ni(model, tasks, n_old, n_new, fixed_alloc, budget)
    if p_k:
        total += p_k * ki(model, tasks, k_old, k_new, fixed_alloc, budget)
    return total


@dataclass(frozen=True)
class ImpactWeights:
    w: Mapping[Category, Real] = field(default_factory=dict)

    def __getitem__(self, cat: Category):
        return self.w.get(cat, 0)

    @classmethod
    def of(cls, link, info) -> "ImpactWeights":
        return cls({Category.LINK: link, Category.INFO: info})


def estimate_w(system_size: int, nbr_size: int, knowledge_size: int) -> ImpactWeights:
    """Approximate action impacts for LINK and INFO from system, neighbourhood and
    knowledge sizes, in exact rational arithmetic."""
    if not 0 < nbr_size <= knowledge_size <= system_size:
        raise InvalidSizes((system_size, nbr_size, knowledge_size))
    nk = Fraction(nbr_size, knowledge_size)
    kg = Fraction(knowledge_size, system_size)
    link = (nk / 2) * (1 - nk)
    info = (1 - nk / 2) * (1 - kg)
    return ImpactWeights.of(link, info)


class TSQM:
    """Time-summarised quality matrix of shape ``(m, n)``."""

    def __init__(self, m: int = 10, n: int = 10):
        if m < 1 or n < 1:
            raise ValueError("TSQM dimensions must be positive")
        self.m, self.n = m, n
        self.rows: list[list[Optional[float]]] = [[None] * n for _ in range(m)]
        self.inserted = [0] * m  # entries since the row last rolled up
        self.total = 0

    def _push(self, i: int, value: float) -> None:
        row = self.rows[i]
        row.pop()
        row.insert(0, value)
        self.inserted[i] += 1
        if self.inserted[i] == self.n:
            self.inserted[i] = 0
            if i + 1 < self.m:
                self._push(i + 1, row_average(row))

    def update(self, quality: float) -> "TSQM":
        self.total += 1
        self._push(0, float(quality))
        return self

    def populated_rows(self) -> list[int]:
        return [i for i, row in enumerate(self.rows) if any(v is not None for v in row)]

    def copy(self) -> "TSQM":
        t = TSQM(self.m, self.n)
        t.rows = [list(r) for r in self.rows]
        t.inserted = list(self.inserted)
        t.total = self.total
        return t


def row_average(row) -> Optional[float]:
    vals = [v for v in row if v is not None]
    return sum(vals) / len(vals) if vals else None


def tsqm_update(t: TSQM, quality: float) -> TSQM:
    return t.update(quality)


def _knots(t: TSQM, decay: float) -> tuple[np.ndarray, np.ndarray]:
    rows = t.populated_rows()
    if len(rows) < 2:
        raise InsufficientHistory(len(rows))
    R = len(rows)
    xs = np.array([j / (R - 1) for j in range(R)])
    ys = np.array([row_average(t.rows[i]) * decay ** i for i in rows])
    return xs, ys


def impact_interpolate(t: TSQM, decay: float, x: float) -> float:
    xs, ys = _knots(t, decay)
    return float(np.interp(x, xs, ys))


class ImpactCurve:
    """Cumulative trapezoid integral of the interpolant, evaluated exactly."""

    def __init__(self, xs: np.ndarray, ys: np.ndarray):
        self.xs, self.ys = xs, ys
        seg = (ys[1:] + ys[:-1]) * np.diff(xs) / 2.0
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.total = float(self.cum[-1])

    def integral(self, x: float) -> float:
        xs, ys = self.xs, self.ys
        if x <= xs[0]:
            return 0.0
        if x >= xs[-1]:
            return self.total
        j = int(np.searchsorted(xs, x, side="right")) - 1
        y_x = ys[j] + (ys[j + 1] - ys[j]) * (x - xs[j]) / (xs[j + 1] - xs[j])
        return float(self.cum[j] + (ys[j] + y_x) * (x - xs[j]) / 2.0)

    def transform(self, x: float) -> float:
        if not self.total > 0:
            return FALLBACK_IT
        v = 1.0 - self.integral(x) / self.total
        return min(1.0, max(0.0, v))


def impact_curve(t: TSQM, decay: float) -> Optional[ImpactCurve]:
    try:
        xs, ys = _knots(t, decay)
    except InsufficientHistory:
        return None
    return ImpactCurve(xs, ys)


def impact_transform(t: TSQM, decay: float, x: float) -> float:
    curve = impact_curve(t, decay)
    if curve is None:
        return FALLBACK_IT
    return curve.transform(float(x))


def impact_exploration_factor(t: TSQM, decay: float) -> float:
    return impact_transform(t, decay, 0.5)
