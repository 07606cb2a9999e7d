"""Task quality under concurrency and brute-force allocation optimality.

Everything here enumerates explicitly. The functions are meant as ground truth,
so they trade speed for obviousness; callers bound the work with ``budget``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, Incapable, NonAllocable, UnallocatedTask

DEFAULT_BUDGET = 10**7

AllocationMap = Mapping  # AtomicTask -> agent id


def power_law(exponent: float = 1.0) -> Callable[[float, int], float]:
    """Concurrency law ``base * k**-exponent``; exponent 1 splits resources evenly."""
    if exponent < 0:
        raise ValueError("exponent must be non-negative")
    if exponent == 1.0:
        return lambda b, k: b / k
    return lambda b, k: b * k ** (-exponent)


def even_split(b, k):
    return b / k


@dataclass(frozen=True)
class QualityModel:
    base_quality: Mapping[tuple[Hashable, int], float]
    concurrency_law: Callable = even_split
    _best: dict = field(default_factory=dict, compare=False, repr=False)

    def base(self, agent, task_type) -> Optional[float]:
        return self.base_quality.get((agent, task_type))

    def capable(self, agent, task_type) -> bool:
        return (agent, task_type) in self.base_quality

    def best_base(self, task_type) -> float:
        """Highest isolated quality any agent achieves for ``task_type`` (0 if nobody can)."""
        try:
            return self._best[task_type]
        except KeyError:
            vals = [q for (g, tt), q in self.base_quality.items() if tt == task_type]
            best = max(vals) if vals else 0.0
            self._best[task_type] = best
            return best


def omega(model: QualityModel, agent, task_type, k: int) -> float:
    if k < 1:
        raise ValueError("concurrency count must be at least 1")
    b = model.base(agent, task_type)
    if b is None:
        raise Incapable((agent, task_type))
    return model.concurrency_law(b, k)


def concurrent(alloc: AllocationMap, agent) -> set:
    return {at for at, g in alloc.items() if g == agent}


def _loads(alloc: AllocationMap) -> dict:
    counts: dict = {}
    for g in alloc.values():
        counts[g] = counts.get(g, 0) + 1
    return counts


def ql(model: QualityModel, tasks: Iterable, alloc: AllocationMap) -> float:
    counts = _loads(alloc)
    total = 0.0
    for at in tasks:
        if at not in alloc:
            raise UnallocatedTask(at)
        g = alloc[at]
        total += omega(model, g, at.task_type, counts[g])
    return total


def _check_budget(n_agents: int, n_tasks: int, budget: int) -> None:
    if n_tasks and n_agents ** n_tasks > budget:
        raise BudgetExceeded(f"{n_agents}^{n_tasks} candidate allocations")


def permutations(tasks: Sequence, agents: Sequence, budget: int = DEFAULT_BUDGET) -> Iterator[dict]:
    """Every total assignment of ``tasks`` onto ``agents``, in lexicographic order."""
    tasks = list(tasks)
    agents = list(agents)
    _check_budget(len(agents), len(tasks), budget)
    for combo in itertools.product(agents, repeat=len(tasks)):
        yield dict(zip(tasks, combo))


def _ordered(xs) -> list:
    return sorted(xs, key=repr)


def _allocable(model: QualityModel, tasks, agents) -> bool:
    return all(any(model.capable(g, at.task_type) for g in agents) for at in tasks)


def ol(model: QualityModel, tasks, agents, fixed_alloc: Optional[AllocationMap] = None,
       budget: int = DEFAULT_BUDGET) -> dict:
    """Locally-optimal allocation of ``tasks`` onto ``agents`` on top of ``fixed_alloc``.

    Only capable candidates are scored; the first maximum in enumeration order wins.
    """
    fixed = dict(fixed_alloc or {})
    tasks = list(tasks)
    agents = _ordered(agents)
    if not _allocable(model, tasks, agents):
        raise NonAllocable(tasks)
    _check_budget(len(agents), len(tasks), budget)
    best, best_q = None, -math.inf
    for cand in permutations(tasks, agents, budget):
        if any(not model.capable(g, at.task_type) for at, g in cand.items()):
            continue
        merged = dict(fixed)
        merged.update(cand)
        q = ql(model, tasks, merged)
        if q > best_q:
            best, best_q = cand, q
    return best


def oq(model: QualityModel, tasks, agents, fixed_alloc: Optional[AllocationMap] = None,
       budget: int = DEFAULT_BUDGET) -> float:
    tasks = list(tasks)
    fixed = dict(fixed_alloc or {})
    best = ol(model, tasks, agents, fixed, budget)
    fixed.update(best)
    return ql(model, tasks, fixed)


def allhoods(agent, pool, budget: int = DEFAULT_BUDGET, max_size: Optional[int] = None) -> Iterator[frozenset]:
    """Candidate neighbourhoods drawn from ``pool``.

    By default sizes run strictly below ``agent.delta_n``; ``max_size`` overrides
    the bound with an inclusive one.
    """
    pool = _ordered(pool)
    top = agent.delta_n - 1 if max_size is None else max_size
    top = min(top, len(pool))
    count = sum(math.comb(len(pool), r) for r in range(0, top + 1)) if top >= 0 else 0
    if count > budget:
        raise BudgetExceeded(f"{count} neighbourhoods")
    for r in range(0, top + 1):
        for combo in itertools.combinations(pool, r):
            yield frozenset(combo)


def on(model: QualityModel, tasks, agent, pool, fixed_alloc=None, budget: int = DEFAULT_BUDGET,
       max_size: Optional[int] = None) -> frozenset:
    """Optimal neighbourhood: the candidate whose locally-optimal quality is highest."""
    tasks = list(tasks)
    best, best_q = None, -math.inf
    for hood in allhoods(agent, pool, budget, max_size):
        if not _allocable(model, tasks, hood):
            continue
        q = oq(model, tasks, hood, fixed_alloc, budget)
        if q > best_q:
            best, best_q = hood, q
    if best is None:
        raise NonAllocable(tasks)
    return best


def os_(model: QualityModel, tasks, agent, pool, fixed_alloc=None, budget: int = DEFAULT_BUDGET,
        max_size: Optional[int] = None) -> dict:
    hood = on(model, tasks, agent, pool, fixed_alloc, budget, max_size)
    return ol(model, tasks, hood, fixed_alloc, budget)


def osq(model: QualityModel, tasks, agent, pool, fixed_alloc=None, budget: int = DEFAULT_BUDGET,
        max_size: Optional[int] = None) -> float:
    tasks = list(tasks)
    fixed = dict(fixed_alloc or {})
    fixed.update(os_(model, tasks, agent, pool, fixed_alloc, budget, max_size))
    return ql(model, tasks, fixed)


def joq(model: QualityModel, tasks, agents, budget: int = DEFAULT_BUDGET) -> dict:
    return ol(model, tasks, agents, {}, budget)


def utility(model: QualityModel, states: Iterable[AllocationMap]) -> float:
    """Sum of allocation quality over a window of completed-allocation snapshots."""
    return sum(ql(model, list(snap), snap) for snap in states)


def theoretical_utility(model: QualityModel, states: Iterable[AllocationMap]) -> float:
    """Utility if every task went to its best agent with no concurrency."""
    return sum(model.best_base(at.task_type) for snap in states for at in snap)


def _without(alloc: AllocationMap, tasks) -> dict:
    drop = set(tasks)
    return {at: g for at, g in alloc.items() if at not in drop}


def d_loc(model: QualityModel, tasks, neighbourhood, alloc: AllocationMap,
          budget: int = DEFAULT_BUDGET) -> float:
    tasks = list(tasks)
    return oq(model, tasks, neighbourhood, _without(alloc, tasks), budget) - ql(model, tasks, alloc)


def d_sys(model: QualityModel, tasks, agent, pool, alloc: AllocationMap,
          budget: int = DEFAULT_BUDGET, max_size: Optional[int] = None) -> float:
    tasks = list(tasks)
    return osq(model, tasks, agent, pool, _without(alloc, tasks), budget, max_size) - ql(model, tasks, alloc)


# -- vectorised search used by the simulator to seed optimal neighbourhoods --

def best_neighbourhoods(model: QualityModel, task_types: Sequence[int], pool: Sequence,
                        size: int) -> list[tuple[float, frozenset]]:
    """Score every ``size``-subset of ``pool`` by its locally-optimal quality.

    Returns ``(quality, neighbourhood)`` pairs sorted best-first; ties keep
    enumeration order. Subsets unable to cover every task type are omitted.
    Agrees with :func:`on`/:func:`oq` (checked in the test-suite) but runs on
    numpy so that simulator set-up stays cheap.
    """
    pool = _ordered(pool)
    T = len(task_types)
    size = min(size, len(pool))
    base = np.full((T, len(pool)), np.nan)
    for i, tt in enumerate(task_types):
        for j, g in enumerate(pool):
            b = model.base(g, tt)
            if b is not None:
                base[i, j] = b
    out = []
    grids = {}
    for combo in itertools.combinations(range(len(pool)), size):
        sub = base[:, combo]
        if np.any(np.all(np.isnan(sub), axis=1)):
            continue
        A = len(combo)
        if A not in grids:
            assign = np.array(list(itertools.product(range(A), repeat=T)), dtype=np.int64).reshape(-1, T)
            counts = np.zeros((assign.shape[0], A), dtype=np.int64)
            for i in range(T):
                np.add.at(counts, (np.arange(assign.shape[0]), assign[:, i]), 1)
            k = np.take_along_axis(counts, assign, axis=1)
            grids[A] = (assign, k)
        assign, k = grids[A]
        vals = sub[np.arange(T)[None, :], assign]
        q = model.concurrency_law(vals, k)
        total = np.where(np.isnan(q).any(axis=1), -np.inf, q.sum(axis=1))
        out.append((float(total.max()), frozenset(pool[j] for j in combo)))
    out.sort(key=lambda x: -x[0])
    return out
