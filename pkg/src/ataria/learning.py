"""Tabular Q-learning over unallocated-task states, action samples and selection helpers."""
from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import Action, AgentState, Category
from .errors import NonPositiveTemperature, ParameterOutOfRange, ZeroSum

DEFAULT_Q = 0.5


def canonical_state(types: Iterable[int]) -> tuple:
    """Q-table key: the sorted multiset of still-unallocated task types."""
    return tuple(sorted(types))


class QTable:
    """Per-agent Q-values, ``state -> {action: q}``, with a default for unseen pairs."""

    def __init__(self, default_q: float = DEFAULT_Q):
        self.default_q = default_q
        self.entries: dict[tuple, dict[Action, float]] = {}

    def get(self, state, action) -> float:
        return self.entries.get(state, {}).get(action, self.default_q)

    def set(self, state, action, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("Q-values must be finite")
        self.entries.setdefault(state, {})[action] = value

    def learned(self, state) -> dict:
        return self.entries.get(state, {})

    def actions(self) -> set:
        return {a for row in self.entries.values() for a in row}

    def copy(self) -> "QTable":
        new = QTable(self.default_q)
        new.entries = {s: dict(row) for s, row in self.entries.items()}
        return new

    def __len__(self):
        return sum(len(row) for row in self.entries.values())

    def __eq__(self, other):
        return isinstance(other, QTable) and self.entries == other.entries and self.default_q == other.default_q


def rl_update(q: QTable, state, action, reward: float, next_state, alpha: float, gamma: float,
              next_actions: Optional[Iterable[Action]] = None) -> QTable:
    """One Q-learning step on ``(state, action)``, in place.

    The future estimate is the best value in ``next_state`` over its learned
    entries and ``next_actions`` (defaults count for the latter). An empty
    ``next_state`` is terminal.
    """
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= gamma <= 1.0:
        raise ParameterOutOfRange((alpha, gamma))
    if len(next_state) == 0:
        future = 0.0
    else:
        values = list(q.learned(next_state).values())
        if next_actions is not None:
            values.extend(q.get(next_state, a) for a in next_actions)
        future = max(values) if values else q.default_q
    old = q.get(state, action)
    new = old + alpha * (reward + gamma * future - old)
    if alpha == 0.0 or new == old:
        return q
    q.set(state, action, new)
    return q


def rl_select(q: QTable, state, actions: Optional[Iterable[Action]] = None) -> list[tuple[Action, float]]:
    """Learned ``(action, q)`` pairs for ``state`` plus defaults for any extra ``actions``."""
    out = dict(q.learned(state))
    for a in actions or ():
        out.setdefault(a, q.default_q)
    return list(out.items())


def candidate_actions(actor, state, agent_state: AgentState, info: bool = True,
                      link: bool = True) -> list[Action]:
    """Actions open to ``actor`` in ``state``: ALLOC per (type, neighbour), INFO per
    neighbour and LINK per known non-neighbour."""
    nbrs = sorted(agent_state.neighbourhood, key=repr)
    out = [Action(Category.ALLOC, actor, n, tt) for tt in sorted(set(state)) for n in nbrs]
    if info:
        out += [Action(Category.INFO, actor, n) for n in nbrs]
    if link:
        out += [Action(Category.LINK, actor, k)
                for k in sorted(agent_state.knowledge - agent_state.neighbourhood, key=repr)]
    return out


def is_available(action: Action, state, agent_state: AgentState) -> bool:
    if action.category is Category.LINK:
        return action.target in agent_state.knowledge and action.target not in agent_state.neighbourhood
    if action.category is Category.ALLOC:
        return action.target in agent_state.neighbourhood and action.task_type in state
    if action.target is None:
        return True
    return action.target in agent_state.neighbourhood


def available(q: QTable, state, agent_state: AgentState, actor=None, info: bool = True,
              link: bool = True) -> list[tuple[Action, float]]:
    if actor is None:
        actions = [a for a in q.learned(state) if is_available(a, state, agent_state)]
    else:
        actions = candidate_actions(actor, state, agent_state, info, link)
    return [(a, q.get(state, a)) for a in actions]


def unavailable(q: QTable, state, agent_state: AgentState) -> list[tuple[Action, float]]:
    """Learned entries in ``state`` that target an agent outside the neighbourhood
    (or, for LINK, one already inside it)."""
    return [(a, v) for a, v in q.learned(state).items()
            if a.target is not None and not is_available(a, state, agent_state)]


def rl_remove(q: QTable, actions: Iterable[Action]) -> QTable:
    drop = set(actions)
    for s in list(q.entries):
        row = q.entries[s]
        for a in drop & row.keys():
            del row[a]
        if not row:
            del q.entries[s]
    return q


@dataclass(frozen=True)
class ActionSample:
    action: Action
    time: int
    quality: float


class ActionSampleStore:
    """Time-ordered history of one agent's actions, indexed by action and target."""

    def __init__(self):
        self.samples: list[ActionSample] = []
        self._by_action: dict[Action, list[ActionSample]] = defaultdict(list)
        self._by_target: dict = defaultdict(float)
        self._count_by_target: dict = defaultdict(int)

    def append(self, action: Action, time: int, quality: float) -> None:
        if self.samples and time < self.samples[-1].time:
            raise ValueError("samples must be appended in time order")
        sp = ActionSample(action, time, quality)
        self.samples.append(sp)
        self._by_action[action].append(sp)
        for r in action.references():
            self._by_target[r] += quality
            self._count_by_target[r] += 1

    def select(self, actions: Iterable[Action]) -> list[ActionSample]:
        wanted = set(actions)
        return [sp for sp in self.samples if sp.action in wanted]

    def of(self, action: Action) -> list[ActionSample]:
        return self._by_action.get(action, [])

    def remove_action(self, action: Action) -> None:
        gone = self._by_action.pop(action, None)
        if not gone:
            return
        self.samples = [sp for sp in self.samples if sp.action != action]
        for sp in gone:
            for r in action.references():
                self._by_target[r] -= sp.quality
                self._count_by_target[r] -= 1
                if self._count_by_target[r] == 0:
                    del self._count_by_target[r]
                    self._by_target.pop(r, None)

    def target_sum(self, agent) -> float:
        return self._by_target.get(agent, 0.0)

    def target_count(self, agent) -> int:
        return self._count_by_target.get(agent, 0)

    def __len__(self):
        return len(self.samples)


def mv(store: ActionSampleStore, action: Action, now: int) -> float:
    """Sample count over staleness; ``inf`` when the latest sample is from ``now``."""
    hist = store.of(action)
    if not hist:
        return 0.0
    gap = now - hist[-1].time
    if gap <= 0:
        return math.inf
    return len(hist) / gap


def nval(store: ActionSampleStore, agent, group) -> float:
    """Summed quality of the samples whose actions reference a member of ``group``."""
    group = set(group)
    return sum(sp.quality for sp in store.samples
               if sp.action.actor == agent and any(r in group for r in sp.action.references()))


def mvn(store: ActionSampleStore, agent, neighbourhood):
    """Neighbour with the smallest neighbour information value (lowest id on ties)."""
    nbrs = sorted(neighbourhood, key=repr)
    if not nbrs:
        raise ValueError("empty neighbourhood")
    return min(nbrs, key=lambda x: store.target_sum(x))


# -- selection helpers --

def sumnorm(pairs: Sequence[tuple]) -> list[tuple]:
    total = sum(v for _, v in pairs)
    if not total > 0:
        raise ZeroSum(total)
    return [(a, v / total) for a, v in pairs]


def softmax(pairs: Sequence[tuple]) -> list[tuple]:
    if not pairs:
        return []
    m = max(v for _, v in pairs)
    ex = [math.exp(v - m) for _, v in pairs]
    s = sum(ex)
    return [(a, e / s) for (a, _), e in zip(pairs, ex)]


def rand_select(pairs: Sequence, rng: random.Random):
    items = [p[0] if isinstance(p, tuple) else p for p in pairs]
    return rng.choice(items)


def max_select(pairs: Sequence[tuple], rng: random.Random):
    top = max(v for _, v in pairs)
    best = [a for a, v in pairs if v == top]
    return best[0] if len(best) == 1 else rng.choice(best)


def boltzmann_probs(pairs: Sequence[tuple], tau: float) -> list[float]:
    if not tau > 0:
        raise NonPositiveTemperature(tau)
    m = max(v for _, v in pairs)
    ex = [math.exp((v - m) / tau) for _, v in pairs]
    s = sum(ex)
    return [e / s for e in ex]


def boltzmann_select(pairs: Sequence[tuple], tau: float, rng: random.Random):
    probs = boltzmann_probs(pairs, tau)
    u = rng.random()
    acc = 0.0
    for (a, _), p in zip(pairs, probs):
        acc += p
        if u < acc:
            return a
    return pairs[-1][0]
