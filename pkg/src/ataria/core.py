"""Domain types and the action rules of a distributed task-allocation system.

Every ``apply_*`` function is a pure transition: it takes a :class:`SystemState`
and returns a new one, leaving the input untouched.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Hashable, Iterable, Mapping, Optional

from .errors import (
    AlreadyAllocated,
    EmptyKnowledge,
    InNeighbourhood,
    NeighbourhoodFull,
    NoResponsibleAgent,
    NotCapable,
    NotInNeighbourhood,
    NotKnown,
    NotNeighbour,
    TaskNotHeld,
)

TaskTypeId = int
AgentId = Hashable


@dataclass(frozen=True)
class AtomicTask:
    task_type: TaskTypeId
    origin: int  # time identifier of the owning composite task
    index: int = 0
    creation_time: int = 0


@dataclass(frozen=True)
class CompositeTask:
    kind: int
    tasks: tuple[AtomicTask, ...]
    arrival_time: int = 0

    @property
    def composite_type(self) -> tuple[TaskTypeId, ...]:
        return tuple(sorted(at.task_type for at in self.tasks))

    @classmethod
    def build(cls, kind: int, types: Iterable[TaskTypeId], t: int) -> "CompositeTask":
        tasks = tuple(AtomicTask(tt, t, i, t) for i, tt in enumerate(types))
        return cls(kind, tasks, t)


INFO_TASK = AtomicTask(task_type=-1, origin=-1, index=-1)


@dataclass(frozen=True)
class AgentSpec:
    id: AgentId
    capabilities: frozenset = frozenset()
    responsibilities: frozenset = frozenset()
    delta_n: int = 5
    delta_k: int = 7

    def __post_init__(self):
        if self.delta_n < 1 or self.delta_k < 1:
            raise ValueError("resource constraints must be positive")
        if self.delta_n > self.delta_k:
            raise ValueError("delta_n must not exceed delta_k")


@dataclass(frozen=True)
class AgentState:
    knowledge: frozenset = frozenset()
    neighbourhood: frozenset = frozenset()

    def __post_init__(self):
        if not self.neighbourhood <= self.knowledge:
            raise ValueError("neighbourhood must be a subset of knowledge")


@dataclass(frozen=True)
class AllocationRecord:
    tasks: tuple[AtomicTask, ...]
    t: int
    allocator: AgentId
    allocatee: AgentId

    @property
    def is_atomic(self) -> bool:
        return len(self.tasks) == 1


class Category(enum.Enum):
    ALLOC = "ALLOC"
    EXEC = "EXEC"
    INFO = "INFO"
    PROVIDE_INFO = "PROVIDE_INFO"
    REMOVE_INFO = "REMOVE_INFO"
    LINK = "LINK"
    REMOVE_LINK = "REMOVE_LINK"


@dataclass(frozen=True, order=False)
class Action:
    """An action taken by ``actor``.

    ``target`` is the other agent the action is aimed at (ALLOC recipient, INFO
    neighbour, LINK/REMOVE_INFO known agent, REMOVE_LINK neighbour, PROVIDE_INFO
    requester). ``task_type`` is set for ALLOC and EXEC; ``subject`` for
    PROVIDE_INFO.
    """

    category: Category
    actor: AgentId
    target: Optional[AgentId] = None
    task_type: Optional[TaskTypeId] = None
    subject: Optional[AgentId] = None

    def references(self) -> tuple:
        return tuple(x for x in (self.target, self.subject) if x is not None)

    def sort_key(self) -> tuple:
        return (self.category.value, repr(self.task_type), repr(self.target), repr(self.subject))


def category(action: Action) -> Category:
    return action.category


def _frozen_map(d: Mapping) -> Mapping:
    return MappingProxyType(dict(d))


@dataclass(frozen=True)
class SystemState:
    """Agent states, live allocations and the clock.

    ``load`` counts tasks each agent has already executed in the current
    resource window; it adds to the concurrency seen by the next EXEC.
    """

    specs: Mapping[AgentId, AgentSpec]
    agent_states: Mapping[AgentId, AgentState]
    allocations: tuple[AllocationRecord, ...] = ()
    clock: int = 0
    load: Mapping[AgentId, int] = field(default_factory=lambda: MappingProxyType({}))

    @classmethod
    def create(cls, specs: Iterable[AgentSpec], states: Optional[Mapping] = None, clock: int = 0):
        specs = {s.id: s for s in specs}
        states = dict(states or {})
        for gid in specs:
            states.setdefault(gid, AgentState())
        return cls(_frozen_map(specs), _frozen_map(states), (), clock)

    def state_of(self, gid: AgentId) -> AgentState:
        return self.agent_states[gid]

    def with_agent_state(self, gid: AgentId, st: AgentState) -> "SystemState":
        states = dict(self.agent_states)
        states[gid] = st
        return replace(self, agent_states=_frozen_map(states), clock=self.clock + 1)

    def held_tasks(self, gid: AgentId) -> list[AtomicTask]:
        return [at for rec in self.allocations if rec.allocatee == gid for at in rec.tasks]

    def concurrent_count(self, gid: AgentId) -> int:
        atomic = sum(1 for rec in self.allocations if rec.allocatee == gid and rec.is_atomic
                     and rec.tasks[0] is not INFO_TASK)
        return atomic + self.load.get(gid, 0)

    def reset_load(self) -> "SystemState":
        return replace(self, load=MappingProxyType({}))


def _check_member(state: SystemState, gid: AgentId) -> None:
    if gid not in state.specs:
        raise KeyError(f"unknown agent {gid!r}")


def apply_requirement(state: SystemState, composite: CompositeTask, external: AgentId,
                      rng: random.Random) -> tuple[SystemState, AgentId]:
    """Assign a composite task to a uniformly chosen responsible agent."""
    responsible = sorted((g for g, s in state.specs.items() if composite.kind in s.responsibilities), key=repr)
    if not responsible:
        raise NoResponsibleAgent(composite.kind)
    g = rng.choice(responsible)
    rec = AllocationRecord(composite.tasks, state.clock, external, g)
    return replace(state, allocations=state.allocations + (rec,), clock=state.clock + 1), g


def _holding_record(state: SystemState, actor: AgentId, task: AtomicTask) -> Optional[AllocationRecord]:
    for rec in state.allocations:
        if rec.allocatee == actor and task in rec.tasks:
            return rec
    return None


def apply_alloc(state: SystemState, actor: AgentId, task: AtomicTask, target: AgentId) -> SystemState:
    _check_member(state, actor)
    if target not in state.agent_states[actor].neighbourhood:
        raise NotInNeighbourhood(target)
    for rec in state.allocations:
        if rec.allocator == actor and rec.is_atomic and rec.tasks[0] == task:
            raise AlreadyAllocated(task)
    held = _holding_record(state, actor, task)
    if held is None:
        raise TaskNotHeld(task)
    rec = AllocationRecord((task,), held.t, actor, target)
    return replace(state, allocations=state.allocations + (rec,), clock=state.clock + 1)


def apply_exec(state: SystemState, actor: AgentId, task: AtomicTask, model) -> tuple[SystemState, float]:
    """Execute ``task`` and strip it from every live record sharing its identifier.

    Records left with no tasks are dropped.
    """
    _check_member(state, actor)
    if task.task_type not in state.specs[actor].capabilities:
        raise NotCapable((actor, task.task_type))
    held = _holding_record(state, actor, task)
    if held is None:
        raise TaskNotHeld(task)
    k = max(1, state.concurrent_count(actor)) if held.is_atomic else state.concurrent_count(actor) + 1
    from .quality import omega  # local import keeps the model importable on its own
    quality = omega(model, actor, task.task_type, k)
    out = []
    for rec in state.allocations:
        if rec.t == held.t and task in rec.tasks:
            remaining = tuple(at for at in rec.tasks if at != task)
            if remaining:
                out.append(replace(rec, tasks=remaining))
        else:
            out.append(rec)
    load = dict(state.load)
    load[actor] = load.get(actor, 0) + 1
    new = replace(state, allocations=tuple(out), clock=state.clock + 1, load=MappingProxyType(load))
    return new, quality


def apply_provide_info(state: SystemState, provider: AgentId, requester: AgentId,
                       subject: AgentId) -> SystemState:
    if subject not in state.agent_states[provider].knowledge:
        raise NotKnown(subject)
    st = state.agent_states[requester]
    if subject in st.knowledge or subject == requester:
        return replace(state, clock=state.clock + 1)
    return state.with_agent_state(requester, replace(st, knowledge=st.knowledge | {subject}))


def apply_info(state: SystemState, actor: AgentId, target: AgentId, rng: random.Random,
               neighbours_only: bool = False) -> tuple[SystemState, AgentId]:
    """Request information from ``target`` and resolve the reply in the same transition.

    The provider answers with a uniformly chosen member of its knowledge (or of
    its neighbourhood when ``neighbours_only``). Returns the new state and the
    subject that was supplied.
    """
    _check_member(state, actor)
    if target not in state.agent_states[actor].neighbourhood:
        raise NotInNeighbourhood(target)
    pst = state.agent_states[target]
    pool = pst.neighbourhood if neighbours_only else pst.knowledge
    if not pool:
        raise EmptyKnowledge(target)
    subject = rng.choice(sorted(pool, key=repr))
    # the info pseudo-task is recorded and consumed by the provider in one go
    return apply_provide_info(state, target, actor, subject), subject


def apply_remove_info(state: SystemState, actor: AgentId, known: AgentId) -> SystemState:
    st = state.agent_states[actor]
    if known not in st.knowledge:
        raise NotKnown(known)
    if known in st.neighbourhood:
        raise InNeighbourhood(known)
    return state.with_agent_state(actor, replace(st, knowledge=st.knowledge - {known}))


def apply_link(state: SystemState, actor: AgentId, known: AgentId, allow_overflow: bool = True) -> SystemState:
    """Add ``known`` to the neighbourhood.

    With ``allow_overflow`` the neighbourhood may reach ``delta_n + 1``; the
    caller is expected to prune it back before the step ends.
    """
    st = state.agent_states[actor]
    if known not in st.knowledge:
        raise NotKnown(known)
    if known in st.neighbourhood:
        return replace(state, clock=state.clock + 1)
    cap = state.specs[actor].delta_n + (1 if allow_overflow else 0)
    if len(st.neighbourhood) >= cap:
        raise NeighbourhoodFull(actor)
    return state.with_agent_state(actor, replace(st, neighbourhood=st.neighbourhood | {known}))


def apply_remove_link(state: SystemState, actor: AgentId, neighbour: AgentId) -> SystemState:
    st = state.agent_states[actor]
    if neighbour not in st.neighbourhood:
        raise NotNeighbour(neighbour)
    return state.with_agent_state(actor, replace(st, neighbourhood=st.neighbourhood - {neighbour}))


def target_actions(actions: Iterable[Action], actor: AgentId, group) -> set[Action]:
    group = set(group)
    return {a for a in actions if a.actor == actor and any(r in group for r in a.references())}
