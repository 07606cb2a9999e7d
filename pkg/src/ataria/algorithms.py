"""Per-agent learning procedures: ATA-RIA orchestration, RT-ARP selection,
SAS-KR knowledge retention and N-Prune neighbourhood pruning.

An :class:`AgentRuntime` is mutated in place; each function also returns it so
calls compose.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import (
    Action,
    AgentSpec,
    AgentState,
    AtomicTask,
    Category,
    SystemState,
    apply_alloc,
    apply_exec,
    apply_info,
    apply_link,
)
from .errors import EmptyKnowledge, NoAvailableAction
from .impact import FALLBACK_IT, TSQM, ImpactWeights, impact_curve
from .learning import (
    ActionSampleStore,
    QTable,
    available,
    boltzmann_select,
    candidate_actions,
    canonical_state,
    max_select,
    mv,
    mvn,
    rl_remove,
    rl_update,
    sumnorm,
    unavailable,
)

PROB_FLOOR = 1e-9


@dataclass
class AgentRuntime:
    spec: AgentSpec
    state: AgentState
    q: QTable = field(default_factory=QTable)
    samples: ActionSampleStore = field(default_factory=ActionSampleStore)
    tsqm: TSQM = field(default_factory=TSQM)
    weights: ImpactWeights = field(default_factory=lambda: ImpactWeights.of(0.10, 0.20))
    epsilon_base: float = 1.0
    mv_threshold: float = 0.1
    alpha: float = 0.3
    gamma: float = 0.5
    tau: float = 0.01
    decay: float = 1.0
    info_reward: float = -0.05
    link_reward: float = -0.05
    use_rt_arp: bool = True
    use_sas_kr: bool = True
    protect_new: bool = True

    def __post_init__(self):
        for name in ("epsilon_base", "alpha", "gamma", "decay"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def id(self):
        return self.spec.id


@dataclass
class StepReport:
    actor: object
    action: Action
    quality: float = 0.0
    reward: float = 0.0
    success: bool = True
    task: Optional[AtomicTask] = None
    epsilon: Optional[float] = None


@dataclass
class Environment:
    """What an acting agent needs to know about the world outside its own runtime."""

    model: object
    down: frozenset = frozenset()  # agents currently unavailable
    info_neighbours_only: bool = False


def rt_arp_select(rt: AgentRuntime, unallocated, rng: random.Random) -> tuple[Action, float]:
    """Pick an action; also returns the exploit probability used."""
    s = canonical_state(unallocated)
    aq = available(rt.q, s, rt.state, actor=rt.id)
    if not aq:
        raise NoAvailableAction(rt.id)
    curve = impact_curve(rt.tsqm, rt.decay) if rt.use_rt_arp else None
    if curve is None:
        # no usable history, or RT-ARP switched off: neutral constant stance
        scale = {}
        eps = rt.epsilon_base * FALLBACK_IT
    else:
        scale = {cat: curve.transform(float(rt.weights[cat])) for cat in (Category.ALLOC, Category.INFO, Category.LINK)}
        eps = rt.epsilon_base * curve.transform(0.5)
    if len(aq) == 1:
        return aq[0][0], eps
    scaled = [(a, max(v * scale.get(a.category, 1.0), PROB_FLOOR)) for a, v in aq]
    probs = sumnorm(scaled)
    if rng.random() < eps:
        return max_select(probs, rng), eps
    return boltzmann_select(probs, rt.tau, rng), eps


def sas_kr(rt: AgentRuntime, now: int, rng: random.Random, unallocated=()) -> AgentRuntime:
    """Forget stale unavailable actions, then trim knowledge to ``delta_k``."""
    st = rt.state
    knowledge = set(st.knowledge)
    if rt.use_sas_kr:
        s = canonical_state(unallocated)
        dropped_targets = set()
        stale = [a for a, _ in unavailable(rt.q, s, st) if mv(rt.samples, a, now) < rt.mv_threshold]
        for a in stale:
            rt.samples.remove_action(a)
            dropped_targets.add(a.target)
        if stale:
            rl_remove(rt.q, stale)
            still = {a.target for a in rt.q.actions()}
            for x in dropped_targets:
                if x in knowledge and x not in st.neighbourhood and x not in still:
                    knowledge.discard(x)
    while len(knowledge) > rt.spec.delta_k:
        spare = sorted(knowledge - st.neighbourhood, key=repr)
        if not spare:
            break
        knowledge.discard(rng.choice(spare))
    if knowledge != st.knowledge:
        rt.state = replace(st, knowledge=frozenset(knowledge))
    return rt


def n_prune(rt: AgentRuntime, rng: random.Random, learned: bool = True, protect=None) -> AgentRuntime:
    """Drop neighbours until ``delta_n`` holds, lowest-value neighbour first.

    ``protect`` (typically the agent just linked) is kept out of the value-based
    choice so a fresh neighbour gets a trial before it can be judged.
    """
    nbrs = set(rt.state.neighbourhood)
    while len(nbrs) > rt.spec.delta_n:
        judged = nbrs - {protect} if protect in nbrs and len(nbrs) > 1 else nbrs
        if learned and any(rt.samples.target_count(x) > 0 for x in judged):
            victim = mvn(rt.samples, rt.id, judged)
        else:
            victim = rng.choice(sorted(nbrs, key=repr))
        nbrs.discard(victim)
    if nbrs != rt.state.neighbourhood:
        rt.state = replace(rt.state, neighbourhood=frozenset(nbrs))
    return rt


def _first_of_type(pending, task_type):
    for at in pending:
        if at.task_type == task_type:
            return at
    return None


def execute_action(rt: AgentRuntime, system: SystemState, pending: list, action: Action,
                   env: Environment, rng: random.Random, learned_prune: bool = True,
                   retention: bool = True) -> tuple[SystemState, StepReport]:
    """Carry out one ALLOC/INFO/LINK chosen by ``rt`` and apply its consequences
    (knowledge retention after INFO, pruning after LINK). ``pending`` is updated
    in place when an allocation succeeds."""
    actor = rt.id
    report = StepReport(actor, action)
    cat = action.category
    if cat is Category.ALLOC:
        task = _first_of_type(pending, action.task_type)
        target = action.target
        if (task is None or target in env.down or not env.model.capable(target, task.task_type)
                or target not in rt.state.neighbourhood):
            report.success = False
            return system, report
        system = apply_alloc(system, actor, task, target)
        system, quality = apply_exec(system, target, task, env.model)
        pending.remove(task)
        report.task, report.quality, report.reward = task, quality, quality
        return system, report
    if cat is Category.INFO:
        report.reward = rt.info_reward
        if action.target in env.down:
            report.success = False
            return system, report
        try:
            system, _subject = apply_info(system, actor, action.target, rng, env.info_neighbours_only)
        except EmptyKnowledge:
            report.success = False
            return system, report
        rt.state = system.state_of(actor)
        if retention:
            sas_kr(rt, system.clock, rng, [at.task_type for at in pending])
        else:
            sas_kr_disabled(rt, rng)
        return system.with_agent_state(actor, rt.state), report
    if cat is Category.LINK:
        report.reward = rt.link_reward
        if action.target in env.down:
            report.success = False
            return system, report
        system = apply_link(system, actor, action.target, allow_overflow=True)
        rt.state = system.state_of(actor)
        n_prune(rt, rng, learned=learned_prune,
                protect=action.target if rt.protect_new else None)
        return system.with_agent_state(actor, rt.state), report
    raise ValueError(f"unsupported action category {cat}")


def sas_kr_disabled(rt: AgentRuntime, rng: random.Random) -> AgentRuntime:
    """Knowledge cap enforced by random forgetting only."""
    saved = rt.use_sas_kr
    rt.use_sas_kr = False
    try:
        return sas_kr(rt, 0, rng)
    finally:
        rt.use_sas_kr = saved


def _learn(rt: AgentRuntime, s, action: Action, report: StepReport, pending, now: int) -> None:
    s_next = canonical_state(at.task_type for at in pending)
    nxt = candidate_actions(rt.id, s_next, rt.state) if s_next else None
    rl_update(rt.q, s, action, report.reward, s_next, rt.alpha, rt.gamma, nxt)
    rt.tsqm.update(report.quality)
    rt.samples.append(action, now, report.quality)


def ata_ria_step(rt: AgentRuntime, system: SystemState, pending: list, rng: random.Random,
                 env: Environment) -> tuple[AgentRuntime, SystemState, StepReport]:
    """One pass of the allocation loop for the parent owning ``pending``.

    Executes locally when capable, otherwise lets RT-ARP choose an action,
    resolves it, and records the reward, quality and sample.
    """
    if not pending:
        raise ValueError("no outstanding atomic tasks")
    actor = rt.id
    s = canonical_state(at.task_type for at in pending)
    own = [at for at in pending if at.task_type in rt.spec.capabilities]
    if own:
        task = own[0]
        system, quality = apply_exec(system, actor, task, env.model)
        pending.remove(task)
        action = Action(Category.EXEC, actor, None, task.task_type)
        # EXEC counts toward utility but carries no learning signal
        report = StepReport(actor, action, quality=quality, reward=0.0, task=task)
        s_next = canonical_state(at.task_type for at in pending)
        rl_update(rt.q, s, action, 0.0, s_next, rt.alpha, rt.gamma)
        rt.tsqm.update(0.0)
        rt.samples.append(action, system.clock, 0.0)
        return rt, system, report
    action, eps = rt_arp_select(rt, [at.task_type for at in pending], rng)
    system, report = execute_action(rt, system, pending, action, env, rng,
                                    learned_prune=True, retention=rt.use_sas_kr)
    report.epsilon = eps
    _learn(rt, s, action, report, pending, system.clock)
    return rt, system, report


def ql_step(rt: AgentRuntime, system: SystemState, pending: list, rng: random.Random,
            env: Environment, tau: float) -> tuple[AgentRuntime, SystemState, StepReport]:
    """Plain Q-learning with Boltzmann selection over raw Q-values.

    Knowledge and neighbourhood caps are kept by random forgetting.
    """
    s = canonical_state(at.task_type for at in pending)
    aq = available(rt.q, s, rt.state, actor=rt.id)
    if not aq:
        raise NoAvailableAction(rt.id)
    action = boltzmann_select(aq, tau, rng)
    system, report = execute_action(rt, system, pending, action, env, rng,
                                    learned_prune=False, retention=False)
    s_next = canonical_state(at.task_type for at in pending)
    nxt = candidate_actions(rt.id, s_next, rt.state) if s_next else None
    rl_update(rt.q, s, action, report.reward, s_next, rt.alpha, rt.gamma, nxt)
    return rt, system, report


def ql_reset(q: QTable) -> QTable:
    """Move every entry halfway toward the mean of its state's entries."""
    for s, row in q.entries.items():
        if not row:
            continue
        mean = sum(row.values()) / len(row)
        for a, v in row.items():
            row[a] = v - (v - mean) / 2.0
    return q


def greedy_step(rt: AgentRuntime, system: SystemState, pending: list, rng: random.Random,
                env: Environment) -> tuple[AgentRuntime, SystemState, StepReport]:
    """Allocate the next task to the best capable neighbour by true base quality."""
    model = env.model
    best = None
    for at in pending:
        for n in sorted(rt.state.neighbourhood, key=repr):
            b = model.base(n, at.task_type)
            if b is not None and n not in env.down and (best is None or b > best[0]):
                best = (b, at, n)
    if best is None:
        at = pending[0]
        n = sorted(rt.state.neighbourhood, key=repr)[0]
        action = Action(Category.ALLOC, rt.id, n, at.task_type)
    else:
        _, at, n = best
        action = Action(Category.ALLOC, rt.id, n, at.task_type)
    system, report = execute_action(rt, system, pending, action, env, rng)
    return rt, system, report
