import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ataria.algorithms import (
    AgentRuntime,
    Environment,
    ata_ria_step,
    execute_action,
    n_prune,
    rt_arp_select,
    sas_kr,
)
from ataria.core import Action, AgentSpec, AgentState, Category, CompositeTask, apply_requirement
from ataria.errors import NoAvailableAction
from ataria.harness import ScenarioConfig, build_system
from ataria.impact import TSQM
from ataria.quality import QualityModel

from conftest import give, two_level

P = "P"


def runtime(k, n, delta_n=5, delta_k=7, caps=frozenset(), **kw):
    spec = AgentSpec(P, frozenset(caps), frozenset({0}), delta_n, delta_k)
    return AgentRuntime(spec, AgentState(frozenset(k) | frozenset(n), frozenset(n)), **kw)


def alloc(t, tt=0):
    return Action(Category.ALLOC, P, t, tt)


def info(t):
    return Action(Category.INFO, P, t)


def link(t):
    return Action(Category.LINK, P, t)


def _uniform_history(rt, v=0.5):
    rt.tsqm = TSQM(3, 2)
    for _ in range(4):
        rt.tsqm.update(v)


def test_rt_arp_single_action_returned_directly():
    # known but not linked: LINK is the only candidate
    rt = runtime("a", "")
    for seed in range(10):
        assert rt_arp_select(rt, [0], random.Random(seed))[0] == link("a")
    lonely = runtime("", "")
    with pytest.raises(NoAvailableAction):
        rt_arp_select(lonely, [0], random.Random(0))


def test_rt_arp_uniform_history_scales_by_impact():
    rt = runtime("ab", "a")
    _uniform_history(rt)
    rt.q.set((0,), alloc("a"), 0.5)
    rt.q.set((0,), info("a"), 0.5)
    rt.q.set((0,), link("b"), 0.0)
    rng = random.Random(7)
    picks = Counter()
    for _ in range(500):
        a, eps = rt_arp_select(rt, [0], rng)
        assert eps == pytest.approx(0.5)
        picks[a] += 1
    # INFO is scaled by 1 - 0.2 = 0.8, so ALLOC dominates both the greedy and the cold Boltzmann branch
    assert picks[alloc("a")] == 500


def test_rt_arp_without_impact_treats_ties_evenly():
    rt = runtime("ab", "a", use_rt_arp=False, tau=1.0, epsilon_base=0.0)
    _uniform_history(rt)
    rt.q.set((0,), alloc("a"), 0.5)
    rt.q.set((0,), info("a"), 0.5)
    rt.q.set((0,), link("b"), 0.5)
    rng = random.Random(3)
    picks = Counter(rt_arp_select(rt, [0], rng)[0] for _ in range(3000))
    for a in (alloc("a"), info("a"), link("b")):
        assert abs(picks[a] / 3000 - 1 / 3) < 0.04


def test_rt_arp_zero_base_is_always_boltzmann():
    rt = runtime("ab", "a", epsilon_base=0.0, tau=1.0)
    _uniform_history(rt)
    rt.q.set((0,), alloc("a"), 0.9)
    rt.q.set((0,), info("a"), 0.1)
    rt.q.set((0,), link("b"), 0.1)
    rng = random.Random(1)
    picks = Counter()
    for _ in range(2000):
        a, eps = rt_arp_select(rt, [0], rng)
        assert eps == 0.0
        picks[a] += 1
    # a warm Boltzmann draw still picks the weaker actions sometimes
    assert picks[info("a")] > 100


def test_sas_kr_noop_when_nothing_stale():
    rt = runtime("abc", "ab")
    before = rt.state
    sas_kr(rt, 10, random.Random(0), [0])
    assert rt.state == before


def test_sas_kr_forgets_stale_action_and_agent():
    rt = runtime("abc", "ab")
    rt.q.set((0,), alloc("c"), 0.4)
    sas_kr(rt, 10, random.Random(0), [0])
    assert alloc("c") not in rt.q.actions()
    assert rt.state.knowledge == frozenset("ab")


def test_sas_kr_keeps_recently_useful_action():
    rt = runtime("abc", "ab")
    rt.q.set((0,), alloc("c"), 0.4)
    for t in range(5):
        rt.samples.append(alloc("c"), t, 0.8)
    sas_kr(rt, 6, random.Random(0), [0])
    assert alloc("c") in rt.q.actions()
    assert "c" in rt.state.knowledge


@pytest.mark.parametrize("seed", range(5))
def test_sas_kr_trims_exactly_the_overflow(seed):
    rt = runtime("abcdefghi", "ab", delta_k=7)
    sas_kr(rt, 0, random.Random(seed))
    assert len(rt.state.knowledge) == 7
    assert rt.state.neighbourhood <= rt.state.knowledge


def test_n_prune_drops_lowest_value_neighbour():
    rt = runtime("abc", "abc", delta_n=2, delta_k=7)
    for t, (x, qs) in enumerate([("a", (0.6, 0.6)), ("b", (0.4,)), ("c", (0.9,))]):
        for q in qs:
            rt.samples.append(alloc(x), t, q)
    n_prune(rt, random.Random(0))
    assert rt.state.neighbourhood == frozenset("ac")


def test_n_prune_without_samples_is_uniform():
    counts = Counter()
    for seed in range(3000):
        rt = runtime("abc", "abc", delta_n=2)
        n_prune(rt, random.Random(seed))
        (gone,) = frozenset("abc") - rt.state.neighbourhood
        counts[gone] += 1
    for x in "abc":
        assert abs(counts[x] / 3000 - 1 / 3) < 0.04


def test_n_prune_spares_protected_newcomer():
    rt = runtime("abc", "abc", delta_n=2)
    rt.samples.append(alloc("a"), 0, 0.9)
    rt.samples.append(alloc("b"), 1, 0.8)
    n_prune(rt, random.Random(0), protect="c")
    assert "c" in rt.state.neighbourhood


def test_step_executes_locally_when_capable():
    system, model = two_level({"c1": {0: 0.5}})
    specs = dict(system.specs)
    specs[P] = AgentSpec(P, frozenset({0}), frozenset({0}))
    model = QualityModel({**model.base_quality, (P, 0): 0.7})
    system = type(system)(specs, system.agent_states)
    system, _, tasks = give(system, [0])
    rt = AgentRuntime(specs[P], system.state_of(P))
    _, system, rep = ata_ria_step(rt, system, tasks, random.Random(0), Environment(model))
    assert rep.action.category is Category.EXEC
    assert rep.quality == pytest.approx(0.7) and rep.reward == 0
    assert tasks == []


def test_failed_alloc_keeps_task_and_pays_nothing():
    system, model = two_level({"c1": {0: 0.5}})
    system, _, tasks = give(system, [0])
    rt = AgentRuntime(system.specs[P], system.state_of(P))
    env = Environment(model, down=frozenset({"c1"}))
    _, rep = execute_action(rt, system, tasks, alloc("c1"), env, random.Random(0))
    assert not rep.success and rep.reward == 0 and rep.quality == 0
    assert len(tasks) == 1


def test_successful_alloc_pays_quality():
    system, model = two_level({"c1": {0: 0.5}})
    system, _, tasks = give(system, [0])
    rt = AgentRuntime(system.specs[P], system.state_of(P))
    _, rep = execute_action(rt, system, tasks, alloc("c1"), Environment(model), random.Random(0))
    assert rep.success and rep.reward == pytest.approx(0.5)
    assert tasks == []


def test_link_when_full_overflows_then_prunes():
    system, model = two_level({"a": {0: 0.5}, "b": {0: 0.9}}, parent_n=["a"], delta_n=1)
    system, _, tasks = give(system, [0])
    rt = AgentRuntime(system.specs[P], system.state_of(P))
    rt.samples.append(alloc("a"), 0, 0.5)
    system, rep = execute_action(rt, system, tasks, link("b"), Environment(model), random.Random(0))
    assert rep.reward == rt.link_reward
    assert rt.state.neighbourhood == frozenset("b")
    assert system.state_of(P) == rt.state


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_step_invariants_on_random_worlds(seed):
    cfg = ScenarioConfig(n_children=8)
    rng = random.Random(seed)
    system, model, rts = build_system(cfg, random.Random(seed))
    env = Environment(model)
    for p, rt in rts.items():
        system = system.with_agent_state(p, rt.state)
    for _ in range(40):
        p = rng.choice(sorted(rts))
        rt = rts[p]
        (kind,) = system.specs[p].responsibilities
        comp = CompositeTask.build(kind, [rng.randrange(cfg.n_task_types) for _ in range(3)], system.clock)
        system, g = apply_requirement(system, comp, "ext", rng)
        pending = list(comp.tasks)
        before = len(pending)
        try:
            _, system, rep = ata_ria_step(rts[g], system, pending, rng, env)
        except NoAvailableAction:
            continue
        st_ = rts[g].state
        spec = system.specs[g]
        assert len(st_.neighbourhood) <= spec.delta_n
        assert st_.neighbourhood <= st_.knowledge
        assert len(st_.knowledge) <= spec.delta_k
        assert 0.0 <= rep.quality <= 1.0
        assert len(pending) == before - (rep.task is not None)
        system = system.reset_load()
