"""Scenario construction and episode driver for the four experiment families.

An episode delivers one composite task to every parent. Parents then act in
rounds: each round every parent with outstanding work takes one action, in a
freshly shuffled order. A round is also the resource window for concurrency,
so a child that receives two tasks in the same round completes each at half
quality. Utility is the summed quality of executed atomic tasks.
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .algorithms import AgentRuntime, Environment, ata_ria_step, greedy_step, ql_reset, ql_step
from .core import AgentSpec, AgentState, Category, CompositeTask, SystemState, apply_requirement
from .errors import InfeasibleConfig, NoAvailableAction
from .impact import TSQM, ImpactWeights, estimate_w
from .learning import QTable
from .quality import QualityModel, best_neighbourhoods

EXTERNAL = "ext"
SCENARIOS = ("stable", "exploration", "volatile", "large")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "stable"
    n_parents: int = 3
    n_children: int = 10
    n_task_types: int = 20
    n_composite_types: int = 10
    tasks_per_composite: int = 5
    knowledge_cap: int = 7
    neighbourhood_cap: int = 5
    episodes: int = 100
    runs: int = 100
    seed: int = 0
    p_unavailable: float = 0.001
    p_leave: float = 0.0
    volatile_start: int = 25
    volatile_end: int = 75
    w_link: float = 0.10
    w_info: float = 0.20
    tsqm_m: int = 10
    tsqm_n: int = 10
    quality_mean: float = 0.5
    quality_sd: float = 0.2
    capability_prob: float = 0.5
    step_budget: int = 50
    seed_fraction: float = 0.75
    large_children: tuple = (10, 25, 50, 100)
    # learner settings
    alpha: float = 0.3
    gamma: float = 0.5
    epsilon_base: float = 1.0
    tau: float = 0.01
    decay: float = 1.0
    mv_threshold: float = 0.1
    info_reward: float = -0.05
    link_reward: float = -0.05
    info_neighbours_only: bool = False
    protect_new: bool = True

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> "ScenarioConfig":
        if scenario not in SCENARIOS:
            raise InfeasibleConfig(f"unknown scenario {scenario!r}")
        base = {"scenario": scenario}
        if scenario == "exploration":
            base["episodes"] = 500
        elif scenario == "volatile":
            base["p_leave"] = 0.01
        elif scenario == "large":
            base["n_parents"] = 10
        base.update(overrides)
        cfg = cls(**base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("p_unavailable", "p_leave", "capability_prob", "seed_fraction", "alpha", "gamma",
                     "epsilon_base", "decay"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleConfig(f"{name}={v} outside [0, 1]")
        for name in ("n_parents", "n_children", "n_task_types", "n_composite_types", "tasks_per_composite",
                     "knowledge_cap", "neighbourhood_cap", "episodes", "runs", "tsqm_m", "tsqm_n",
                     "step_budget"):
            if getattr(self, name) < 1:
                raise InfeasibleConfig(f"{name} must be positive")
        if self.neighbourhood_cap > self.knowledge_cap:
            raise InfeasibleConfig("neighbourhood cap exceeds knowledge cap")
        if self.tasks_per_composite > self.n_task_types:
            raise InfeasibleConfig("composite larger than the number of task types")
        if self.capability_prob == 0.0 and self.n_children < 1:
            raise InfeasibleConfig("no child can cover the task types")
        if self.tau <= 0:
            raise InfeasibleConfig("tau must be positive")
        if self.quality_sd < 0:
            raise InfeasibleConfig("quality_sd must be non-negative")
        if self.volatile_start > self.volatile_end:
            raise InfeasibleConfig("volatile window is reversed")
        if self.scenario not in SCENARIOS:
            raise InfeasibleConfig(f"unknown scenario {self.scenario!r}")


@dataclass(frozen=True)
class Variant:
    label: str
    policy: str = "ataria"  # ataria | ql | ql_reset | opt
    rt_arp: bool = True
    sas_kr: bool = True
    init: str = "random"  # random | best | worst | optimal
    churn: bool = False
    n_children: Optional[int] = None
    w_info: Optional[float] = None


def scenario_variants(cfg: ScenarioConfig) -> list[Variant]:
    s = cfg.scenario
    if s == "stable":
        return [Variant("OPT", policy="opt", init="optimal"), Variant("QL", policy="ql"),
                Variant("QL-RESET", policy="ql_reset"), Variant("ATARIA")]
    if s == "exploration":
        return [Variant("ATARIA0", rt_arp=False), Variant("ATARIA+", init="best"),
                Variant("ATARIA-", init="worst")]
    if s == "volatile":
        return [Variant("ATARIA-NODROP"), Variant("ATARIA-DROP", churn=True),
                Variant("ATARIA-NOSASKR", rt_arp=False, sas_kr=False, churn=True)]
    out = []
    for c in cfg.large_children:
        out.append(Variant(f"ATARIA-{c}", n_children=c, w_info=large_info_weight(cfg, c)))
    return out


def large_info_weight(cfg: ScenarioConfig, n_children: int) -> float:
    """INFO weight for a large-system variant: the tabulated values for 10, 50
    and 100 children, the size-based estimate otherwise."""
    table = {10: cfg.w_info, 50: 0.55, 100: 0.60}
    if n_children in table:
        return table[n_children]
    total = cfg.n_parents + n_children
    w = estimate_w(total, cfg.neighbourhood_cap, min(cfg.knowledge_cap, total))
    return float(w[Category.INFO])


def derive_seed(*parts) -> int:
    h = hashlib.sha256("/".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass
class World:
    cfg: ScenarioConfig
    model: QualityModel
    specs: dict
    parents: list
    children: list
    composites: dict  # kind -> tuple of task types
    initial: SystemState

    def composite_of(self, parent) -> tuple:
        (kind,) = self.specs[parent].responsibilities
        return self.composites[kind]

    def theoretical_utility(self) -> float:
        return sum(self.model.best_base(tt) for p in self.parents for tt in self.composite_of(p))


def _clipped_normal(rng: random.Random, mu: float, sd: float) -> float:
    v = rng.gauss(mu, sd)
    return min(1.0, max(v, 1e-3))


def build_world(cfg: ScenarioConfig, rng: random.Random, n_children: Optional[int] = None) -> World:
    cfg.validate()
    n_children = n_children or cfg.n_children
    T = cfg.n_task_types
    parents = [f"p{i:02d}" for i in range(cfg.n_parents)]
    children = [f"c{i:03d}" for i in range(n_children)]
    caps = {c: {t for t in range(T) if rng.random() < cfg.capability_prob} for c in children}
    for t in range(T):
        if not any(t in caps[c] for c in children):
            caps[rng.choice(children)].add(t)
    base = {}
    for c in children:
        for t in sorted(caps[c]):
            base[(c, t)] = _clipped_normal(rng, cfg.quality_mean, cfg.quality_sd)
    model = QualityModel(base)
    composites = {k: tuple(sorted(rng.sample(range(T), cfg.tasks_per_composite)))
                  for k in range(cfg.n_composite_types)}
    specs = {}
    states = {}
    kcap = min(cfg.knowledge_cap, n_children)
    ncap = min(cfg.neighbourhood_cap, kcap)
    for i, p in enumerate(parents):
        specs[p] = AgentSpec(p, frozenset(), frozenset({i % cfg.n_composite_types}),
                             cfg.neighbourhood_cap, cfg.knowledge_cap)
        k = rng.sample(children, kcap)
        states[p] = AgentState(frozenset(k), frozenset(rng.sample(k, ncap)))
    for c in children:
        specs[c] = AgentSpec(c, frozenset(caps[c]), frozenset(), cfg.neighbourhood_cap, cfg.knowledge_cap)
        others = [x for x in children if x != c]
        k = rng.sample(others, min(kcap, len(others)))
        states[c] = AgentState(frozenset(k), frozenset(rng.sample(k, min(ncap, len(k)))))
    system = SystemState.create(specs.values(), states)
    return World(cfg, model, specs, parents, children, composites, system)


def build_system(cfg: ScenarioConfig, rng: random.Random):
    """``(SystemState, QualityModel, parent runtimes)`` for a fresh world."""
    world = build_world(cfg, rng)
    rts = make_runtimes(world, Variant("ATARIA"), rng)
    return world.initial, world.model, rts


def _seeded_hood(world: World, parent, rng: random.Random, mode: str) -> AgentState:
    cfg = world.cfg
    ranked = best_neighbourhoods(world.model, world.composite_of(parent), world.children,
                                 min(cfg.neighbourhood_cap, len(world.children)))
    if mode == "optimal":
        hood = set(ranked[0][1])
    else:
        src = ranked[0][1] if mode == "best" else ranked[-1][1]
        take = math.ceil(cfg.seed_fraction * cfg.neighbourhood_cap)
        hood = set(rng.sample(sorted(src), min(take, len(src))))
        rest = sorted(set(world.children) - hood)
        hood |= set(rng.sample(rest, min(cfg.neighbourhood_cap - len(hood), len(rest))))
    rest = sorted(set(world.children) - hood)
    extra = rng.sample(rest, min(cfg.knowledge_cap - len(hood), len(rest)))
    return AgentState(frozenset(hood | set(extra)), frozenset(hood))


def make_runtimes(world: World, variant: Variant, rng: random.Random) -> dict:
    cfg = world.cfg
    w_info = variant.w_info if variant.w_info is not None else cfg.w_info
    out = {}
    for p in world.parents:
        st = world.initial.state_of(p)
        if variant.init != "random":
            st = _seeded_hood(world, p, rng, variant.init)
        out[p] = AgentRuntime(
            spec=world.specs[p], state=st, q=QTable(), tsqm=TSQM(cfg.tsqm_m, cfg.tsqm_n),
            weights=ImpactWeights.of(cfg.w_link, w_info), epsilon_base=cfg.epsilon_base,
            mv_threshold=cfg.mv_threshold, alpha=cfg.alpha, gamma=cfg.gamma, tau=cfg.tau, decay=cfg.decay,
            info_reward=cfg.info_reward, link_reward=cfg.link_reward,
            use_rt_arp=variant.rt_arp, use_sas_kr=variant.sas_kr,
            protect_new=cfg.protect_new)
    return out


@dataclass
class EpisodeResult:
    episode: int
    utility: float
    optimal: float
    failed_fraction: float
    label: str = ""


@dataclass
class RunResult:
    label: str
    run: int
    seed: int
    episodes: list = field(default_factory=list)
    final_states: dict = field(default_factory=dict, repr=False)


class Churn:
    """Per-episode availability: a base transient failure rate plus, for
    volatile runs, leave/rejoin toggling inside the disruption window."""

    def __init__(self, cfg: ScenarioConfig, agents, rng: random.Random, churn: bool):
        self.cfg, self.agents, self.rng, self.churn = cfg, sorted(agents), rng, churn
        self.gone: set = set()

    def next(self, episode: int) -> frozenset:
        cfg = self.cfg
        # draw both streams unconditionally so labels sharing a seed see the same base failures
        base = {a for a in self.agents if self.rng.random() < cfg.p_unavailable}
        flips = {a for a in self.agents if self.rng.random() < cfg.p_leave}
        if self.churn and cfg.volatile_start <= episode <= cfg.volatile_end:
            self.gone ^= flips
        else:
            self.gone = set()
        return frozenset(base | self.gone)


def run_episode(world: World, variant: Variant, runtimes: dict, system: SystemState, episode: int,
                rng: random.Random, down: frozenset = frozenset()) -> tuple[SystemState, EpisodeResult]:
    cfg = world.cfg
    env = Environment(world.model, down, cfg.info_neighbours_only)
    for p in world.parents:
        system = system.with_agent_state(p, runtimes[p].state)
    pending = {}
    for p in world.parents:
        (kind,) = world.specs[p].responsibilities
        comp = CompositeTask.build(kind, world.composites[kind], system.clock)
        system, g = apply_requirement(system, comp, EXTERNAL, rng)
        pending[g] = list(comp.tasks)
    utility = 0.0
    allocs = failed = 0
    steps = {p: 0 for p in world.parents}
    order = list(world.parents)
    while True:
        live = [p for p in order if pending[p] and steps[p] < cfg.step_budget]
        if not live:
            break
        system = system.reset_load()
        rng.shuffle(order)
        for p in order:
            if not pending[p] or steps[p] >= cfg.step_budget:
                continue
            rt = runtimes[p]
            steps[p] += 1
            try:
                if variant.policy == "opt":
                    _, system, rep = greedy_step(rt, system, pending[p], rng, env)
                elif variant.policy in ("ql", "ql_reset"):
                    _, system, rep = ql_step(rt, system, pending[p], rng, env, tau=float(episode + 1))
                else:
                    _, system, rep = ata_ria_step(rt, system, pending[p], rng, env)
            except NoAvailableAction:
                steps[p] = cfg.step_budget
                continue
            if rep.action.category is Category.ALLOC:
                allocs += 1
                failed += not rep.success
            utility += rep.quality
    if variant.policy == "ql_reset":
        for rt in runtimes.values():
            ql_reset(rt.q)
    system = replace(system, allocations=())
    frac = failed / allocs if allocs else 0.0
    return system, EpisodeResult(episode, utility, world.theoretical_utility(), frac, variant.label)


def run_variant(cfg: ScenarioConfig, variant: Variant, run: int) -> RunResult:
    world_seed = derive_seed(cfg.seed, run, "world", variant.n_children or cfg.n_children)
    world = build_world(cfg, random.Random(world_seed), variant.n_children)
    # common random numbers: every label in a run draws from the same stream, so
    # variants that behave identically stay identical until they diverge
    seed = derive_seed(cfg.seed, run, "learner")
    rng = random.Random(seed)
    runtimes = make_runtimes(world, variant, random.Random(derive_seed(seed, "init")))
    churn = Churn(cfg, world.children, random.Random(derive_seed(cfg.seed, run, "churn")), variant.churn)
    system = world.initial
    out = RunResult(variant.label, run, seed)
    for ep in range(cfg.episodes):
        down = churn.next(ep)
        system, res = run_episode(world, variant, runtimes, system, ep, rng, down)
        out.episodes.append(res)
    out.final_states = {p: rt.state for p, rt in runtimes.items()}
    return out


def run_scenario(cfg: ScenarioConfig, labels=None, runs: Optional[int] = None) -> list[RunResult]:
    """Every (run, variant) pair, each independently seeded from ``cfg.seed``."""
    cfg.validate()
    variants = [v for v in scenario_variants(cfg) if labels is None or v.label in labels]
    results = []
    for run in range(cfg.runs if runs is None else runs):
        for v in variants:
            results.append(run_variant(cfg, v, run))
    return results


def baseline_optimal(cfg: ScenarioConfig, run: int = 0) -> RunResult:
    return run_variant(cfg, Variant("OPT", policy="opt", init="optimal"), run)


def baseline_ql(cfg: ScenarioConfig, run: int = 0) -> RunResult:
    return run_variant(cfg, Variant("QL", policy="ql"), run)


def baseline_ql_reset(cfg: ScenarioConfig, run: int = 0) -> RunResult:
    return run_variant(cfg, Variant("QL-RESET", policy="ql_reset"), run)


def config_fields() -> dict:
    return {f.name: f for f in fields(ScenarioConfig)}
