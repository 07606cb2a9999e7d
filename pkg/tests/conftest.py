import random

import pytest
from hypothesis import settings

from ataria.core import AgentSpec, AgentState, CompositeTask, SystemState, apply_requirement
from ataria.quality import QualityModel

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


def two_level(bases, parent_n=None, delta_n=5, delta_k=7):
    """A parent ``P`` over children built from ``{child: {type: base}}``."""
    children = sorted(bases)
    specs = [AgentSpec("P", frozenset(), frozenset({0}), delta_n, delta_k)]
    specs += [AgentSpec(c, frozenset(bases[c]), frozenset(), delta_n, delta_k) for c in children]
    hood = frozenset(children if parent_n is None else parent_n)
    states = {"P": AgentState(frozenset(children) | hood, hood)}
    model = QualityModel({(c, t): b for c, tb in bases.items() for t, b in tb.items()})
    return SystemState.create(specs, states), model


def give(system, types, kind=0, seed=0):
    comp = CompositeTask.build(kind, types, system.clock)
    system, g = apply_requirement(system, comp, "ext", random.Random(seed))
    return system, g, list(comp.tasks)


@pytest.fixture
def rng():
    return random.Random(1234)
