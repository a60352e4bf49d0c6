"""Shared small scenarios (horizon <= 10, at most 27 allocations)."""

from __future__ import annotations

import math

import pytest

from legible_teams.domain import NO_SHARING_ALL_BUSY, NO_SHARING_EMPTIES, SHARING_ALL_BUSY, Trajectory
from legible_teams.environments import GRID_ACTIONS, EnvKind, Scenario, initial_state, transition

PE = EnvKind.PURSUIT_EVASION
GK = EnvKind.GRID_KITCHEN


def pe(id_, starts, targets, policy, bounds=((0, 6), (0, 4)), horizon=10, step=1.0):
    return Scenario(id_, PE, starts, targets, bounds, horizon, step_size=step, policy=policy)


def gk(id_, starts, targets, policy, obstacles=(), bounds=((0, 4), (0, 4)), horizon=10):
    return Scenario(id_, GK, starts, targets, bounds, horizon, obstacles=obstacles, policy=policy)


# Six scenarios with at most six allocations each: the brute-force bilevel set.
TINY = [
    pe("pe-perm", ((3, 0), (0, 4), (6, 4)), ((1, 2), (3, 2), (5, 2)), NO_SHARING_ALL_BUSY),
    pe("pe-perm-offset", ((3, 0), (0, 4), (6, 3)), ((1, 1), (2.5, 3), (5, 2)), NO_SHARING_ALL_BUSY),
    pe("pe-duo", ((0, 0), (6, 4)), ((2, 3), (5, 1)), NO_SHARING_EMPTIES),
    gk("grid-perm", ((2, 0), (0, 4), (4, 4)), ((1, 2), (2, 3), (3, 1)), NO_SHARING_ALL_BUSY),
    gk("grid-perm-wall", ((2, 0), (0, 4), (4, 4)), ((0, 1), (2, 4), (4, 1)), NO_SHARING_ALL_BUSY,
       obstacles=((1, 2), (2, 2), (3, 2))),
    gk("grid-duo", ((0, 0), (4, 4)), ((1, 3), (3, 1)), NO_SHARING_EMPTIES),
]

# Larger, still small enough for the direct-Bayes oracle.
SMALL = TINY + [
    pe("pe-duo-sharing", ((3, 0), (3, 4)), ((1, 2), (3, 2), (5, 2)), SHARING_ALL_BUSY),
    pe("pe-three-ball", ((3, 0), (0, 4), (6, 4)), ((1, 2), (4, 2), (5, 2)), NO_SHARING_EMPTIES),
    gk("grid-empties", ((2, 0), (0, 4), (4, 4)), ((1, 2), (2, 4), (3, 1)), NO_SHARING_EMPTIES,
       obstacles=((2, 2),)),
]


@pytest.fixture(params=TINY, ids=lambda s: s.id)
def tiny(request):
    return request.param


@pytest.fixture(params=SMALL, ids=lambda s: s.id)
def small(request):
    return request.param


def rollout(scenario, actions) -> Trajectory:
    s = initial_state(scenario)
    steps = []
    for a in actions:
        steps.append((s, tuple(tuple(x) for x in a)))
        s = transition(scenario, s, steps[-1][1])
    return Trajectory(tuple(steps), s)


def random_actions(scenario, rng, length):
    out = []
    for _ in range(length):
        if scenario.kind.continuous:
            r = rng.uniform(0, scenario.step_size, scenario.n_agents)
            ang = rng.uniform(0, 2 * math.pi, scenario.n_agents)
            out.append(tuple((float(ri * math.cos(a)), float(ri * math.sin(a))) for ri, a in zip(r, ang)))
        else:
            moves = list(GRID_ACTIONS.values())
            out.append(tuple(moves[k] for k in rng.integers(len(moves), size=scenario.n_agents)))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
