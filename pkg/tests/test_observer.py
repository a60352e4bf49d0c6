import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from legible_teams.domain import (
    NO_SHARING_ALL_BUSY,
    NO_SHARING_EMPTIES,
    Allocation,
    Mode,
    ObserverConfig,
    PosteriorTrace,
    Trajectory,
    enumerate_allocations,
    human_classes,
)
from legible_teams.environments import initial_state, transition
from legible_teams.errors import ConfigurationError, NumericalError, StructuralError
from legible_teams.observer import (
    boltzmann_probabilities,
    class_marginals,
    human_marginal_posterior,
    map_prediction,
    normalize_log,
    posterior,
    posterior_mass,
    step_likelihood,
    trajectory_log_likelihood,
)
from legible_teams.planner import plan_legible_play

import oracles
from conftest import SMALL, TINY, pe, random_actions, rollout

CFG = ObserverConfig()


def mirror():
    """Human and robot; the robot walks up the axis between two mirror-image targets."""
    return pe("mirror", ((3, 0), (3, 0)), ((1, 3), (5, 3)), NO_SHARING_ALL_BUSY, bounds=((0, 6), (0, 6)))


# ------------------------------------------------------------------ step likelihood


def test_equal_q_splits_evenly():
    # left and right are equally far from a target straight ahead
    sc = pe("solo", ((3, 0),), ((3, 5),), NO_SHARING_EMPTIES, bounds=((0, 6), (0, 6)))
    grid = np.array([[-1.0, 0.0], [1.0, 0.0]])
    p = step_likelihood(sc, Allocation.of([0]), initial_state(sc), ((1.0, 0.0),), action_grid=grid)
    assert p == pytest.approx(0.5, abs=1e-12)


def test_softmax_arithmetic():
    assert boltzmann_probabilities([math.log(2), 0.0], 1.0) == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


def test_softmax_limit():
    p = boltzmann_probabilities([0.0, -1.0], 1e3)
    assert p[0] >= 1 - 1e-6


def test_softmax_huge_values_are_stable():
    p = boltzmann_probabilities([1e6, 1e6 - 1.0, -1e6], 1.0)
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


def test_empty_grid_is_configuration_error():
    with pytest.raises(ConfigurationError):
        boltzmann_probabilities(np.zeros(0))
    sc = pe("solo", ((3, 0),), ((3, 5),), NO_SHARING_EMPTIES, bounds=((0, 6), (0, 6)))
    with pytest.raises(ConfigurationError):
        step_likelihood(sc, Allocation.of([0]), initial_state(sc), ((0.0, 0.0),), action_grid=np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(q=st.lists(st.floats(-50, 50), min_size=1, max_size=12), c=st.floats(-1e3, 1e3), beta=st.floats(0.1, 5))
def test_shift_invariance(q, c, beta):
    a = boltzmann_probabilities(q, beta)
    b = boltzmann_probabilities(np.array(q) + c, beta)
    assert np.max(np.abs(a - b)) <= 1e-12
    assert a.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("sc", TINY, ids=lambda s: s.id)
def test_step_likelihood_matches_joint_oracle(sc):
    rng = np.random.default_rng(3)
    acts = random_actions(sc, rng, 3)
    xi = rollout(sc, acts)
    robots = list(range(1, sc.n_agents))
    for theta in enumerate_allocations(sc):
        for t, (s, a) in enumerate(xi.steps):
            got = step_likelihood(sc, theta, s, a, agents=robots)
            vis = oracles.visited_history(sc, [st.positions for st in xi.states])[t]
            ref = oracles.joint_step_probability(sc, theta.assignments, s.positions, vis, a, robots, 1.0)
            assert got == pytest.approx(ref, abs=1e-12)
            assert 0 < got <= 1


# ------------------------------------------------------------------ trajectory likelihood


def test_empty_trajectory_log_likelihood_is_zero():
    sc = TINY[0]
    xi = Trajectory((), initial_state(sc))
    assert trajectory_log_likelihood(sc, enumerate_allocations(sc)[0], xi) == 0.0


def test_one_step_log_likelihood():
    sc = TINY[0]
    xi = rollout(sc, random_actions(sc, np.random.default_rng(0), 1))
    theta = enumerate_allocations(sc)[2]
    s, a = xi.steps[0]
    expected = math.log(step_likelihood(sc, theta, s, a, agents=[1, 2]))
    assert trajectory_log_likelihood(sc, theta, xi) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("sc", TINY, ids=lambda s: s.id)
def test_product_equals_exp_sum(sc):
    xi = rollout(sc, random_actions(sc, np.random.default_rng(11), 5))
    for theta in enumerate_allocations(sc):
        direct = 1.0
        for s, a in xi.steps:
            direct *= step_likelihood(sc, theta, s, a, agents=range(1, sc.n_agents))
        assert math.exp(trajectory_log_likelihood(sc, theta, xi)) == pytest.approx(direct, rel=1e-10)


def test_inconsistent_trajectory_names_step():
    sc = TINY[0]
    xi = rollout(sc, random_actions(sc, np.random.default_rng(1), 3))
    s1, a1 = xi.steps[1]
    moved = type(s1)(((0.0, 0.0),) + s1.positions[1:], s1.step, s1.visited)
    bad = Trajectory((xi.steps[0], (moved, a1), xi.steps[2]), xi.terminal)
    with pytest.raises(StructuralError, match="step 0"):
        trajectory_log_likelihood(sc, enumerate_allocations(sc)[0], bad)


# ------------------------------------------------------------------ posterior


def test_single_allocation_posterior_is_one():
    sc = pe("one", ((0, 0),), ((2, 2),), NO_SHARING_ALL_BUSY, bounds=((0, 4), (0, 4)))
    allocs = enumerate_allocations(sc)
    assert len(allocs) == 1
    xi = rollout(sc, [((0.5, 0.5),)] * 3)
    trace = posterior(sc, allocs, xi, ObserverConfig(include_human=True))
    assert np.all(trace.probs == 1.0)


def test_mirror_targets_stay_even():
    sc = mirror()
    allocs = enumerate_allocations(sc)
    assert len(allocs) == 2
    xi = rollout(sc, [((0.0, 0.0), (0.0, 1.0))] * 4)
    trace = posterior(sc, allocs, xi, CFG)
    assert np.allclose(trace.probs, 0.5, atol=1e-12)


@pytest.mark.parametrize("sc", SMALL, ids=lambda s: s.id)
def test_posterior_matches_direct_bayes(sc):
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, random_actions(sc, np.random.default_rng(5), 6))
    trace = posterior(sc, allocs, xi, CFG)
    ref = oracles.direct_posterior(sc, allocs, xi.states, xi.actions)
    assert np.max(np.abs(trace.probs - ref)) <= 1e-9


def test_posterior_with_human_included_matches_oracle():
    sc = TINY[0]
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, random_actions(sc, np.random.default_rng(8), 4))
    trace = posterior(sc, allocs, xi, ObserverConfig(include_human=True, beta=0.7))
    ref = oracles.direct_posterior(sc, allocs, xi.states, xi.actions, beta=0.7, include_human=True)
    assert np.max(np.abs(trace.probs - ref)) <= 1e-9


def test_nonuniform_prior_recovered_and_used():
    sc = TINY[0]
    allocs = enumerate_allocations(sc)
    prior = np.arange(1, len(allocs) + 1, dtype=float)
    prior /= prior.sum()
    xi = rollout(sc, random_actions(sc, np.random.default_rng(9), 4))
    trace = posterior(sc, allocs, xi, ObserverConfig(prior=tuple(prior)))
    assert np.array_equal(trace.row(0), prior)
    ref = oracles.direct_posterior(sc, allocs, xi.states, xi.actions, prior=prior)
    assert np.max(np.abs(trace.probs - ref)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(idx=st.integers(0, len(SMALL) - 1), seed=st.integers(0, 2**16), length=st.integers(0, 8),
       beta=st.floats(0.1, 4.0))
def test_rows_normalized_and_prior_first(idx, seed, length, beta):
    sc = SMALL[idx]
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, random_actions(sc, np.random.default_rng(seed), length))
    cfg = ObserverConfig(beta=beta)
    trace = posterior(sc, allocs, xi, cfg)
    assert len(trace) == length + 1
    assert np.all(trace.probs >= 0)
    assert np.max(np.abs(trace.probs.sum(1) - 1)) <= 1e-9
    assert np.array_equal(trace.row(0), cfg.prior_vector(len(allocs)))
    marg, _, reps = class_marginals(trace)
    assert np.max(np.abs(marg.sum(1) - 1)) <= 1e-9


def test_all_zero_mass_is_numerical_error():
    with pytest.raises(NumericalError):
        normalize_log(np.full((2, 3), -np.inf))


# ------------------------------------------------------------------ human marginal


def test_marginal_single_class_is_one():
    sc = pe("solo", ((0, 0),), ((2, 2), (3, 1)), NO_SHARING_EMPTIES, bounds=((0, 4), (0, 4)))
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, [((1.0, 0.0),)] * 2)
    assert human_marginal_posterior(sc, allocs, xi, CFG, allocs[0]) == pytest.approx(1.0, abs=1e-12)


def test_marginal_uniform_over_permutations():
    sc = TINY[0]
    allocs = enumerate_allocations(sc)
    xi = Trajectory((), initial_state(sc))
    for theta in allocs:
        assert human_marginal_posterior(sc, allocs, xi, CFG, theta) == pytest.approx(2 / 6, abs=1e-12)


def test_marginal_is_sum_of_class_members():
    sc = next(s for s in SMALL if s.id == "pe-three-ball")
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, random_actions(sc, np.random.default_rng(2), 5))
    ref = oracles.direct_posterior(sc, allocs, xi.states, xi.actions)[-1]
    class_of, reps = human_classes(allocs)
    total = 0.0
    for r in reps:
        theta = allocs[r]
        expected = sum(p for a, p in zip(allocs, ref) if a.human == theta.human)
        got = human_marginal_posterior(sc, allocs, xi, CFG, theta)
        assert got == pytest.approx(expected, abs=1e-9)
        total += got
    assert total == pytest.approx(1.0, abs=1e-9)


# ------------------------------------------------------------------ MAP prediction


def _trace(*rows):
    allocs = tuple(Allocation.of([k], [j for j in range(len(rows[0])) if j != k]) for k in range(len(rows[0])))
    return PosteriorTrace(allocs, np.array(rows, dtype=float))


def test_map_picks_largest():
    trace = _trace([0.7, 0.2, 0.1])
    assert map_prediction(trace, Mode.WATCH, 0) is trace.allocations[0]


def test_map_tie_goes_to_lowest_index():
    trace = _trace([0.5, 0.5])
    assert map_prediction(trace, Mode.WATCH, 0) is trace.allocations[0]
    assert map_prediction(trace, Mode.PLAY, 0) == trace.allocations[0].human


def test_play_prediction_recovers_planned_human_subtask():
    sc = TINY[0]
    result = plan_legible_play(sc)
    t = len(result.trajectory)
    assert map_prediction(result.posterior, Mode.PLAY, t) == result.allocation.human
    assert posterior_mass(result.posterior, Mode.PLAY, t, result.allocation) == pytest.approx(
        result.objective_value, abs=1e-9
    )


def test_trajectory_prefix_consistency():
    sc = TINY[3]
    allocs = enumerate_allocations(sc)
    xi = rollout(sc, random_actions(sc, np.random.default_rng(4), 6))
    full = posterior(sc, allocs, xi, CFG)
    for t in range(len(xi) + 1):
        part = posterior(sc, allocs, xi.prefix(t), CFG)
        assert np.allclose(part.row(t), full.row(t), atol=1e-12)


def test_transition_validates_grid_action_in_posterior():
    sc = TINY[3]
    s = initial_state(sc)
    with pytest.raises(StructuralError):
        transition(sc, s, ((1, 1), (0, 0), (0, 0)))
