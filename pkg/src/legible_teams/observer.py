"""Boltzmann-rational Bayesian observer over allocations.

The observer treats the team as one Boltzmann-rational agent choosing joint
actions from a finite candidate grid. Because the team's Q value is a sum of
per-agent terms and agents move independently, the softmax over the joint grid
factorizes exactly into a product of per-agent softmaxes; all likelihood code
below exploits that factorization and works in log space.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .domain import (
    HUMAN,
    Allocation,
    JointAction,
    JointState,
    Mode,
    ObserverConfig,
    PosteriorTrace,
    Trajectory,
    human_classes,
)
from .environments import (
    Scenario,
    agent_candidate_q,
    geometry,
    to_mask,
    transition,
)
from .errors import ConfigurationError, InfeasibleError, NumericalError, StructuralError


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def boltzmann_probabilities(q_values, beta: float = 1.0) -> np.ndarray:
    """``exp(beta*q) / sum exp(beta*q)`` along the last axis, computed stably."""
    q = np.asarray(q_values, dtype=float)
    if q.shape[-1] == 0:
        raise ConfigurationError("empty action grid")
    return np.exp(log_softmax(beta * q))


def observed_agents(scenario: Scenario, config: ObserverConfig) -> list[int]:
    start = 0 if config.include_human else HUMAN + 1
    return list(range(start, scenario.n_agents))


def agent_log_likelihoods(
    scenario: Scenario,
    positions: np.ndarray,
    actions: np.ndarray,
    visited: np.ndarray,
    hypotheses: np.ndarray,
    beta: float,
) -> np.ndarray:
    """Per-step log-likelihood of one agent's actions under each hypothesised subtask set.

    ``positions``/``visited`` cover the states before each action, ``actions`` is
    ``(T, 2)``. Returns ``(H, T)``.
    """
    hypotheses = np.asarray(hypotheses, dtype=np.int64)
    T = len(actions)
    if T == 0:
        return np.zeros((len(hypotheses), 0))
    geo = geometry(scenario)
    q = agent_candidate_q(scenario, positions[:T], visited[:T], hypotheses)  # (T, H, C)
    idx = geo.snap(np.asarray(actions, dtype=float))  # (T,)
    with np.errstate(invalid="ignore"):
        logp = log_softmax(beta * q)
    ll = np.take_along_axis(logp, idx[:, None, None].repeat(len(hypotheses), 1), axis=2)[..., 0]
    if not np.all(np.isfinite(ll)):
        h = int(np.nonzero(~np.isfinite(ll).all(0))[0][0])
        raise InfeasibleError(f"subtask set mask {int(hypotheses[h])} is unreachable for the observed agent")
    return ll.T


def step_likelihood(
    scenario: Scenario,
    theta: Allocation,
    s: JointState,
    a: JointAction,
    beta: float = 1.0,
    action_grid: np.ndarray | None = None,
    agents: Sequence[int] | None = None,
) -> float:
    """Probability the Boltzmann team picks (the grid snap of) ``a`` in ``s`` under ``theta``.

    ``action_grid`` is the per-agent candidate set; the joint grid is its
    Cartesian power over ``agents`` (default: all agents).
    """
    geo = geometry(scenario)
    grid = geo.actions if action_grid is None else np.asarray(action_grid)
    if len(grid) == 0:
        raise ConfigurationError("empty action grid")
    if len(a) != scenario.n_agents:
        raise StructuralError("joint action size does not match the agent count")
    agents = range(scenario.n_agents) if agents is None else agents
    visited = s.visited or tuple(frozenset() for _ in s.positions)
    total = 0.0
    for i in agents:
        q = agent_candidate_q(
            scenario,
            np.array([s.positions[i]]),
            np.array([to_mask(visited[i])]),
            np.array([to_mask(theta.assignments[i])]),
            actions=grid,
        )[0, 0]
        d = ((np.asarray(a[i], dtype=float) - grid) ** 2).sum(-1)
        total += log_softmax(beta * q)[int(d.argmin())]
    return float(np.exp(total))


def _agent_track(xi: Trajectory, agent: int):
    states = xi.states
    pos = np.array([st.positions[agent] for st in states])
    vis = np.array([to_mask(st.visited[agent]) if st.visited else 0 for st in states], dtype=np.int64)
    acts = np.array([a[agent] for a in xi.actions], dtype=float).reshape(-1, 2)
    return pos, acts, vis


def validate_trajectory(scenario: Scenario, xi: Trajectory, tol: float = 1e-9) -> None:
    """Raise StructuralError naming the first step that does not follow the dynamics."""
    for t, (s, a) in enumerate(xi.steps):
        nxt = xi.states[t + 1]
        try:
            expect = transition(scenario, s, a)
        except StructuralError as exc:
            raise StructuralError(f"step {t}: {exc}") from None
        if len(nxt.positions) != len(expect.positions):
            raise StructuralError(f"step {t}: state has the wrong number of agents")
        err = np.abs(np.array(nxt.positions, float) - np.array(expect.positions, float)).max()
        if err > tol or nxt.step != expect.step:
            raise StructuralError(f"step {t}: next state does not follow the dynamics (error {err:.3g})")
        if nxt.visited and nxt.visited != expect.visited:
            raise StructuralError(f"step {t}: visited-target history does not follow the dynamics")


def trajectory_log_likelihood(
    scenario: Scenario, theta: Allocation, xi: Trajectory, config: ObserverConfig = ObserverConfig()
) -> float:
    validate_trajectory(scenario, xi)
    total = 0.0
    for i in observed_agents(scenario, config):
        pos, acts, vis = _agent_track(xi, i)
        hyp = np.array([to_mask(theta.assignments[i])])
        total += float(agent_log_likelihoods(scenario, pos, acts, vis, hyp, config.beta).sum())
    return total


def cumulative_log_likelihoods(
    scenario: Scenario, allocations: Sequence[Allocation], xi: Trajectory, config: ObserverConfig
) -> np.ndarray:
    """``(T+1, |Θ|)`` log-likelihood of every prefix under every allocation."""
    T = len(xi)
    out = np.zeros((T + 1, len(allocations)))
    for i in observed_agents(scenario, config):
        masks = np.array([to_mask(a.assignments[i]) for a in allocations], dtype=np.int64)
        hyps, inverse = np.unique(masks, return_inverse=True)
        pos, acts, vis = _agent_track(xi, i)
        ll = agent_log_likelihoods(scenario, pos, acts, vis, hyps, config.beta)  # (H, T)
        cum = np.concatenate([np.zeros((len(hyps), 1)), np.cumsum(ll, axis=1)], axis=1)
        out += cum[inverse].T
    return out


def normalize_log(logits: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.exp(log_softmax(logits))
    if not np.all(np.isfinite(post)) or np.any(post.sum(-1) <= 0):
        raise NumericalError("posterior has no finite mass")
    return post


def posterior(
    scenario: Scenario,
    allocations: Sequence[Allocation],
    xi: Trajectory,
    config: ObserverConfig = ObserverConfig(),
) -> PosteriorTrace:
    """Posterior over ``allocations`` after every prefix of ``xi`` (row 0 is the prior)."""
    validate_trajectory(scenario, xi)
    prior = config.prior_vector(len(allocations))
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    cum = cumulative_log_likelihoods(scenario, allocations, xi, config)
    probs = normalize_log(cum + log_prior)
    probs[0] = prior
    return PosteriorTrace(tuple(allocations), probs)


def class_marginals(trace: PosteriorTrace) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Posterior mass per human class for every prefix: ``(T+1, n_classes)``."""
    class_of, reps = human_classes(trace.allocations)
    marg = np.zeros((len(trace), len(reps)))
    np.add.at(marg.T, class_of, trace.probs.T)
    return marg, class_of, reps


def human_marginal_posterior(
    scenario: Scenario,
    allocations: Sequence[Allocation],
    xi: Trajectory,
    config: ObserverConfig,
    theta: Allocation,
    t: int | None = None,
) -> float:
    """Posterior mass of all allocations sharing ``theta``'s human subtasks."""
    if theta not in allocations:
        from .errors import MembershipError

        raise MembershipError(f"allocation {theta.label()} is not in the allocation set")
    trace = posterior(scenario, allocations, xi, config)
    row = trace.row(len(xi) if t is None else t)
    return float(sum(p for a, p in zip(allocations, row) if a.human == theta.human))


def map_prediction(trace: PosteriorTrace, mode: Mode, t: int):
    """MAP allocation (watch) or MAP human subtask set (play) after ``t`` steps.

    Ties resolve to the lowest canonical index (argmax returns the first maximum).
    """
    if mode is Mode.WATCH:
        return trace.allocations[int(np.argmax(trace.row(t)))]
    marg, _, reps = class_marginals(trace)
    return trace.allocations[reps[int(np.argmax(marg[t]))]].human


def posterior_mass(trace: PosteriorTrace, mode: Mode, t: int, theta: Allocation) -> float:
    row = trace.row(t)
    if mode is Mode.WATCH:
        return float(row[trace.allocations.index(theta)])
    return float(sum(p for a, p in zip(trace.allocations, row) if a.human == theta.human))
