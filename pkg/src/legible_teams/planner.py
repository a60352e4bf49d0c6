"""Bilevel allocation/trajectory search.

Upper level: every allocation in Θ. Lower level: a finite trajectory family per
allocation (each agent goes straight to its targets, optionally detouring through
one point of a coarse via-point lattice first). Both levels are searched
exhaustively; ties resolve to the lowest allocation index, then the lowest family
index.

Scoring reuses per-agent likelihood tables: an agent's contribution to
``log P(xi | theta')`` depends only on its own path and its own subtask set under
``theta'``, so each (path, subtask set) pair is evaluated once and every joint
trajectory is scored by gathering from those tables.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    HUMAN,
    Allocation,
    FairnessKind,
    Mode,
    Objective,
    ObjectiveKind,
    ObserverConfig,
    PosteriorTrace,
    Trajectory,
    enumerate_allocations,
    human_classes,
)
from .environments import (
    Scenario,
    completion_steps,
    geometry,
    initial_state,
    optimal_order,
    shortest_grid_path,
    to_mask,
    transition,
)
from .errors import ConfigurationError, InfeasibleError
from .observer import agent_log_likelihoods, normalize_log, observed_agents, posterior

MAX_FAMILY = 10_000
DEFAULT_LATTICE = 3
TIE_TOL = 1e-12


# --------------------------------------------------------------------------- fairness


def fairness_allocation(theta: Allocation, n: int, n_subtasks: int) -> list[float]:
    """Equality of allocation: ``-| |T|/N - |T_i(theta)| |`` per agent."""
    if n < 1:
        raise ConfigurationError("team size must be at least 1")
    share = n_subtasks / n
    return [-abs(share - len(s)) for s in theta.assignments]


def path_lengths(xi: Trajectory) -> np.ndarray:
    """Distance each agent actually travels along ``xi`` (one per grid move)."""
    pos = np.array([s.positions for s in xi.states], dtype=float)  # (T+1, N, 2)
    if len(pos) < 2:
        return np.zeros(pos.shape[1])
    return np.sqrt((np.diff(pos, axis=0) ** 2).sum(-1)).sum(0)


def effort_fairness(lengths, n: int) -> list[float]:
    d = np.asarray(lengths, dtype=float)
    total = d.sum()
    return [-abs(total / n - di) for di in d]


def fairness_effort(xi: Trajectory, n: int) -> list[float]:
    """Equality of effort: ``-| d/N - d_i |`` with ``d_i`` the distance agent i travels."""
    return effort_fairness(path_lengths(xi), n)


# --------------------------------------------------------------------------- family


@dataclass(frozen=True, eq=False)
class AgentPath:
    agent: int
    subtasks: frozenset
    via: tuple | None
    actions: np.ndarray  # (L, 2)
    positions: np.ndarray  # (L+1, 2)
    visited: np.ndarray  # (L+1,) target bitmasks
    length: float

    @property
    def steps(self) -> int:
        return len(self.actions)


def via_lattice(scenario: Scenario, resolution: int = DEFAULT_LATTICE) -> list[tuple]:
    """Interior lattice points, ``resolution`` per axis, x-major order."""
    geo = geometry(scenario)
    fr = [(k + 1) / (resolution + 1) for k in range(resolution)]
    xs = [geo.x0 + f * (geo.x1 - geo.x0) for f in fr]
    ys = [geo.y0 + f * (geo.y1 - geo.y0) for f in fr]
    pts = []
    for x in xs:
        for y in ys:
            if geo.continuous:
                p = (float(x), float(y))
            else:
                p = (int(round(x)), int(round(y)))
                if p in scenario.obstacles:
                    continue
            if p not in pts:
                pts.append(p)
    return pts


def _saturate(actions: np.ndarray, step: float) -> np.ndarray:
    norms = np.hypot(actions[..., 0], actions[..., 1])
    over = norms > step
    out = actions.copy()
    out[over] *= (step / norms[over])[:, None]
    return out


def _rollout(scenario: Scenario, agent: int, subtasks: frozenset, via, waypoints) -> AgentPath:
    geo = geometry(scenario)
    start = scenario.starts[agent]
    if geo.continuous:
        pos = [np.array(start, dtype=float)]
        acts = []
        for w in waypoints:
            w = np.asarray(w, dtype=float)
            d = float(np.hypot(*(w - pos[-1])))
            n = int(geo.leg_steps(d))
            for k in range(n):
                a = _saturate(((w - pos[-1]) / (n - k))[None, :], geo.step)
                acts.append(a[0])
                pos.append(geo.move(pos[-1][None, :], a)[0])
        actions = np.array(acts, dtype=float).reshape(-1, 2)
    else:
        cells = [tuple(start)]
        for w in waypoints:
            cells.extend(shortest_grid_path(scenario, cells[-1], w)[1:])
        pos = [np.array(c, dtype=np.int64) for c in cells]
        actions = np.diff(np.array(cells, dtype=np.int64).reshape(-1, 2), axis=0).reshape(-1, 2)
    positions = np.array(pos).reshape(-1, 2)
    visited = np.bitwise_or.accumulate(geo.hits(positions))
    length = float(np.sqrt((np.diff(positions.astype(float), axis=0) ** 2).sum(-1)).sum())
    return AgentPath(agent, subtasks, via, actions, positions, visited, length)


@functools.lru_cache(maxsize=4096)
def agent_paths(scenario: Scenario, agent: int, subtasks: frozenset,
                lattice: int = DEFAULT_LATTICE) -> tuple[AgentPath, ...]:
    """Candidate paths for one agent: direct first, then one detour per via-point.

    The human and agents with nothing to do only get the direct path.
    """
    start = scenario.starts[agent]
    out = [_rollout(scenario, agent, subtasks, None,
                    [scenario.targets[k] for k in optimal_order(scenario, start, subtasks)])]
    if agent == HUMAN or not subtasks:
        return tuple(out)
    for v in via_lattice(scenario, lattice):
        order = optimal_order(scenario, v, subtasks)
        p = _rollout(scenario, agent, subtasks, v, [v] + [scenario.targets[k] for k in order])
        if not any(np.array_equal(p.actions, q.actions) for q in out):
            out.append(p)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class TrajectoryFamily:
    """Finite set of joint trajectories realizing one allocation.

    ``members[m, i]`` indexes ``paths[i]``; members keep enumeration order
    (agent 0's choice varies slowest).
    """

    scenario: Scenario
    allocation: Allocation
    paths: tuple[tuple[AgentPath, ...], ...]
    members: np.ndarray
    steps: np.ndarray

    def __len__(self) -> int:
        return len(self.members)

    def lengths(self) -> np.ndarray:
        """``(M, N)`` distance travelled by each agent in each member."""
        per_agent = [np.array([p.length for p in ps]) for ps in self.paths]
        return np.stack([per_agent[i][self.members[:, i]] for i in range(len(self.paths))], axis=1)

    def trajectory(self, m: int) -> Trajectory:
        return build_trajectory(self.scenario, [self.paths[i][j] for i, j in enumerate(self.members[m])])


def build_trajectory(scenario: Scenario, paths) -> Trajectory:
    """Roll the per-agent action sequences through the joint dynamics; finished agents stay."""
    T = max((p.steps for p in paths), default=0)
    geo = geometry(scenario)
    zero = (0.0, 0.0) if geo.continuous else (0, 0)
    s = initial_state(scenario)
    steps = []
    for t in range(T):
        a = tuple(
            (tuple(float(c) for c in p.actions[t]) if geo.continuous else tuple(int(c) for c in p.actions[t]))
            if t < p.steps else zero
            for p in paths
        )
        steps.append((s, a))
        s = transition(scenario, s, a)
    return Trajectory(tuple(steps), s)


@functools.lru_cache(maxsize=4096)
def enumerate_family(scenario: Scenario, theta: Allocation, lattice: int = DEFAULT_LATTICE) -> TrajectoryFamily:
    paths = tuple(agent_paths(scenario, i, theta.assignments[i], lattice) for i in range(scenario.n_agents))
    grids = np.meshgrid(*[np.arange(len(p)) for p in paths], indexing="ij")
    members = np.stack([g.ravel() for g in grids], axis=1)
    steps_tab = [np.array([p.steps for p in ps]) for ps in paths]
    steps = np.max([steps_tab[i][members[:, i]] for i in range(len(paths))], axis=0)
    keep = steps <= scenario.horizon
    if not keep.any():
        need = int(steps.min())
        raise InfeasibleError(
            f"allocation {theta.label(scenario.labels)} needs {need} steps, horizon is {scenario.horizon}"
        )
    members, steps = members[keep], steps[keep]
    if len(members) > MAX_FAMILY:
        direct = [ps[0].length for ps in paths]
        detour = sum(
            np.array([p.length - direct[i] for p in paths[i]])[members[:, i]] for i in range(len(paths))
        )
        chosen = np.sort(np.argsort(detour, kind="stable")[:MAX_FAMILY])
        members, steps = members[chosen], steps[chosen]
    return TrajectoryFamily(scenario, theta, paths, members, steps)


# --------------------------------------------------------------------------- search space


@dataclass(eq=False)
class _AgentTable:
    """Likelihood table for one agent over every candidate path it may follow."""

    sets: list  # distinct subtask sets of this agent across Θ (hypotheses)
    set_index: np.ndarray  # (|Θ|,) hypothesis index of each allocation
    paths: list = field(default_factory=list)
    path_ids: dict = field(default_factory=dict)  # id(AgentPath) -> row
    steps: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    cum: list = field(default_factory=list)  # per path (H, L+1) cumulative log-likelihood
    stay: list = field(default_factory=list)  # per path (H,) log-likelihood of staying at the end

    def finalize(self):
        self.steps = np.array(self.steps)
        self.lengths = np.array(self.lengths)
        self.cum_end = np.stack([c[:, -1] for c in self.cum])
        self.stay_arr = np.stack(self.stay)


class SearchSpace:
    """Θ, every feasible trajectory family, and the per-agent likelihood tables."""

    def __init__(self, scenario: Scenario, config: ObserverConfig, lattice: int = DEFAULT_LATTICE):
        self.scenario = scenario
        self.config = config
        self.allocations = enumerate_allocations(scenario)
        n_alloc = len(self.allocations)
        self.prior = config.prior_vector(n_alloc)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(self.prior)
        self.class_of, self.class_reps = human_classes(self.allocations)
        self.observed = observed_agents(scenario, config)

        self.families: list[TrajectoryFamily | None] = []
        self.infeasible: dict[int, str] = {}
        for j, theta in enumerate(self.allocations):
            try:
                self.families.append(enumerate_family(scenario, theta, lattice))
            except InfeasibleError as exc:
                self.families.append(None)
                self.infeasible[j] = str(exc)
        if all(f is None for f in self.families):
            raise InfeasibleError(f"scenario {scenario.id}: no allocation is feasible ({next(iter(self.infeasible.values()))})")

        self.tables: list[_AgentTable] = []
        for i in range(scenario.n_agents):
            sets = sorted({a.assignments[i] for a in self.allocations}, key=lambda s: (len(s), sorted(s)))
            idx = {s: k for k, s in enumerate(sets)}
            table = _AgentTable(sets, np.array([idx[a.assignments[i]] for a in self.allocations]))
            hyps = np.array([to_mask(s) for s in sets], dtype=np.int64)
            for fam in self.families:
                if fam is None:
                    continue
                for p in fam.paths[i]:
                    if id(p) in table.path_ids:
                        continue
                    table.path_ids[id(p)] = len(table.paths)
                    table.paths.append(p)
                    table.steps.append(p.steps)
                    table.lengths.append(p.length)
                    if i in self.observed:
                        ll = agent_log_likelihoods(scenario, p.positions, p.actions, p.visited, hyps, config.beta)
                        stay = agent_log_likelihoods(
                            scenario, p.positions[-1:], np.zeros((1, 2)), p.visited[-1:], hyps, config.beta
                        )[:, 0]
                    else:
                        ll = np.zeros((len(hyps), p.steps))
                        stay = np.zeros(len(hyps))
                    table.cum.append(np.concatenate([np.zeros((len(hyps), 1)), np.cumsum(ll, axis=1)], axis=1))
                    table.stay.append(stay)
            table.finalize()
            self.tables.append(table)

        # members re-expressed as rows of the per-agent tables
        self.rows: list[np.ndarray | None] = []
        for fam in self.families:
            if fam is None:
                self.rows.append(None)
                continue
            cols = []
            for i, tab in enumerate(self.tables):
                local = np.array([tab.path_ids[id(p)] for p in fam.paths[i]])
                cols.append(local[fam.members[:, i]])
            self.rows.append(np.stack(cols, axis=1))
        lengths = [fam.lengths().sum(1).max() for fam in self.families if fam is not None]
        self.effort_scale = float(max(lengths))

    @property
    def family_size(self) -> int:
        return sum(len(f) for f in self.families if f is not None)

    def log_likelihood(self, j: int, t: np.ndarray | None = None) -> np.ndarray:
        """``(M, |Θ|)`` log-likelihood of allocation ``j``'s members (full length, or prefix ``t``)."""
        rows = self.rows[j]
        fam = self.families[j]
        T = fam.steps if t is None else np.minimum(t, fam.steps)
        out = np.zeros((len(rows), len(self.allocations)))
        for i in self.observed:
            tab = self.tables[i]
            r = rows[:, i]
            L = tab.steps[r]
            if t is None:
                done = tab.cum_end[r]
            else:
                upto = np.minimum(T, L)
                done = np.stack([tab.cum[k][:, u] for k, u in zip(r, upto)])
            pad = (T - np.minimum(T, L))[:, None]
            out += (done + pad * tab.stay_arr[r])[:, tab.set_index]
        return out

    def posteriors(self, j: int, t=None) -> np.ndarray:
        return normalize_log(self.log_likelihood(j, t) + self.log_prior)

    def legibility(self, j: int, mode: Mode, prefix_weighted: bool = False) -> np.ndarray:
        """Posterior term of the objective for every member of allocation ``j``."""
        fam = self.families[j]
        if not prefix_weighted:
            return self._mass(self.posteriors(j), j, mode)
        total = np.zeros(len(fam))
        for t in range(1, int(fam.steps.max()) + 1):
            active = fam.steps >= t
            total += np.where(active, self._mass(self.posteriors(j, np.full(len(fam), t)), j, mode), 0.0)
        at_zero = self._mass(self.prior[None, :], j, mode)[0]
        return np.where(fam.steps > 0, total / np.maximum(fam.steps, 1), at_zero)

    def _mass(self, post: np.ndarray, j: int, mode: Mode) -> np.ndarray:
        if mode is Mode.WATCH:
            return post[:, j]
        return post[:, self.class_of == self.class_of[j]].sum(1)

    def fairness_terms(self, j: int, kind: FairnessKind) -> np.ndarray:
        """``(M, N)`` normalized fairness of every member (each entry in [-1, 0])."""
        fam = self.families[j]
        theta = self.allocations[j]
        n, t = self.scenario.n_agents, self.scenario.n_subtasks
        if kind is FairnessKind.ALLOCATION:
            f = np.array(fairness_allocation(theta, n, t)) / t
            return np.tile(f, (len(fam), 1))
        lengths = fam.lengths()
        f = -np.abs(lengths.sum(1, keepdims=True) / n - lengths)
        return f / self.effort_scale if self.effort_scale > 0 else np.zeros_like(f)


@functools.lru_cache(maxsize=32)
def search_space(scenario: Scenario, config: ObserverConfig, lattice: int = DEFAULT_LATTICE) -> SearchSpace:
    return SearchSpace(scenario, config, lattice)


# --------------------------------------------------------------------------- results


@dataclass(frozen=True, eq=False)
class PlanResult:
    objective: Objective
    allocation: Allocation
    allocation_index: int
    trajectory: Trajectory
    family_index: int
    objective_value: float
    posterior: PosteriorTrace
    fairness: tuple[float, ...]
    fairness_kind: FairnessKind
    family_size: int
    effort_scale: float

    @property
    def completion_steps(self) -> int:
        return len(self.trajectory)


def _raw_fairness(kind: FairnessKind, theta: Allocation, xi: Trajectory, scenario: Scenario) -> tuple[float, ...]:
    if kind is FairnessKind.ALLOCATION:
        return tuple(fairness_allocation(theta, scenario.n_agents, scenario.n_subtasks))
    return tuple(fairness_effort(xi, scenario.n_agents))


def _finish(space: SearchSpace, objective: Objective, j: int, m: int, value: float,
            report_fairness: FairnessKind, searched: int) -> PlanResult:
    fam = space.families[j]
    theta = space.allocations[j]
    xi = fam.trajectory(m)
    kind = objective.fairness or report_fairness
    return PlanResult(
        objective=objective,
        allocation=theta,
        allocation_index=j,
        trajectory=xi,
        family_index=m,
        objective_value=float(value),
        posterior=posterior(space.scenario, space.allocations, xi, space.config),
        fairness=_raw_fairness(kind, theta, xi, space.scenario),
        fairness_kind=kind,
        family_size=searched,
        effort_scale=space.effort_scale,
    )


def _argmax(scores: list[np.ndarray | None]) -> tuple[int, int, float]:
    """Lowest (allocation, member) whose score is within TIE_TOL of the global maximum."""
    best = max(float(s.max()) for s in scores if s is not None)
    for j, s in enumerate(scores):
        if s is not None and s.max() >= best - TIE_TOL:
            m = int(np.nonzero(s >= best - TIE_TOL)[0][0])
            return j, m, float(s[m])
    raise AssertionError("unreachable")


def _plan_bilevel(scenario: Scenario, config: ObserverConfig, objective: Objective,
                  lattice: int, report_fairness: FairnessKind) -> PlanResult:
    space = search_space(scenario, config, lattice)
    mode = objective.mode
    if mode is Mode.PLAY and scenario.n_agents < 2:
        raise ConfigurationError("playing-mode legibility needs a human and at least one robot")
    scores: list[np.ndarray | None] = []
    for j, fam in enumerate(space.families):
        if fam is None:
            scores.append(None)
            continue
        score = space.legibility(j, mode, objective.prefix_weighted)
        if objective.kind.is_fair:
            f = space.fairness_terms(j, objective.fairness)
            fair = f.sum(1) if mode is Mode.WATCH else f[:, HUMAN]
            score = objective.lam * fair + score
        scores.append(score)
    j, m, value = _argmax(scores)
    return _finish(space, objective, j, m, value, report_fairness, space.family_size)


def plan_legible_watch(scenario: Scenario, config: ObserverConfig = ObserverConfig(), *,
                       prefix_weighted: bool = False, lattice: int = DEFAULT_LATTICE,
                       report_fairness: FairnessKind = FairnessKind.ALLOCATION) -> PlanResult:
    """Allocation and trajectory maximizing the observer's posterior on that allocation."""
    obj = Objective(ObjectiveKind.LEGIBLE_WATCH, prefix_weighted=prefix_weighted)
    return _plan_bilevel(scenario, config, obj, lattice, report_fairness)


def plan_legible_play(scenario: Scenario, config: ObserverConfig = ObserverConfig(), *,
                      prefix_weighted: bool = False, lattice: int = DEFAULT_LATTICE,
                      report_fairness: FairnessKind = FairnessKind.ALLOCATION) -> PlanResult:
    """Allocation and trajectory maximizing the posterior mass on the human's own subtasks."""
    obj = Objective(ObjectiveKind.LEGIBLE_PLAY, prefix_weighted=prefix_weighted)
    return _plan_bilevel(scenario, config, obj, lattice, report_fairness)


def plan_fair_legible(scenario: Scenario, config: ObserverConfig = ObserverConfig(),
                      mode: Mode = Mode.WATCH, fairness: FairnessKind = FairnessKind.ALLOCATION,
                      lam: float = 1.0, *, prefix_weighted: bool = False,
                      lattice: int = DEFAULT_LATTICE) -> PlanResult:
    kind = ObjectiveKind.FAIR_LEGIBLE_PLAY if mode is Mode.PLAY else ObjectiveKind.FAIR_LEGIBLE_WATCH
    obj = Objective(kind, fairness, lam, prefix_weighted)
    return _plan_bilevel(scenario, config, obj, lattice, fairness)


def efficient_values(scenario: Scenario, config: ObserverConfig,
                     allocations: list[Allocation] | None = None) -> np.ndarray:
    """``V_theta(s0) = gamma**k`` per allocation; 0 where ``k`` exceeds the horizon."""
    allocations = enumerate_allocations(scenario) if allocations is None else allocations
    s0 = initial_state(scenario)
    vals = np.zeros(len(allocations))
    for j, theta in enumerate(allocations):
        k = completion_steps(scenario, theta, s0)
        if k <= scenario.horizon:
            vals[j] = config.gamma**k
    return vals


def efficient_probabilities(values: np.ndarray) -> np.ndarray:
    total = values.sum()
    if total <= 0:
        raise InfeasibleError("no allocation completes within the horizon")
    return values / total


def draw_efficient(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(len(probabilities), p=probabilities))


def plan_efficient(scenario: Scenario, config: ObserverConfig = ObserverConfig(), seed: int = 0,
                   mode: str = "argmax", *, lattice: int = DEFAULT_LATTICE,
                   report_fairness: FairnessKind = FairnessKind.ALLOCATION) -> PlanResult:
    """Noisily-optimal baseline: pick by ``V_theta`` (argmax, or sample proportionally)."""
    allocations = enumerate_allocations(scenario)
    values = efficient_values(scenario, config, allocations)
    probs = efficient_probabilities(values)
    if mode == "argmax":
        j = int(np.argmax(values))
    elif mode == "sample":
        j = draw_efficient(probs, np.random.default_rng(seed))
    else:
        raise ConfigurationError(f"unknown efficient mode {mode!r}")
    space = search_space(scenario, config, lattice)
    obj = Objective(ObjectiveKind.EFFICIENT)
    return _finish(space, obj, j, 0, values[j], report_fairness, len(allocations))


def plan(scenario: Scenario, objective: Objective, config: ObserverConfig = ObserverConfig(), seed: int = 0,
         *, efficient_mode: str = "argmax", lattice: int = DEFAULT_LATTICE,
         report_fairness: FairnessKind = FairnessKind.ALLOCATION) -> PlanResult:
    if objective.kind is ObjectiveKind.EFFICIENT:
        return plan_efficient(scenario, config, seed, efficient_mode, lattice=lattice,
                              report_fairness=report_fairness)
    return _plan_bilevel(scenario, config, objective, lattice, objective.fairness or report_fairness)


def evaluate_objective(scenario: Scenario, objective: Objective, config: ObserverConfig,
                       theta: Allocation, xi: Trajectory, effort_scale: float | None = None) -> float:
    """Objective of one (allocation, trajectory) pair, recomputed from scratch."""
    allocations = enumerate_allocations(scenario)
    if objective.kind is ObjectiveKind.EFFICIENT:
        return config.gamma ** completion_steps(scenario, theta, initial_state(scenario))
    trace = posterior(scenario, allocations, xi, config)
    mode = objective.mode
    rows = range(1, len(xi) + 1) if objective.prefix_weighted and len(xi) else [len(xi)]
    masses = []
    for t in rows:
        row = trace.row(t)
        if mode is Mode.WATCH:
            masses.append(row[allocations.index(theta)])
        else:
            masses.append(sum(p for a, p in zip(allocations, row) if a.human == theta.human))
    value = float(np.mean(masses))
    if objective.kind.is_fair:
        n, t = scenario.n_agents, scenario.n_subtasks
        if objective.fairness is FairnessKind.ALLOCATION:
            f = np.array(fairness_allocation(theta, n, t)) / t
        else:
            scale = effort_scale if effort_scale is not None else search_space(scenario, config).effort_scale
            f = np.array(fairness_effort(xi, n)) / scale if scale > 0 else np.zeros(n)
        value = objective.lam * float(f.sum() if mode is Mode.WATCH else f[HUMAN]) + value
    return value
