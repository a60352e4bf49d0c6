"""Core value types: allocations, joint states/actions, trajectories, observer
and objective configuration.

Agent 0 is always the human slot; agents 1..N-1 are robots.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, MembershipError, SizeError

SubtaskId = int
AgentId = int
HUMAN: AgentId = 0

MAX_SUBTASKS = 8
MAX_AGENTS = 5
# (2^5 - 1)^8 sharing allocations would be ~1e12; keep Θ exhaustively searchable.
MAX_ALLOCATIONS = 50_000

Position = tuple  # (x, y); floats for the continuous env, ints for the grid
Action = tuple  # (dx, dy) displacement
JointAction = tuple  # one Action per agent


@dataclass(frozen=True)
class ValidityPolicy:
    sharing: bool
    all_busy: bool

    @classmethod
    def parse(cls, text: str) -> "ValidityPolicy":
        parts = {p.strip() for p in text.replace(" ", "").split("+")}
        sharing = busy = None
        for p in parts:
            if p == "sharing-allowed":
                sharing = True
            elif p == "no-sharing":
                sharing = False
            elif p == "all-busy":
                busy = True
            elif p == "empties-allowed":
                busy = False
            else:
                raise ValueError(f"unknown validity policy term {p!r}")
        if sharing is None or busy is None or len(parts) != 2:
            raise ValueError(
                f"validity policy {text!r} must combine one of sharing-allowed/no-sharing "
                "with one of all-busy/empties-allowed"
            )
        return cls(sharing=sharing, all_busy=busy)

    def __str__(self) -> str:
        return ("sharing-allowed" if self.sharing else "no-sharing") + "+" + (
            "all-busy" if self.all_busy else "empties-allowed"
        )


SHARING_ALL_BUSY = ValidityPolicy(sharing=True, all_busy=True)
NO_SHARING_EMPTIES = ValidityPolicy(sharing=False, all_busy=False)
NO_SHARING_ALL_BUSY = ValidityPolicy(sharing=False, all_busy=True)


def _set_key(s: frozenset) -> tuple:
    return (len(s), tuple(sorted(s)))


@dataclass(frozen=True)
class Allocation:
    """Which subtasks each agent performs; ``assignments[0]`` is the human's set."""

    assignments: tuple[frozenset[SubtaskId], ...]

    @classmethod
    def of(cls, *sets: Iterable[int]) -> "Allocation":
        return cls(tuple(frozenset(s) for s in sets))

    @property
    def n_agents(self) -> int:
        return len(self.assignments)

    @property
    def human(self) -> frozenset[SubtaskId]:
        return self.assignments[HUMAN]

    def subtasks_of(self, agent: AgentId) -> frozenset[SubtaskId]:
        return self.assignments[agent]

    def counts(self) -> list[int]:
        return [len(s) for s in self.assignments]

    def covered(self) -> frozenset[SubtaskId]:
        return frozenset().union(*self.assignments)

    def sort_key(self) -> tuple:
        # Shortlex per agent, agents in index order: smaller sets sort first.
        return tuple(_set_key(s) for s in self.assignments)

    def label(self, subtask_labels: Sequence[str] | None = None) -> str:
        """Compact text form, e.g. ``1|0+2|-`` (agents separated by ``|``)."""
        parts = []
        for s in self.assignments:
            if not s:
                parts.append("-")
            elif subtask_labels is None:
                parts.append("+".join(str(k) for k in sorted(s)))
            else:
                parts.append("+".join(subtask_labels[k] for k in sorted(s)))
        return "|".join(parts)

    def is_valid(self, n_subtasks: int, policy: ValidityPolicy) -> bool:
        if self.covered() != frozenset(range(n_subtasks)):
            return False
        if any(k < 0 or k >= n_subtasks for s in self.assignments for k in s):
            return False
        if not policy.sharing and sum(len(s) for s in self.assignments) != n_subtasks:
            return False
        if policy.all_busy and any(not s for s in self.assignments):
            return False
        return True


def count_allocations(n_agents: int, n_subtasks: int, policy: ValidityPolicy) -> int:
    """Size of Θ by inclusion-exclusion over agents left idle."""
    n, t = n_agents, n_subtasks
    if policy.sharing:
        per_subtask = lambda m: (2**m - 1) ** t  # noqa: E731
    else:
        per_subtask = lambda m: m**t  # noqa: E731
    if not policy.all_busy:
        return per_subtask(n)
    return sum((-1) ** k * math.comb(n, k) * per_subtask(n - k) for k in range(n + 1))


def enumerate_allocations(scenario) -> list[Allocation]:
    """All allocations valid under the scenario's policy, in canonical order.

    ``scenario`` needs ``n_agents``, ``n_subtasks`` and ``policy`` attributes.
    """
    n, t, policy = scenario.n_agents, scenario.n_subtasks, scenario.policy
    if n < 1 or t < 1:
        raise SizeError("need at least 1 agent and 1 subtask")
    if t > MAX_SUBTASKS:
        raise SizeError(f"{t} subtasks exceeds the limit of {MAX_SUBTASKS}")
    if n > MAX_AGENTS:
        raise SizeError(f"{n} agents exceeds the limit of {MAX_AGENTS}")
    total = count_allocations(n, t, policy)
    if total > MAX_ALLOCATIONS:
        raise SizeError(f"{total} allocations exceeds the limit of {MAX_ALLOCATIONS}")

    if policy.sharing:
        # each subtask goes to a nonempty subset of agents
        holders = [c for r in range(1, n + 1) for c in itertools.combinations(range(n), r)]
    else:
        holders = [(i,) for i in range(n)]
    out = []
    for choice in itertools.product(holders, repeat=t):
        sets: list[set[int]] = [set() for _ in range(n)]
        for task, agents in enumerate(choice):
            for i in agents:
                sets[i].add(task)
        alloc = Allocation(tuple(frozenset(s) for s in sets))
        if policy.all_busy and any(not s for s in sets):
            continue
        out.append(alloc)
    out.sort(key=Allocation.sort_key)
    return out


def human_equivalence_class(theta: Allocation, allocations: Sequence[Allocation]) -> list[Allocation]:
    """Every allocation in ``allocations`` that gives the human the same subtasks as ``theta``."""
    if theta not in allocations:
        raise MembershipError(f"allocation {theta.label()} is not in the allocation set")
    return [a for a in allocations if a.human == theta.human]


def human_classes(allocations: Sequence[Allocation]) -> tuple[np.ndarray, list[int]]:
    """Class id per allocation and the representative (lowest) index of each class.

    Class ids are numbered in order of first appearance, so representatives are increasing.
    """
    ids: dict[frozenset, int] = {}
    class_of = np.empty(len(allocations), dtype=np.intp)
    reps: list[int] = []
    for j, a in enumerate(allocations):
        if a.human not in ids:
            ids[a.human] = len(reps)
            reps.append(j)
        class_of[j] = ids[a.human]
    return class_of, reps


@dataclass(frozen=True)
class JointState:
    """Positions of all agents plus, per agent, the target indices it has stood on so far."""

    positions: tuple[Position, ...]
    step: int = 0
    visited: tuple[frozenset[SubtaskId], ...] = ()

    @property
    def n_agents(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[tuple[JointState, JointAction], ...]
    terminal: JointState

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> list[JointState]:
        return [s for s, _ in self.steps] + [self.terminal]

    @property
    def actions(self) -> list[JointAction]:
        return [a for _, a in self.steps]

    @property
    def initial(self) -> JointState:
        return self.steps[0][0] if self.steps else self.terminal

    def prefix(self, t: int) -> "Trajectory":
        if not 0 <= t <= len(self):
            raise ValueError(f"prefix length {t} outside 0..{len(self)}")
        return Trajectory(self.steps[:t], self.states[t])

    def agent_positions(self, agent: AgentId) -> np.ndarray:
        return np.array([s.positions[agent] for s in self.states], dtype=float)


@dataclass(frozen=True)
class ObserverConfig:
    """Boltzmann observer settings.

    ``prior`` is indexed like the canonical allocation list; ``None`` means uniform.
    """

    prior: tuple[float, ...] | None = None
    beta: float = 1.0
    gamma: float = 0.9
    include_human: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be positive, got {self.beta}")
        if not 0 <= self.gamma < 1:
            raise ConfigurationError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.prior is not None:
            p = np.asarray(self.prior, dtype=float)
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
                raise ConfigurationError("prior must be nonnegative and sum to 1")

    def prior_vector(self, n: int) -> np.ndarray:
        if self.prior is None:
            return np.full(n, 1.0 / n)
        if len(self.prior) != n:
            raise ConfigurationError(f"prior has {len(self.prior)} entries, allocation set has {n}")
        return np.asarray(self.prior, dtype=float)


class FairnessKind(enum.Enum):
    ALLOCATION = "allocation"
    EFFORT = "effort"


class ObjectiveKind(enum.Enum):
    EFFICIENT = "efficient"
    LEGIBLE_WATCH = "legible-watch"
    LEGIBLE_PLAY = "legible-play"
    FAIR_LEGIBLE_WATCH = "fair-legible-watch"
    FAIR_LEGIBLE_PLAY = "fair-legible-play"

    @property
    def is_fair(self) -> bool:
        return self in (ObjectiveKind.FAIR_LEGIBLE_WATCH, ObjectiveKind.FAIR_LEGIBLE_PLAY)

    @property
    def is_play(self) -> bool:
        return self in (ObjectiveKind.LEGIBLE_PLAY, ObjectiveKind.FAIR_LEGIBLE_PLAY)


class Mode(enum.Enum):
    WATCH = "watch"
    PLAY = "play"


@dataclass(frozen=True)
class Objective:
    kind: ObjectiveKind
    fairness: FairnessKind | None = None
    lam: float = 1.0
    prefix_weighted: bool = False

    def __post_init__(self):
        if self.kind.is_fair != (self.fairness is not None):
            raise ConfigurationError(
                f"{self.kind.value} {'requires' if self.kind.is_fair else 'does not take'} a fairness kind"
            )
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be non-negative, got {self.lam}")

    @property
    def mode(self) -> Mode:
        return Mode.PLAY if self.kind.is_play else Mode.WATCH

    @property
    def name(self) -> str:
        if self.fairness is None:
            return self.kind.value
        return f"{self.kind.value}-{self.fairness.value}"


def make_objective(name: str, fairness: str | FairnessKind | None = None, lam: float = 1.0,
                   prefix_weighted: bool = False) -> Objective:
    kind = ObjectiveKind(name)
    if isinstance(fairness, str):
        fairness = FairnessKind(fairness)
    return Objective(kind, fairness if kind.is_fair else None, lam, prefix_weighted)


@dataclass(frozen=True)
class PosteriorTrace:
    """Posterior over the canonical allocation list for every prefix length 0..T."""

    allocations: tuple[Allocation, ...]
    probs: np.ndarray = field(compare=False)

    def __post_init__(self):
        self.probs.setflags(write=False)

    def __len__(self) -> int:
        return self.probs.shape[0]

    def row(self, t: int) -> np.ndarray:
        return self.probs[t]
