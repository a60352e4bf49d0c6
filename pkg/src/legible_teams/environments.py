"""Environment dynamics and goal geometry.

Two environments share one interface:

* ``pursuit-evasion``: continuous plane, each agent moves by a displacement of
  length at most ``step_size`` and is clipped to the workspace rectangle.
* ``grid-kitchen``: integer cells, each agent moves one cell in a compass
  direction or stays; moves into obstacles or off the grid resolve to stay.

Cost-to-go for an agent is the length of the shortest tour that starts at its
position and visits every assigned target it has not stood on yet (Euclidean in
the plane, breadth-first path length on the grid). Tours are solved exactly by
dynamic programming over target subsets.
"""

from __future__ import annotations

import enum
import functools
import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .domain import (
    NO_SHARING_EMPTIES,
    SHARING_ALL_BUSY,
    Allocation,
    JointAction,
    JointState,
    Position,
    ValidityPolicy,
)
from .errors import ConfigurationError, InfeasibleError, StructuralError

TARGET_TOL = 1e-6

GRID_ACTIONS: dict[str, tuple[int, int]] = {
    "up": (0, 1),
    "down": (0, -1),
    "left": (-1, 0),
    "right": (1, 0),
    "stay": (0, 0),
}
GRID_ACTION_NAMES = {v: k for k, v in GRID_ACTIONS.items()}


class EnvKind(enum.Enum):
    PURSUIT_EVASION = "pursuit-evasion"
    GRID_KITCHEN = "grid-kitchen"

    @property
    def continuous(self) -> bool:
        return self is EnvKind.PURSUIT_EVASION

    @property
    def default_policy(self) -> ValidityPolicy:
        return SHARING_ALL_BUSY if self.continuous else NO_SHARING_EMPTIES


def _cell_coord(c) -> int:
    if isinstance(c, bool) or float(c) != int(c):
        raise ValueError(f"grid coordinate {c!r} is not an integer")
    return int(c)


@dataclass(frozen=True)
class Scenario:
    id: str
    kind: EnvKind
    starts: tuple[Position, ...]
    targets: tuple[Position, ...]
    bounds: tuple[tuple[float, float], tuple[float, float]]
    horizon: int
    labels: tuple[str, ...] = ()
    obstacles: tuple[Position, ...] = ()
    step_size: float | None = None
    policy: ValidityPolicy | None = None
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        set_ = functools.partial(object.__setattr__, self)
        num = float if self.kind.continuous else _cell_coord
        try:
            set_("starts", tuple(tuple(num(c) for c in p) for p in self.starts))
            set_("targets", tuple(tuple(num(c) for c in p) for p in self.targets))
            set_("bounds", tuple(tuple(num(c) for c in r) for r in self.bounds))
            set_("obstacles", tuple(tuple(_cell_coord(c) for c in p) for p in self.obstacles))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"non-numeric coordinate: {exc}") from None
        if len(self.bounds) != 2 or any(len(r) != 2 for r in self.bounds):
            raise ConfigurationError("bounds must be [[xmin, xmax], [ymin, ymax]]")
        set_("labels", tuple(self.labels))
        set_("tags", tuple(self.tags))
        if self.policy is None:
            set_("policy", self.kind.default_policy)
        if not self.labels:
            set_("labels", tuple(f"t{k}" for k in range(len(self.targets))))
        if len(self.labels) != len(self.targets):
            raise ConfigurationError("one label per subtask target required")
        if not self.starts:
            raise ConfigurationError("scenario needs at least one agent")
        if not self.targets:
            raise ConfigurationError("scenario needs at least one subtask")
        if self.horizon < 0:
            raise ConfigurationError("horizon must be non-negative")
        (x0, x1), (y0, y1) = self.bounds
        if not (x0 <= x1 and y0 <= y1):
            raise ConfigurationError(f"empty workspace bounds {self.bounds}")
        if self.kind.continuous:
            if self.step_size is None or not self.step_size > 0:
                raise ConfigurationError("pursuit-evasion needs a positive step_size")
            if self.obstacles:
                raise ConfigurationError("pursuit-evasion does not support obstacles")
        else:
            if self.step_size is not None:
                raise ConfigurationError("grid-kitchen does not take a step_size")
            set_("obstacles", tuple(sorted(set(map(tuple, self.obstacles)))))
        for what, pts in (("start", self.starts), ("target", self.targets)):
            for k, p in enumerate(pts):
                if len(p) != 2:
                    raise ConfigurationError(f"{what} {k} must be a 2-vector")
                if not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                    raise ConfigurationError(f"{what} {k} at {tuple(p)} lies outside the workspace")
                if tuple(p) in self.obstacles:
                    raise ConfigurationError(f"{what} {k} at {tuple(p)} lies on an obstacle")

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    @property
    def n_subtasks(self) -> int:
        return len(self.targets)

    @property
    def obstacle_free(self) -> bool:
        return not self.obstacles


def continuous_action_grid(step: float) -> np.ndarray:
    """Zero, then 16 compass headings at full and at half step length (33 actions)."""
    ang = np.arange(16) * (2 * np.pi / 16)
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # cos/sin leave ~1e-17 residue on the axes; zero it so axis moves are exact
    ring[np.abs(ring) < 1e-12] = 0.0
    return np.concatenate([np.zeros((1, 2)), step * ring, 0.5 * step * ring])


class Geometry:
    """Precomputed distance tables for one scenario. Immutable after construction."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.continuous = scenario.kind.continuous
        self.targets = np.array(scenario.targets, dtype=float if self.continuous else np.int64)
        self.n = len(self.targets)
        (self.x0, self.x1), (self.y0, self.y1) = scenario.bounds
        if self.continuous:
            self.step = float(scenario.step_size)
            self.actions = continuous_action_grid(self.step)
            diff = self.targets[:, None, :] - self.targets[None, :, :]
            tt = np.sqrt((diff**2).sum(-1))
        else:
            self.actions = np.array(list(GRID_ACTIONS.values()), dtype=np.int64)
            w, h = int(self.x1 - self.x0 + 1), int(self.y1 - self.y0 + 1)
            self.free = np.ones((w, h), dtype=bool)
            for ox, oy in scenario.obstacles:
                if self.x0 <= ox <= self.x1 and self.y0 <= oy <= self.y1:
                    self.free[ox - self.x0, oy - self.y0] = False
            self.fields = np.stack([self._bfs(tuple(t)) for t in self.targets])
            tt = self.dist(self.targets)  # (n, n)
        self.tt = tt
        self.best_len = _tour_table(tt)
        self.tt_steps = self.leg_steps(tt)
        self.best_steps = _tour_table(self.tt_steps)

    def _bfs(self, src) -> np.ndarray:
        w, h = self.free.shape
        dist = np.full((w, h), np.inf)
        sx, sy = src[0] - self.x0, src[1] - self.y0
        dist[sx, sy] = 0
        queue = deque([(sx, sy)])
        while queue:
            x, y = queue.popleft()
            for dx, dy in ((0, 1), (0, -1), (-1, 0), (1, 0)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and self.free[nx, ny] and dist[nx, ny] == np.inf:
                    dist[nx, ny] = dist[x, y] + 1
                    queue.append((nx, ny))
        return dist

    def dist(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to each target, shape ``points.shape[:-1] + (n,)``."""
        points = np.asarray(points)
        if self.continuous:
            diff = points[..., None, :] - self.targets
            return np.sqrt((diff**2).sum(-1))
        ix = points[..., 0].astype(np.int64) - int(self.x0)
        iy = points[..., 1].astype(np.int64) - int(self.y0)
        return np.moveaxis(self.fields[:, ix, iy], 0, -1)

    def leg_steps(self, d):
        """Fewest moves to cover a straight leg of length ``d`` and land on its end."""
        if self.continuous:
            return np.ceil(np.asarray(d) / self.step - 1e-9).clip(min=0)
        return np.asarray(d, dtype=float)

    def move(self, points: np.ndarray, actions: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        nxt = points + actions
        if self.continuous:
            nxt = np.stack(
                [nxt[..., 0].clip(self.x0, self.x1), nxt[..., 1].clip(self.y0, self.y1)], axis=-1
            )
            return nxt
        x, y = nxt[..., 0], nxt[..., 1]
        inside = (x >= self.x0) & (x <= self.x1) & (y >= self.y0) & (y <= self.y1)
        ok = inside.copy()
        ix = np.where(inside, x - int(self.x0), 0)
        iy = np.where(inside, y - int(self.y0), 0)
        ok &= self.free[ix, iy]
        return np.where(ok[..., None], nxt, points)

    def hits(self, points: np.ndarray) -> np.ndarray:
        """Bitmask of targets each point stands on."""
        points = np.asarray(points)
        if self.continuous:
            diff = points[..., None, :] - self.targets
            on = np.sqrt((diff**2).sum(-1)) <= TARGET_TOL
        else:
            on = (points[..., None, :] == self.targets).all(-1)
        return (on * (1 << np.arange(self.n))).sum(-1).astype(np.int64)

    def _to_go(self, points, masks, table, legs) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        d = legs(self.dist(points))
        out = (d + table[masks]).min(-1)
        return np.where(masks == 0, 0.0, out)

    def cost_to_go(self, points, masks) -> np.ndarray:
        """Shortest tour length from each point through the targets in ``masks``."""
        return self._to_go(points, masks, self.best_len, lambda d: d)

    def steps_to_go(self, points, masks) -> np.ndarray:
        return self._to_go(points, masks, self.best_steps, self.leg_steps)

    def snap(self, actions: np.ndarray) -> np.ndarray:
        """Index of the nearest candidate action for each observed action."""
        actions = np.asarray(actions, dtype=float)
        d = ((actions[..., None, :] - self.actions) ** 2).sum(-1)
        idx = d.argmin(-1)
        if not self.continuous and np.any(d.min(-1) > 0):
            raise StructuralError("grid action is not one of up/down/left/right/stay")
        return idx

    def unreachable_subtask(self, point, mask: int) -> int | None:
        d = self.dist(np.asarray(point))
        for k in range(self.n):
            if mask >> k & 1 and not np.isfinite(d[k]):
                return k
        if np.isinf(self.best_len[mask]).all() and mask:
            return next(k for k in range(self.n) if mask >> k & 1)
        return None


def _tour_table(tt: np.ndarray) -> np.ndarray:
    """``best[mask, f]``: shortest path that starts at target f and visits all of mask."""
    n = tt.shape[0]
    best = np.full((1 << n, n), np.inf)
    for f in range(n):
        best[1 << f, f] = 0.0
    for mask in range(1, 1 << n):
        members = [f for f in range(n) if mask >> f & 1]
        if len(members) < 2:
            continue
        for f in members:
            rest = mask ^ (1 << f)
            best[mask, f] = min(tt[f, g] + best[rest, g] for g in members if g != f)
    return best


@functools.lru_cache(maxsize=64)
def geometry(scenario: Scenario) -> Geometry:
    return Geometry(scenario)


def to_mask(subtasks) -> int:
    m = 0
    for k in subtasks:
        m |= 1 << k
    return m


def from_mask(mask: int) -> frozenset[int]:
    return frozenset(k for k in range(mask.bit_length()) if mask >> k & 1)


def initial_state(scenario: Scenario) -> JointState:
    geo = geometry(scenario)
    hits = geo.hits(np.array(scenario.starts))
    return JointState(tuple(tuple(p) for p in scenario.starts), 0, tuple(from_mask(int(h)) for h in hits))


def _as_position(p, continuous: bool) -> tuple:
    return (float(p[0]), float(p[1])) if continuous else (int(p[0]), int(p[1]))


def check_action(scenario: Scenario, action) -> None:
    """Raise StructuralError if a single agent's action violates the action bounds."""
    if len(action) != 2:
        raise StructuralError(f"action {action!r} is not a 2-vector")
    if scenario.kind.continuous:
        norm = float(np.hypot(*action))
        if norm > scenario.step_size * (1 + 1e-9):
            raise StructuralError(
                f"action {tuple(action)} has magnitude {norm:.6g} above the step bound {scenario.step_size}"
            )
    elif tuple(action) not in GRID_ACTION_NAMES:
        raise StructuralError(f"action {tuple(action)} is not a grid move")


def transition(scenario: Scenario, s: JointState, a: JointAction) -> JointState:
    if len(a) != s.n_agents or s.n_agents != scenario.n_agents:
        raise StructuralError(
            f"joint action has {len(a)} entries, state has {s.n_agents}, scenario has {scenario.n_agents} agents"
        )
    geo = geometry(scenario)
    acts = np.array(a, dtype=float)
    if scenario.kind.continuous:
        norms = np.hypot(acts[:, 0], acts[:, 1])
        over = norms > geo.step
        acts[over] *= (geo.step / norms[over])[:, None]
    else:
        for act in a:
            check_action(scenario, act)
        acts = acts.astype(np.int64)
    pts = np.array(s.positions, dtype=acts.dtype)
    nxt = geo.move(pts, acts)
    hits = geo.hits(nxt)
    visited = s.visited or tuple(frozenset() for _ in range(s.n_agents))
    return JointState(
        tuple(_as_position(p, geo.continuous) for p in nxt),
        s.step + 1,
        tuple(v | from_mask(int(h)) for v, h in zip(visited, hits)),
    )


def _remaining(theta: Allocation, s: JointState) -> list[int]:
    visited = s.visited or tuple(frozenset() for _ in range(s.n_agents))
    return [to_mask(theta.assignments[i] - visited[i]) for i in range(s.n_agents)]


def _check_finite(geo: Geometry, s: JointState, masks: list[int], values: np.ndarray) -> None:
    for i, v in enumerate(values):
        if not np.isfinite(v):
            k = geo.unreachable_subtask(np.array(s.positions[i]), masks[i])
            label = geo.scenario.labels[k] if k is not None else "?"
            raise InfeasibleError(f"agent {i} cannot reach subtask {k} ({label})")


def cost_to_go(scenario: Scenario, theta: Allocation, s: JointState) -> np.ndarray:
    """Per-agent remaining tour length under ``theta`` from ``s``."""
    geo = geometry(scenario)
    masks = _remaining(theta, s)
    vals = geo.cost_to_go(np.array(s.positions), masks)
    _check_finite(geo, s, masks, vals)
    return vals


def q_value(scenario: Scenario, theta: Allocation, s: JointState, a: JointAction) -> float:
    """Negative total cost-to-go of the state reached by taking ``a`` in ``s``."""
    return -float(cost_to_go(scenario, theta, transition(scenario, s, a)).sum())


def completion_steps(scenario: Scenario, theta: Allocation, s: JointState) -> int:
    """Fewest steps for the team to finish ``theta``; agents move in parallel."""
    geo = geometry(scenario)
    masks = _remaining(theta, s)
    steps = geo.steps_to_go(np.array(s.positions), masks)
    _check_finite(geo, s, masks, steps)
    return int(steps.max())


def value(scenario: Scenario, theta: Allocation, s: JointState, gamma: float = 0.9) -> float:
    """Discounted sparse completion reward: ``gamma ** completion_steps``."""
    return float(gamma ** completion_steps(scenario, theta, s))


def is_complete(scenario: Scenario, theta: Allocation, s: JointState) -> bool:
    visited = s.visited or tuple(frozenset() for _ in range(s.n_agents))
    return all(theta.assignments[i] <= visited[i] for i in range(scenario.n_agents))


def agent_candidate_q(
    scenario: Scenario,
    positions: np.ndarray,
    visited: np.ndarray,
    hypotheses: np.ndarray,
    actions: np.ndarray | None = None,
) -> np.ndarray:
    """Q of every candidate action for one agent at each of ``T`` states.

    ``positions`` is ``(T, 2)``, ``visited`` the agent's visited-target mask at each
    state, ``hypotheses`` a vector of ``H`` assigned-subtask masks. Returns
    ``(T, H, C)`` with ``C`` the size of the action grid (the environment's
    default grid unless ``actions`` is given).
    """
    geo = geometry(scenario)
    grid = geo.actions if actions is None else np.asarray(actions, dtype=geo.actions.dtype)
    positions = np.asarray(positions, dtype=grid.dtype)
    cand = geo.move(positions[:, None, :], grid[None, :, :])  # (T, C, 2)
    seen = np.asarray(visited, dtype=np.int64)[:, None] | geo.hits(cand)  # (T, C)
    remaining = np.asarray(hypotheses, dtype=np.int64)[None, :, None] & ~seen[:, None, :]  # (T, H, C)
    d = geo.dist(cand)[:, None, :, :]  # (T, 1, C, n)
    cost = (d + geo.best_len[remaining]).min(-1)
    cost = np.where(remaining == 0, 0.0, cost)
    return -cost


def optimal_order(scenario: Scenario, start, subtasks) -> tuple[int, ...]:
    """Visiting order with the fewest steps (ties: shorter tour, then lexicographic)."""
    geo = geometry(scenario)
    ks = sorted(subtasks)
    if not ks:
        return ()
    d0 = geo.dist(np.asarray(start))
    best = None
    for perm in itertools.permutations(ks):
        steps = geo.leg_steps(d0[perm[0]]) + sum(geo.tt_steps[a, b] for a, b in zip(perm, perm[1:]))
        length = d0[perm[0]] + sum(geo.tt[a, b] for a, b in zip(perm, perm[1:]))
        key = (float(steps), round(float(length), 9), perm)
        if best is None or key < best:
            best = key
    if not np.isfinite(best[0]):
        k = geo.unreachable_subtask(np.asarray(start), to_mask(ks))
        raise InfeasibleError(f"subtask {k} ({scenario.labels[k]}) is unreachable")
    return best[2]


@functools.lru_cache(maxsize=1024)
def _distance_field(scenario: Scenario, dst: tuple[int, int]) -> np.ndarray:
    return geometry(scenario)._bfs(dst)


def shortest_grid_path(scenario: Scenario, src, dst) -> list[tuple[int, int]]:
    """Deterministic breadth-first path from ``src`` to ``dst`` (inclusive of both ends).

    Ties between equally short moves go to the first move in up/down/left/right order.
    """
    geo = geometry(scenario)
    src, dst = tuple(int(c) for c in src), tuple(int(c) for c in dst)
    field = _distance_field(scenario, dst)
    x0, y0 = int(geo.x0), int(geo.y0)
    if not np.isfinite(field[src[0] - x0, src[1] - y0]):
        raise InfeasibleError(f"cell {dst} is unreachable from {src}")
    path = [src]
    cur = src
    moves = [m for name, m in GRID_ACTIONS.items() if name != "stay"]
    while cur != dst:
        here = field[cur[0] - x0, cur[1] - y0]
        for dx, dy in moves:
            nx, ny = cur[0] + dx, cur[1] + dy
            if (geo.x0 <= nx <= geo.x1 and geo.y0 <= ny <= geo.y1
                    and field[nx - x0, ny - y0] == here - 1):
                cur = (nx, ny)
                break
        path.append(cur)
    return path
