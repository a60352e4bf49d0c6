"""YAML scenario and trajectory documents.

Scenario schema (unknown keys are rejected with their line number)::

    id: pe-three-ball-uneven        # optional, defaults to the file stem
    kind: pursuit-evasion           # or grid-kitchen
    tags: [asymmetric]              # optional free-form labels
    bounds: [[0, 10], [0, 6]]       # [[xmin, xmax], [ymin, ymax]], inclusive cells on a grid
    agents:                         # start positions; the first agent is the human
      - [5.0, 0.0]
      - [1.0, 6.0]
    subtasks:
      - {label: ball-1, target: [2.0, 3.0]}
    obstacles: [[3, 1], [3, 2]]     # grid-kitchen only
    step_size: 1.0                  # pursuit-evasion only
    horizon: 30
    validity_policy: sharing-allowed+all-busy   # optional, defaults by kind

Trajectory schema: ``actions`` is a list with one joint action per step; each
agent's action is ``[dx, dy]`` or, on a grid, one of up/down/left/right/stay.
An optional ``states`` list of joint positions (one more entry than
``actions``) is checked against the dynamics.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .domain import JointState, Trajectory, ValidityPolicy
from .environments import GRID_ACTIONS, EnvKind, Scenario, check_action, initial_state, transition
from .errors import LegibleTeamsError, ScenarioParseError, StructuralError

SCENARIO_KEYS = {
    "id", "kind", "tags", "bounds", "agents", "subtasks", "obstacles", "step_size", "horizon", "validity_policy",
}
REQUIRED_KEYS = {"kind", "bounds", "agents", "subtasks", "horizon"}
SUBTASK_KEYS = {"label", "target"}


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths (``("subtasks", 0, "label")``) to 1-based line numbers."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _line_index(v, path + (key,), out)
            out[path + (key,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Doc:
    def __init__(self, text: str, source: str | None):
        self.source = source
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ScenarioParseError(
                f"invalid YAML: {getattr(exc, 'problem', exc)}", source, mark.line + 1 if mark else None
            ) from None
        self.lines = _line_index(node) if node is not None else {}

    def fail(self, message: str, *path):
        while path and path not in self.lines:
            path = path[:-1]
        raise ScenarioParseError(message, self.source, self.lines.get(path))


def _point(doc: _Doc, value, *path) -> list:
    if not isinstance(value, (list, tuple)) or len(value) != 2 or not all(
        isinstance(c, (int, float)) and not isinstance(c, bool) for c in value
    ):
        doc.fail(f"expected a 2-element numeric list, got {value!r}", *path)
    return list(value)


def parse_scenario(text: str, source: str | None = None, default_id: str = "scenario") -> Scenario:
    doc = _Doc(text, source)
    data = doc.data
    if not isinstance(data, dict):
        doc.fail("scenario document must be a mapping")
    for key in data:
        if key not in SCENARIO_KEYS:
            doc.fail(f"unknown field {key!r}", key)
    for key in sorted(REQUIRED_KEYS - set(data)):
        doc.fail(f"missing required field {key!r}")

    try:
        kind = EnvKind(data["kind"])
    except ValueError:
        doc.fail(f"kind must be one of {[k.value for k in EnvKind]}, got {data['kind']!r}", "kind")

    bounds = data["bounds"]
    if not isinstance(bounds, list) or len(bounds) != 2:
        doc.fail("bounds must be [[xmin, xmax], [ymin, ymax]]", "bounds")
    bounds = [_point(doc, r, "bounds", i) for i, r in enumerate(bounds)]

    agents = data["agents"]
    if not isinstance(agents, list) or not agents:
        doc.fail("agents must be a nonempty list of start positions", "agents")
    starts = [_point(doc, p, "agents", i) for i, p in enumerate(agents)]

    subtasks = data["subtasks"]
    if not isinstance(subtasks, list) or not subtasks:
        doc.fail("subtasks must be a nonempty list", "subtasks")
    labels, targets = [], []
    for i, st in enumerate(subtasks):
        if not isinstance(st, dict):
            doc.fail("each subtask must be a mapping with label and target", "subtasks", i)
        for key in st:
            if key not in SUBTASK_KEYS:
                doc.fail(f"unknown subtask field {key!r}", "subtasks", i, key)
        if "target" not in st:
            doc.fail("subtask is missing its target", "subtasks", i)
        labels.append(str(st.get("label", f"t{i}")))
        targets.append(_point(doc, st["target"], "subtasks", i, "target"))

    obstacles = data.get("obstacles") or []
    if not isinstance(obstacles, list):
        doc.fail("obstacles must be a list of cells", "obstacles")
    obstacles = [_point(doc, c, "obstacles", i) for i, c in enumerate(obstacles)]

    horizon = data["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0:
        doc.fail(f"horizon must be a non-negative integer, got {horizon!r}", "horizon")

    step = data.get("step_size")
    if step is not None and (not isinstance(step, (int, float)) or isinstance(step, bool)):
        doc.fail(f"step_size must be a number, got {step!r}", "step_size")

    policy = None
    if data.get("validity_policy") is not None:
        try:
            policy = ValidityPolicy.parse(str(data["validity_policy"]))
        except ValueError as exc:
            doc.fail(str(exc), "validity_policy")

    tags = data.get("tags") or []
    if not isinstance(tags, list):
        doc.fail("tags must be a list", "tags")

    try:
        return Scenario(
            id=str(data.get("id", default_id)),
            kind=kind,
            starts=tuple(map(tuple, starts)),
            targets=tuple(map(tuple, targets)),
            bounds=tuple(map(tuple, bounds)),
            horizon=horizon,
            labels=tuple(labels),
            obstacles=tuple(map(tuple, obstacles)),
            step_size=None if step is None else float(step),
            policy=policy,
            tags=tuple(str(t) for t in tags),
        )
    except LegibleTeamsError as exc:
        doc.fail(str(exc))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path), default_id=path.stem)


def load_suite(directory) -> list[Scenario]:
    """Every ``*.yaml``/``*.yml`` scenario in ``directory``, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioParseError("not a directory", str(directory))
    files = sorted(p for p in directory.iterdir() if p.suffix in (".yaml", ".yml"))
    if not files:
        raise ScenarioParseError("no scenario files found", str(directory))
    return [load_scenario(p) for p in files]


class _FlowDumper(yaml.SafeDumper):
    pass


def _flow_list(dumper, data):
    flow = all(not isinstance(x, (list, dict)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_FlowDumper.add_representer(list, _flow_list)


def scenario_to_dict(scenario: Scenario) -> dict:
    d = {
        "id": scenario.id,
        "kind": scenario.kind.value,
        "tags": list(scenario.tags),
        "bounds": [list(r) for r in scenario.bounds],
        "agents": [list(p) for p in scenario.starts],
        "subtasks": [{"label": lab, "target": list(t)} for lab, t in zip(scenario.labels, scenario.targets)],
    }
    if scenario.obstacles:
        d["obstacles"] = [list(c) for c in scenario.obstacles]
    if scenario.step_size is not None:
        d["step_size"] = scenario.step_size
    d["horizon"] = scenario.horizon
    d["validity_policy"] = str(scenario.policy)
    return d


def dump_scenario(scenario: Scenario) -> str:
    return yaml.dump(scenario_to_dict(scenario), Dumper=_FlowDumper, sort_keys=False, default_flow_style=False)


def parse_trajectory(scenario: Scenario, text: str, source: str | None = None) -> Trajectory:
    """Build a trajectory from per-step joint actions, checking bounds and (optional) states."""
    doc = _Doc(text, source)
    data = doc.data
    if not isinstance(data, dict) or "actions" not in data:
        doc.fail("trajectory document must be a mapping with an 'actions' list")
    for key in data:
        if key not in ("actions", "states"):
            doc.fail(f"unknown field {key!r}", key)
    actions = data["actions"] or []
    if not isinstance(actions, list):
        doc.fail("actions must be a list of joint actions", "actions")
    states = data.get("states")
    if states is not None and (not isinstance(states, list) or len(states) != len(actions) + 1):
        doc.fail("states must list one joint position set more than there are actions", "states")

    s = initial_state(scenario)
    if states is not None:
        _check_positions(doc, scenario, s, states[0], 0)
    steps = []
    for t, joint in enumerate(actions):
        if not isinstance(joint, list) or len(joint) != scenario.n_agents:
            doc.fail(f"step {t}: expected {scenario.n_agents} agent actions", "actions", t)
        acts = []
        for i, a in enumerate(joint):
            if isinstance(a, str):
                if a not in GRID_ACTIONS or scenario.kind.continuous:
                    doc.fail(f"step {t}: unknown action {a!r} for agent {i}", "actions", t, i)
                a = GRID_ACTIONS[a]
            a = tuple(_point(doc, a, "actions", t, i))
            if not scenario.kind.continuous:
                a = tuple(int(c) for c in a)
            try:
                check_action(scenario, a)
            except StructuralError as exc:
                doc.fail(f"step {t}: agent {i}: {exc}", "actions", t, i)
            acts.append(a)
        a = tuple(acts)
        steps.append((s, a))
        s = transition(scenario, s, a)
        if states is not None:
            _check_positions(doc, scenario, s, states[t + 1], t + 1)
    return Trajectory(tuple(steps), s)


def _check_positions(doc: _Doc, scenario: Scenario, s: JointState, listed, t: int) -> None:
    if not isinstance(listed, list) or len(listed) != scenario.n_agents:
        doc.fail(f"state {t}: expected {scenario.n_agents} positions", "states", t)
    for i, p in enumerate(listed):
        p = _point(doc, p, "states", t, i)
        if max(abs(p[0] - s.positions[i][0]), abs(p[1] - s.positions[i][1])) > 1e-6:
            doc.fail(
                f"step {max(t - 1, 0)}: agent {i} listed at {tuple(p)} but the dynamics give {s.positions[i]}",
                "states", t, i,
            )


def load_trajectory(scenario: Scenario, path) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_trajectory(scenario, text, str(path))
