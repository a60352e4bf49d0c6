"""Generator for the bundled 12-scenario suite (6 pursuit-evasion, 6 grid kitchens).

The YAML files under ``legible_teams/scenarios`` are written by
:func:`write_bundled` and must stay in sync with :func:`bundled_scenarios`.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .domain import NO_SHARING_EMPTIES, SHARING_ALL_BUSY
from .environments import EnvKind, Scenario

PE = EnvKind.PURSUIT_EVASION
GK = EnvKind.GRID_KITCHEN

BALLS = ("ball-1", "ball-2", "ball-3")


def _pe(id_, starts, targets, labels, tags, policy=SHARING_ALL_BUSY, bounds=((0.0, 10.0), (0.0, 6.0))):
    return Scenario(id_, PE, starts, targets, bounds, horizon=30, labels=labels, step_size=1.0,
                    policy=policy, tags=tags)


def _gk(id_, starts, targets, labels, obstacles, tags, bounds=((0, 8), (0, 6))):
    return Scenario(id_, GK, starts, targets, bounds, horizon=40, labels=labels, obstacles=obstacles,
                    policy=NO_SHARING_EMPTIES, tags=tags)


def _counter(x, ys):
    return tuple((x, y) for y in ys)


def bundled_scenarios() -> list[Scenario]:
    # Table-clearing analogs: human sits at the bottom edge, two arms reach from the top corners.
    # Balls are picked up once, and an agent may get none (no sharing, empties allowed).
    table = ((5.0, 0.0), (1.0, 6.0), (9.0, 6.0))
    return [
        _pe("pe-three-ball-uneven", table, ((2.0, 3.0), (6.5, 3.0), (8.0, 3.0)), BALLS,
            ("asymmetric", "three-ball"), NO_SHARING_EMPTIES),
        _pe("pe-three-ball-even", table, ((2.0, 3.0), (5.0, 3.0), (8.0, 3.0)), BALLS,
            ("symmetric", "three-ball"), NO_SHARING_EMPTIES),
        _pe("pe-two-target-mirror", ((5.0, 0.0), (2.0, 6.0), (8.0, 6.0)), ((3.0, 3.0), (7.0, 3.0)),
            ("west", "east"), ("symmetric",)),
        _pe("pe-lane-staggered", ((0.0, 0.0), (0.0, 3.0), (0.0, 5.0)), ((4.0, 3.5), (9.0, 4.0), (7.0, 1.0)),
            ("near", "far", "low"), ("asymmetric",)),
        _pe("pe-pursuit-cluster", ((5.0, 0.0), (1.0, 1.0), (9.0, 5.0)), ((3.0, 4.0), (4.0, 5.0), (8.0, 2.0)),
            ("red", "green", "blue"), ("asymmetric",)),
        _pe("pe-duo-mirror", ((5.0, 0.0), (5.0, 6.0)), ((2.0, 3.0), (8.0, 3.0)),
            ("left", "right"), ("symmetric",)),
        _gk("kitchen-salad", ((0, 0), (0, 6), (8, 6)), ((2, 4), (6, 4), (4, 1), (8, 2)),
            ("lettuce", "tomato", "board", "plate"), _counter(4, (3, 4, 5)), ("asymmetric",)),
        _gk("kitchen-open-mirror", ((4, 0), (0, 6), (8, 6)), ((1, 3), (4, 4), (7, 3)),
            ("lettuce", "board", "tomato"), (), ("symmetric",)),
        _gk("kitchen-open-offset", ((1, 0), (0, 5), (7, 6)), ((3, 3), (5, 2), (8, 5)),
            ("lettuce", "tomato", "plate"), (), ("asymmetric",)),
        _gk("kitchen-island-mirror", ((4, 0), (0, 6), (8, 6)), ((2, 3), (6, 3), (4, 6)),
            ("lettuce", "tomato", "plate"), ((3, 3), (4, 3), (5, 3), (4, 2), (4, 4)), ("symmetric",)),
        _gk("kitchen-duo-mirror", ((4, 0), (4, 6)), ((1, 3), (7, 3), (4, 3)),
            ("lettuce", "tomato", "board"), (), ("symmetric",)),
        _gk("kitchen-wall-detour", ((0, 0), (0, 6), (8, 0)), ((2, 5), (6, 5), (7, 2)),
            ("lettuce", "tomato", "plate"), _counter(4, (0, 1, 2, 3, 4)), ("asymmetric",)),
    ]


def bundled_dir() -> Path:
    return Path(str(resources.files("legible_teams") / "scenarios"))


def write_bundled(directory) -> list[Path]:
    from .scenario_io import dump_scenario

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for sc in bundled_scenarios():
        p = directory / f"{sc.id}.yaml"
        p.write_text(dump_scenario(sc))
        out.append(p)
    return out
