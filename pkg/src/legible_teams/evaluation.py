"""Simulated-observer prediction experiments.

Each planner's trajectory is cut at fixed fractions of its length; the MAP
observer predicts the allocation (watch) or the human's subtasks (play) from
each prefix and is scored against the planner's own choice.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .domain import FairnessKind, Mode, Objective, ObjectiveKind, ObserverConfig, make_objective
from .environments import Scenario
from .errors import LegibleTeamsError
from .observer import map_prediction, posterior_mass
from .planner import PlanResult, plan

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "scenario_id", "planner", "objective", "fairness_kind", "lambda", "snapshot_fraction",
    "predicted_correct", "posterior_mass", "sum_fairness", "completion_steps", "family_size",
)


@dataclass(frozen=True)
class SnapshotProtocol:
    fractions: tuple[float, ...] = (1 / 3, 2 / 3, 1.0)

    def __post_init__(self):
        f = self.fractions
        if not f or any(not 0 < x <= 1 for x in f) or any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError(f"snapshot fractions must be strictly increasing in (0, 1], got {f}")

    def cuts(self, length: int) -> list[int]:
        """Prefix length for each fraction of a ``length``-step trajectory."""
        return [min(length, math.ceil(x * length - 1e-9)) for x in self.fractions]


@dataclass
class Snapshot:
    fraction: float
    prefix: int
    predicted_correct: bool
    posterior_mass: float


@dataclass
class PlannerRecord:
    objective: Objective
    snapshots: list[Snapshot] = field(default_factory=list)
    fairness_kind: FairnessKind = FairnessKind.ALLOCATION
    sum_fairness: float = float("nan")
    completion_steps: int = 0
    family_size: int = 0
    result: PlanResult | None = None
    error: str | None = None

    @property
    def label(self) -> str:
        if self.objective.kind.is_fair:
            return f"{self.objective.name}-lambda{self.objective.lam:g}"
        return self.objective.name


@dataclass
class ComparisonReport:
    scenario_id: str
    records: list[PlannerRecord] = field(default_factory=list)
    tags: tuple[str, ...] = ()
    obstacle_free: bool = True

    def record(self, name: str) -> PlannerRecord:
        for r in self.records:
            if r.objective.name == name or r.label == name:
                return r
        raise KeyError(name)


def default_planners(fairness: FairnessKind | str = FairnessKind.ALLOCATION, lam: float = 1.0) -> list[Objective]:
    return [make_objective(k.value, fairness, lam) for k in ObjectiveKind]


def run_prediction_experiment(
    scenario: Scenario,
    planners: Sequence[Objective],
    protocol: SnapshotProtocol = SnapshotProtocol(),
    config: ObserverConfig = ObserverConfig(),
    seed: int = 0,
    *,
    efficient_mode: str = "argmax",
    report_fairness: FairnessKind = FairnessKind.ALLOCATION,
) -> ComparisonReport:
    report = ComparisonReport(scenario.id, tags=scenario.tags, obstacle_free=scenario.obstacle_free)
    for objective in planners:
        try:
            result = plan(scenario, objective, config, seed, efficient_mode=efficient_mode,
                          report_fairness=report_fairness)
        except LegibleTeamsError as exc:
            raise type(exc)(f"scenario {scenario.id}: {objective.name}: {exc}") from exc
        rec = PlannerRecord(
            objective,
            fairness_kind=result.fairness_kind,
            sum_fairness=float(sum(result.fairness)),
            completion_steps=result.completion_steps,
            family_size=result.family_size,
            result=result,
        )
        mode = objective.mode
        truth = result.allocation if mode is Mode.WATCH else result.allocation.human
        for frac, t in zip(protocol.fractions, protocol.cuts(result.completion_steps)):
            predicted = map_prediction(result.posterior, mode, t)
            rec.snapshots.append(
                Snapshot(frac, t, predicted == truth, posterior_mass(result.posterior, mode, t, result.allocation))
            )
        report.records.append(rec)
    return report


def run_suite(
    scenarios: Iterable[Scenario],
    planners: Sequence[Objective],
    protocol: SnapshotProtocol = SnapshotProtocol(),
    config: ObserverConfig = ObserverConfig(),
    seed: int = 0,
    *,
    efficient_mode: str = "argmax",
    report_fairness: FairnessKind = FairnessKind.ALLOCATION,
) -> list[ComparisonReport]:
    """Run every scenario in order; a failing scenario yields error records and the suite continues."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("empty scenario suite")
    reports = []
    for sc in scenarios:
        try:
            reports.append(run_prediction_experiment(sc, planners, protocol, config, seed,
                                                     efficient_mode=efficient_mode, report_fairness=report_fairness))
        except LegibleTeamsError as exc:
            logger.error("%s", exc)
            reports.append(ComparisonReport(
                sc.id, [PlannerRecord(p, error=str(exc)) for p in planners], sc.tags, sc.obstacle_free,
            ))
    return reports


def aggregate(reports: Sequence[ComparisonReport]) -> dict[str, dict[float, tuple[float, float]]]:
    """Per planner and fraction: (mean correctness, mean posterior mass) over successful runs."""
    acc: dict[str, dict[float, list]] = {}
    for rep in reports:
        for rec in rep.records:
            for snap in rec.snapshots:
                acc.setdefault(rec.label, {}).setdefault(snap.fraction, []).append(
                    (float(snap.predicted_correct), snap.posterior_mass)
                )
    return {
        name: {f: tuple(np.mean(v, axis=0).tolist()) for f, v in by_f.items()}
        for name, by_f in acc.items()
    }


def mean_accuracy(reports: Sequence[ComparisonReport], kinds: Sequence[ObjectiveKind], fraction_index: int) -> float:
    vals = [
        float(rec.snapshots[fraction_index].predicted_correct)
        for rep in reports for rec in rep.records
        if rec.objective.kind in kinds and rec.error is None
    ]
    return float(np.mean(vals)) if vals else float("nan")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_csv(reports: Sequence[ComparisonReport], stream=None) -> str:
    """Write the comparison table; returns the CSV text (also written to ``stream`` if given)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for rec in rep.records:
            obj = rec.objective
            lam = _fmt(obj.lam) if obj.kind.is_fair else ""
            if rec.error is not None:
                w.writerow([rep.scenario_id, rec.label, obj.kind.value, "", lam, "", "", "", "", "", ""])
                continue
            for snap in rec.snapshots:
                w.writerow([
                    rep.scenario_id, rec.label, obj.kind.value, rec.fairness_kind.value, lam,
                    _fmt(snap.fraction), int(snap.predicted_correct), _fmt(snap.posterior_mass),
                    _fmt(rec.sum_fairness), rec.completion_steps, rec.family_size,
                ])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
