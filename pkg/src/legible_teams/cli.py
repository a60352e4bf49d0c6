"""Command-line front end.

Exit codes: 0 success, 2 malformed input (parse or structural error), 3 infeasible
scenario. Every numeric flag can also be set through an environment variable
named ``LEGIBLE_TEAMS_<FLAG>`` (for example ``LEGIBLE_TEAMS_BETA=2``).
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import sys
from pathlib import Path

import click

from .domain import ObjectiveKind, ObserverConfig, enumerate_allocations, make_objective
from .environments import Scenario
from .errors import (
    ConfigurationError,
    InfeasibleError,
    LegibleTeamsError,
    MembershipError,
    ScenarioParseError,
    SizeError,
    StructuralError,
)
from .evaluation import SnapshotProtocol, run_suite, write_csv
from .observer import posterior
from .planner import PlanResult, plan
from .render import render_svg
from .scenario_io import load_scenario, load_suite, load_trajectory

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3
ENV = "LEGIBLE_TEAMS_"
OBJECTIVES = [k.value for k in ObjectiveKind]

logger = logging.getLogger("legible_teams")


def _exit_code(exc: LegibleTeamsError) -> int:
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (ScenarioParseError, StructuralError, SizeError, ConfigurationError, MembershipError)):
        return EXIT_INPUT
    return 1


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LegibleTeamsError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def observer_options(fn):
    for opt in reversed([
        click.option("--beta", type=float, default=1.0, show_default=True, envvar=ENV + "BETA",
                     help="Observer rationality."),
        click.option("--gamma", type=float, default=0.9, show_default=True, envvar=ENV + "GAMMA",
                     help="Discount used by the efficient baseline."),
        click.option("--seed", type=int, default=0, show_default=True, envvar=ENV + "SEED"),
        click.option("--prefix-weighted", is_flag=True, envvar=ENV + "PREFIX_WEIGHTED",
                     help="Score legibility as the mean posterior over prefixes."),
        click.option("--fairness", type=click.Choice(["allocation", "effort"]), default="allocation",
                     show_default=True, envvar=ENV + "FAIRNESS"),
        click.option("--lambda", "lam", type=float, default=1.0, show_default=True, envvar=ENV + "LAMBDA",
                     help="Weight of the fairness term."),
    ]):
        fn = opt(fn)
    return fn


def _config(beta: float, gamma: float) -> ObserverConfig:
    try:
        return ObserverConfig(beta=beta, gamma=gamma)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Legible and fair task allocation for human-robot teams."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s: %(message)s")


def plan_report(scenario: Scenario, result: PlanResult) -> dict:
    theta = result.allocation
    labels = scenario.labels
    obj = result.objective
    final = result.posterior.row(len(result.trajectory))
    return {
        "scenario": scenario.id,
        "objective": obj.kind.value,
        "fairness_kind": result.fairness_kind.value,
        "lambda": obj.lam if obj.kind.is_fair else None,
        "prefix_weighted": obj.prefix_weighted,
        "allocation": theta.label(labels),
        "allocation_index": result.allocation_index,
        "human_subtasks": [labels[t] for t in sorted(theta.human)],
        "assignments": [[labels[t] for t in sorted(s)] for s in theta.assignments],
        "objective_value": result.objective_value,
        "posterior_on_allocation": float(final[result.allocation_index]),
        "fairness": list(result.fairness),
        "completion_steps": result.completion_steps,
        "family_index": result.family_index,
        "family_size": result.family_size,
        "paths": [result.trajectory.agent_positions(i).tolist() for i in range(scenario.n_agents)],
    }


@main.command("plan")
@click.argument("scenario_path", metavar="SCENARIO", type=click.Path(dir_okay=False))
@click.option("--objective", type=click.Choice(OBJECTIVES), default="legible-watch", show_default=True,
              envvar=ENV + "OBJECTIVE")
@click.option("--efficient-mode", type=click.Choice(["argmax", "sample"]), default="argmax", show_default=True,
              envvar=ENV + "EFFICIENT_MODE")
@observer_options
@click.option("--out", type=click.Path(dir_okay=False), envvar=ENV + "OUT",
              help="Report path (JSON); the SVG is written next to it. Defaults to stdout, no SVG.")
@click.option("--svg", type=click.Path(dir_okay=False), help="Explicit SVG path.")
@_guard
def cmd_plan(scenario_path, objective, efficient_mode, beta, gamma, seed, prefix_weighted, fairness, lam, out, svg):
    """Plan one scenario and write a report plus an SVG render."""
    scenario = load_scenario(scenario_path)
    obj = make_objective(objective, fairness, lam, prefix_weighted)
    result = plan(scenario, obj, _config(beta, gamma), seed, efficient_mode=efficient_mode)
    text = json.dumps(plan_report(scenario, result), indent=2) + "\n"
    if out:
        Path(out).write_text(text)
        svg = svg or str(Path(out).with_suffix(".svg"))
    else:
        click.echo(text, nl=False)
    if svg:
        Path(svg).write_text(render_svg(scenario, result))


@main.command("evaluate")
@click.argument("suite_dir", type=click.Path(file_okay=False))
@click.option("--objective", "objectives", type=click.Choice(OBJECTIVES), multiple=True,
              help="Planner to include (repeatable). Default: all five.")
@click.option("--efficient-mode", type=click.Choice(["argmax", "sample"]), default="argmax", show_default=True,
              envvar=ENV + "EFFICIENT_MODE")
@observer_options
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), envvar=ENV + "CSV",
              help="Output CSV (default stdout).")
@click.option("--out", type=click.Path(dir_okay=False), help="Alias for --csv.")
@_guard
def cmd_evaluate(suite_dir, objectives, efficient_mode, beta, gamma, seed, prefix_weighted, fairness, lam,
                 csv_path, out):
    """Run the snapshot prediction experiment over every scenario in SUITE_DIR."""
    scenarios = load_suite(suite_dir)
    names = objectives or OBJECTIVES
    planners = [make_objective(n, fairness, lam, prefix_weighted) for n in names]
    reports = run_suite(scenarios, planners, SnapshotProtocol(), _config(beta, gamma), seed,
                        efficient_mode=efficient_mode)
    text = write_csv(reports)
    target = csv_path or out
    if target:
        Path(target).write_bytes(text.encode())
    else:
        click.echo(text, nl=False)
    ok = sum(all(r.error is None for r in rep.records) for rep in reports)
    if ok == 0:
        click.echo("error: every scenario failed", err=True)
        sys.exit(EXIT_INFEASIBLE)


@main.command("posterior")
@click.argument("scenario_path", metavar="SCENARIO", type=click.Path(dir_okay=False))
@click.argument("trajectory_path", metavar="TRAJECTORY", type=click.Path(dir_okay=False))
@click.option("--beta", type=float, default=1.0, show_default=True, envvar=ENV + "BETA")
@click.option("--include-human", is_flag=True, help="Also score the human slot's actions.")
@click.option("--out", type=click.Path(dir_okay=False), envvar=ENV + "OUT", help="Output CSV (default stdout).")
@_guard
def cmd_posterior(scenario_path, trajectory_path, beta, include_human, out):
    """Posterior over allocations after every prefix of a trajectory, as CSV."""
    scenario = load_scenario(scenario_path)
    xi = load_trajectory(scenario, trajectory_path)
    allocations = enumerate_allocations(scenario)
    try:
        config = ObserverConfig(beta=beta, include_human=include_human)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    trace = posterior(scenario, allocations, xi, config)
    rows = [["t"] + [a.label(scenario.labels) for a in allocations]]
    for t in range(len(trace)):
        rows.append([str(t)] + [f"{p:.9g}" for p in trace.row(t)])
    text = _csv_text(rows)
    if out:
        Path(out).write_bytes(text.encode())
    else:
        click.echo(text, nl=False)


@main.command("export-scenarios")
@click.argument("directory", type=click.Path(file_okay=False))
def cmd_export(directory):
    """Write the bundled scenario suite to DIRECTORY."""
    from .bundled import write_bundled

    for p in write_bundled(directory):
        click.echo(str(p))


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


if __name__ == "__main__":  # pragma: no cover
    main()
