import csv
import io
import json
import xml.etree.ElementTree as ET

import pytest
from click.testing import CliRunner

from legible_teams.bundled import bundled_dir
from legible_teams.cli import main
from legible_teams.evaluation import CSV_COLUMNS

SCENARIOS = bundled_dir()
DIAG = "[0.70710678, -0.70710678]"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, env=None):
    return runner.invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


# ------------------------------------------------------------------ plan


def test_plan_play_names_human_subtasks(runner, tmp_path):
    # the table layout with every agent busy, so the human always has a ball to fetch
    sc = tmp_path / "three-ball.yaml"
    sc.write_text((SCENARIOS / "pe-three-ball-uneven.yaml").read_text()
                  .replace("no-sharing+empties-allowed", "no-sharing+all-busy"))
    out = tmp_path / "report.json"
    res = invoke(runner, "plan", sc, "--objective", "legible-play", "--out", out)
    assert res.exit_code == 0, res.output
    report = json.loads(out.read_text())
    assert report["objective"] == "legible-play"
    assert len(report["human_subtasks"]) == 1
    assert report["human_subtasks"] == report["assignments"][0]
    assert report["human_subtasks"][0] in {"ball-1", "ball-2", "ball-3"}
    assert len(report["paths"]) == 3
    svg = ET.fromstring((tmp_path / "report.svg").read_text())
    assert svg.tag.endswith("svg")
    text = "".join(svg.itertext())
    assert f"human: {report['human_subtasks'][0]}" in text and "legible-play" in text


def test_plan_play_on_bundled_table(runner):
    res = invoke(runner, "plan", SCENARIOS / "pe-three-ball-uneven.yaml", "--objective", "legible-play")
    report = json.loads(res.output)
    assert res.exit_code == 0
    assert report["human_subtasks"] == report["assignments"][0]
    assert sorted(sum(report["assignments"], [])) == ["ball-1", "ball-2", "ball-3"]


def test_plan_to_stdout_with_fairness(runner):
    res = invoke(runner, "plan", SCENARIOS / "kitchen-duo-mirror.yaml", "--objective", "fair-legible-watch",
                 "--fairness", "effort", "--lambda", "0.5")
    assert res.exit_code == 0
    report = json.loads(res.output)
    assert report["fairness_kind"] == "effort" and report["lambda"] == 0.5
    assert all(f <= 0 for f in report["fairness"])


def test_plan_svg_on_grid(runner, tmp_path):
    svg = tmp_path / "k.svg"
    res = invoke(runner, "plan", SCENARIOS / "kitchen-wall-detour.yaml", "--svg", svg)
    assert res.exit_code == 0
    root = ET.fromstring(svg.read_text())
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 3


def test_plan_malformed_field(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text((SCENARIOS / "pe-duo-mirror.yaml").read_text().replace("horizon:", "horizn:"))
    res = runner.invoke(main, ["plan", str(bad)])
    assert res.exit_code == 2
    assert "bad.yaml:16:" in res.output and "horizn" in res.output


def test_plan_horizon_zero(runner, tmp_path):
    sc = tmp_path / "zero.yaml"
    sc.write_text((SCENARIOS / "pe-duo-mirror.yaml").read_text().replace("horizon: 30", "horizon: 0"))
    res = runner.invoke(main, ["plan", str(sc)])
    assert res.exit_code == 3
    assert "error:" in res.output


def test_plan_missing_file(runner, tmp_path):
    assert runner.invoke(main, ["plan", str(tmp_path / "none.yaml")]).exit_code == 2


def test_bad_beta_is_input_error(runner):
    res = runner.invoke(main, ["plan", str(SCENARIOS / "pe-duo-mirror.yaml"), "--beta", "0"])
    assert res.exit_code == 2


def test_seed_from_environment(runner):
    args = ["plan", SCENARIOS / "pe-three-ball-even.yaml", "--objective", "efficient", "--efficient-mode", "sample"]
    picks = {json.loads(invoke(runner, *args, env={"LEGIBLE_TEAMS_SEED": str(s)}).output)["allocation"]
             for s in range(12)}
    assert len(picks) > 1
    a = invoke(runner, *args, env={"LEGIBLE_TEAMS_SEED": "5"}).output
    assert a == invoke(runner, *args, "--seed", "5").output


# ------------------------------------------------------------------ evaluate


@pytest.fixture(scope="module")
def bundled_csv():
    return CliRunner().invoke(main, ["evaluate", str(SCENARIOS)], catch_exceptions=False)


def test_evaluate_bundled(bundled_csv):
    assert bundled_csv.exit_code == 0
    table = rows(bundled_csv.output)
    assert tuple(table[0]) == CSV_COLUMNS
    assert len(table) - 1 == 12 * 5 * 3
    assert len({r[0] for r in table[1:]}) == 12
    assert len({r[1] for r in table[1:]}) == 5


def test_evaluate_is_byte_identical(runner, tmp_path, bundled_csv):
    out = tmp_path / "a.csv"
    assert invoke(runner, "evaluate", SCENARIOS, "--csv", out).exit_code == 0
    assert out.read_bytes() == bundled_csv.output.encode()
    assert b"\r" not in out.read_bytes()


def test_evaluate_empty_dir(runner, tmp_path):
    res = runner.invoke(main, ["evaluate", str(tmp_path)])
    assert res.exit_code == 2
    assert "no scenario files" in res.output


def test_evaluate_keeps_going_past_failures(runner, tmp_path):
    (tmp_path / "a.yaml").write_text((SCENARIOS / "pe-duo-mirror.yaml").read_text().replace("horizon: 30", "horizon: 1"))
    (tmp_path / "b.yaml").write_text((SCENARIOS / "kitchen-duo-mirror.yaml").read_text())
    res = invoke(runner, "evaluate", tmp_path, "--objective", "efficient", "--objective", "legible-watch")
    assert res.exit_code == 0
    table = rows(res.output)[1:]
    assert [r[0] for r in table] == ["pe-duo-mirror"] * 2 + ["kitchen-duo-mirror"] * 6
    (tmp_path / "b.yaml").unlink()
    assert runner.invoke(main, ["evaluate", str(tmp_path)]).exit_code == 3


# ------------------------------------------------------------------ posterior


def _traj(tmp_path, steps, human="[0, 0]", robot=DIAG):
    p = tmp_path / "t.yaml"
    p.write_text("actions:\n" + "".join(f"  - [{human}, {robot}]\n" for _ in range(steps)) if steps else "actions: []\n")
    return p


def test_posterior_straight_to_target(runner, tmp_path):
    res = invoke(runner, "posterior", SCENARIOS / "pe-duo-mirror.yaml", _traj(tmp_path, 4))
    assert res.exit_code == 0
    table = rows(res.output)
    col = table[0].index("left|right")
    mass = [float(r[col]) for r in table[1:]]
    assert len(mass) == 5
    assert all(b > a for a, b in zip(mass, mass[1:]))
    for r in table[1:]:
        assert sum(map(float, r[1:])) == pytest.approx(1.0, abs=1e-8)


def test_posterior_zero_steps_is_prior(runner, tmp_path):
    res = invoke(runner, "posterior", SCENARIOS / "pe-duo-mirror.yaml", _traj(tmp_path, 0))
    table = rows(res.output)
    assert len(table) == 2 and table[1][0] == "0"
    assert [float(x) for x in table[1][1:]] == pytest.approx([1 / 7] * 7, abs=1e-9)


def test_posterior_out_of_bounds(runner, tmp_path):
    p = tmp_path / "t.yaml"
    p.write_text(f"actions:\n  - [[0, 0], {DIAG}]\n  - [[0, 0], [4, 0]]\n")
    res = runner.invoke(main, ["posterior", str(SCENARIOS / "pe-duo-mirror.yaml"), str(p)])
    assert res.exit_code == 2
    assert "step 1" in res.output and "t.yaml:3:" in res.output


def test_posterior_beta_from_environment(runner, tmp_path):
    traj = _traj(tmp_path, 3)
    sc = SCENARIOS / "pe-duo-mirror.yaml"
    sharp = invoke(runner, "posterior", sc, traj, env={"LEGIBLE_TEAMS_BETA": "4"}).output
    assert sharp == invoke(runner, "posterior", sc, traj, "--beta", "4").output
    assert sharp != invoke(runner, "posterior", sc, traj).output


def test_posterior_include_human(runner, tmp_path):
    sc = SCENARIOS / "pe-duo-mirror.yaml"
    traj = _traj(tmp_path, 3, human="[-0.70710678, 0.70710678]")
    out = tmp_path / "p.csv"
    assert invoke(runner, "posterior", sc, traj, "--include-human", "--out", out).exit_code == 0
    table = rows(out.read_text())
    last = dict(zip(table[0], map(float, table[-1])))
    assert max(last, key=lambda k: last[k] if k != "t" else -1) == "left|right"


# ------------------------------------------------------------------ export


def test_export_round_trip(runner, tmp_path):
    res = invoke(runner, "export-scenarios", tmp_path)
    assert res.exit_code == 0
    assert len(res.output.splitlines()) == 12
    for p in SCENARIOS.glob("*.yaml"):
        assert (tmp_path / p.name).read_text() == p.read_text()
