import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from ota_formation.artifacts import (
    TrajectoryFormatError,
    read_trajectory,
    write_trajectory,
)
from ota_formation.cli import main
from ota_formation.plot import plot_trajectory, render_svg

NS = {"svg": "http://www.w3.org/2000/svg"}

COLLIDING = """\
[agents]
n = 2
gain_a = 50.0
displacements = [[-10.0, 0.0], [10.0, 0.0]]
initial_positions = [[20.0, 0.0], [-20.0, 0.0]]

[run]
duration = 1.0

[topology]
topology_mode = "fixed"
weights = [[0.5, 0.5], [0.5, 0.5]]

[integrator]
integrator_step = 0.05
"""


@pytest.fixture(scope="module")
def hexagon_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("hex")
    assert main(["run", "--preset", "hexagon6", "--out", str(out)]) == 0
    return out


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def svg_elements(path, tag, cls):
    root = ET.parse(path).getroot()
    return [e for e in root.iter(f"{{{NS['svg']}}}{tag}") if e.get("class") == cls]


def test_run_writes_artifacts(hexagon_dir):
    man = load_toml(hexagon_dir / "manifest.toml")
    assert man["outcome"] == "formation_reached" and man["exit_code"] == 0
    assert man["seed"] == 0 and re.fullmatch(r"[0-9a-f]{64}", man["config_digest"])
    for rel in man["artifacts"].values():
        assert (hexagon_dir / rel).exists()
    metrics = load_toml(hexagon_dir / "metrics.toml")
    assert metrics["ota"]["slots"] == 3 * metrics["ota"]["agreement_step"]


def test_trajectory_csv_layout(hexagon_dir):
    lines = (hexagon_dir / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "time_s,agent_id,px,py,theta_x,theta_y,in_danger"
    table = read_trajectory(hexagon_dir / "trajectory.csv")
    assert table.n == 6
    # 20 s at 1 ms, every 10th step, plus the final sample
    assert len(table.times) == 2001
    assert np.all(np.diff(table.times) > 0)


def test_hexagon_svg_element_counts(hexagon_dir):
    svg = hexagon_dir / "trajectory.svg"
    assert len(svg_elements(svg, "polyline", "trajectory")) == 6
    assert len(svg_elements(svg, "circle", "start")) == 6
    assert len(svg_elements(svg, "path", "end")) == 6
    assert len(svg_elements(svg, "polygon", "target")) == 6


def test_rerun_is_byte_identical(hexagon_dir, tmp_path):
    assert main(["run", "--preset", "hexagon6", "--out", str(tmp_path)]) == 0
    for name in ("trajectory.csv", "metrics.toml", "manifest.toml"):
        assert (tmp_path / name).read_bytes() == (hexagon_dir / name).read_bytes()


def test_square_presets_exit_codes(tmp_path):
    assert main(["run", "--preset", "square4-symmetric", "--out", str(tmp_path / "s"),
                 "--no-plot"]) == 3
    assert load_toml(tmp_path / "s" / "manifest.toml")["outcome"] == "local_minimum"
    assert main(["run", "--preset", "square4-random-topologies",
                 "--out", str(tmp_path / "r"), "--no-plot"]) == 0


def test_not_converged_exit_code(tmp_path):
    code = main(["run", "--preset", "hexagon6", "--out", str(tmp_path), "--no-plot",
                 "--set", "duration=0.5"])
    assert code == 5


def test_safety_violation_exit_code(tmp_path, capsys):
    cfg = tmp_path / "collide.toml"
    cfg.write_text(COLLIDING)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "inside the safety radius" in capsys.readouterr().err
    assert load_toml(tmp_path / "o" / "manifest.toml")["outcome"] == "safety_violation"


def test_invalid_input_exit_codes(tmp_path, capsys):
    assert main(["validate", "--preset", "hexagon6", "--set", "delta_c=3"]) == 1
    assert "delta_c" in capsys.readouterr().err
    assert main(["run", "--preset", "hexagon6"]) == 1  # missing --out
    bad = tmp_path / "bad.toml"
    bad.write_text("[agents]\nn = 2\ndisplacements = [[0, 0], [1, 0]]\n")
    assert main(["validate", "--config", str(bad)]) == 1
    assert f"{bad}:3:" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "missing.toml")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--preset", "square4-symmetric", "--out", str(blocker / "sub"),
                 "--set", "duration=0.1"]) == 4


def test_validate_prints_digest(capsys):
    assert main(["validate", "--preset", "hexagon6"]) == 0
    assert "digest" in capsys.readouterr().out


def test_compare_reports_all_protocols(tmp_path):
    assert main(["compare", "--preset", "hexagon6", "--out", str(tmp_path)]) == 0
    m = load_toml(tmp_path / "metrics.toml")
    for name in ("ota", "node_to_node", "orthogonal_broadcast"):
        assert isinstance(m[name]["agreement_step"], int)
    assert m["ota"]["slots"] == 3 * m["ota"]["agreement_step"]
    assert m["orthogonal_broadcast"]["slots"] == 12 * m["orthogonal_broadcast"]["agreement_step"]
    assert any("baseline agreement step" in note for note in m["notes"])


def test_compare_single_agent(tmp_path):
    cfg = tmp_path / "one.toml"
    cfg.write_text("[agents]\nn = 1\ndisplacements = [[0.0, 0.0]]\n[run]\nduration = 1.0\n")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    m = load_toml(tmp_path / "o" / "metrics.toml")
    for name in ("ota", "node_to_node", "orthogonal_broadcast"):
        assert m[name] == {"agreement_step": 0, "slots": 0, "individual": 0}


def test_batch_runs_each_seed(tmp_path, capsys):
    code = main(["batch", "--preset", "square4-random-topologies", "--seeds", "1", "2",
                 "--out", str(tmp_path), "--set", "duration=10.0"])
    assert code == 0
    out = capsys.readouterr().out
    assert "seed 1:" in out and "seed 2:" in out
    assert load_toml(tmp_path / "seed-2" / "manifest.toml")["seed"] == 2


def test_plot_subcommand(hexagon_dir, tmp_path):
    out = tmp_path / "p.svg"
    assert main(["plot", str(hexagon_dir / "trajectory.csv"), "--out", str(out),
                 "--preset", "hexagon6"]) == 0
    assert len(svg_elements(out, "polygon", "target")) == 6
    assert main(["plot", str(hexagon_dir / "trajectory.csv"), "--out", str(out)]) == 0
    assert svg_elements(out, "polygon", "target") == []


def test_plot_empty_trajectory_writes_nothing(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = tmp_path / "e.svg"
    assert main(["plot", str(empty), "--out", str(out)]) == 1
    assert not out.exists()
    header_only = tmp_path / "h.csv"
    header_only.write_text("time_s,agent_id,px,py,theta_x,theta_y,in_danger\n")
    assert main(["plot", str(header_only), "--out", str(out)]) == 1
    assert not out.exists()


@pytest.mark.parametrize("body", [
    "time_s,agent_id,px,py\n0,0,1,2\n",
    "time_s,agent_id,px,py,theta_x,theta_y,in_danger\n0,0,1,2,3,x,0\n",
    "time_s,agent_id,px,py,theta_x,theta_y,in_danger\n0,0,1,2,3,4,7\n",
    "time_s,agent_id,px,py,theta_x,theta_y,in_danger\n0,1,1,2,3,4,0\n0,0,1,2,3,4,0\n"
    "0.1,0,1,2,3,4,0\n",
])
def test_malformed_trajectories(tmp_path, body):
    path = tmp_path / "t.csv"
    path.write_text(body)
    with pytest.raises(TrajectoryFormatError):
        read_trajectory(path)


def test_danger_marking(tmp_path):
    from ota_formation.dynamics import simulate
    from ota_formation.config import load_config

    cfg = load_config(preset="square4-symmetric", overrides=["duration=2.0"]).config
    rec = simulate(cfg)
    assert rec.in_danger.any()
    write_trajectory(rec, tmp_path / "t.csv")
    table = read_trajectory(tmp_path / "t.csv")
    assert np.array_equal(table.in_danger, rec.in_danger)
    assert np.array_equal(table.positions, rec.positions)

    plot_trajectory(table, tmp_path / "on.svg")
    danger = svg_elements(tmp_path / "on.svg", "path", "danger")
    assert danger
    lines = svg_elements(tmp_path / "on.svg", "polyline", "trajectory")
    assert all(float(d.get("stroke-width")) > float(lines[0].get("stroke-width"))
               for d in danger)

    plot_trajectory(table, tmp_path / "off.svg", mark_danger=False)
    assert svg_elements(tmp_path / "off.svg", "path", "danger") == []
    widths = {e.get("stroke-width") for e in svg_elements(tmp_path / "off.svg", "polyline",
                                                            "trajectory")}
    assert len(widths) == 1


def test_render_rejects_empty_table():
    from ota_formation.artifacts import TrajectoryTable

    empty = TrajectoryTable(np.zeros(0), np.zeros((0, 2, 2)), np.zeros((0, 2, 2)),
                            np.zeros((0, 2), dtype=bool))
    with pytest.raises(TrajectoryFormatError):
        render_svg(empty)
