import json
import subprocess
import sys

import pytest

from tempotsp.cli import COMMANDS, main
from tempotsp.synth_city import CitySpec

CITY = {
    "mesh": {"origin_lat": 35.0, "origin_lon": 135.7, "cell_size": 50},
    "grid": {"rows": 40, "cols": 60},
    "landmarks": {
        "v0": {"lat": 35.0012, "lon": 135.7012},
        "v1": {"lat": 35.0102, "lon": 135.7203},
        "v2": {"lat": 35.0051, "lon": 135.7301},
    },
    "corridors": [
        {"origin": a, "dest": b, "minutes": [m, m + 10], "trips": 40}
        for (a, b), m in {("v0", "v1"): 20, ("v1", "v0"): 22, ("v0", "v2"): 30,
                          ("v2", "v0"): 28, ("v1", "v2"): 12, ("v2", "v1"): 15}.items()
    ],
    "stays": {"v0": [5, 10], "v1": [30, 10], "v2": [8, 25]},
    "period_grid": {"start": 28800, "period_length": 7200, "count": 2},
    "dates": ["2019-04-01", "2019-04-06"],
    "noise": {"lag_seconds": 30, "dropout": 0.0},
    "residence_mix": {"citizen": 0.6, "foreign_visitor": 0.4},
    "seed": 5,
}
MESH_FLAGS = ["--origin-lat", "35.0", "--origin-lon", "135.7"]
GRID_FLAGS = ["--periods", "2"]
FAST = ["--ants", "10", "--iterations", "10"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    (d / "city.json").write_text(json.dumps(CITY))
    spec = CitySpec.from_dict(CITY)
    nodes = {k: {"meshes": [list(spec.landmark_mesh(k))]} for k in CITY["landmarks"]}
    (d / "nodes.json").write_text(json.dumps(nodes))
    (d / "stay.json").write_text(json.dumps({"v0": 0, "v1": 30, "v2": 45}))
    assert run("--out", d, "synth", "--spec", d / "city.json") == 0
    assert run("--out", d, "ingest", "--logs", d / "synth_logs.csv", *MESH_FLAGS) == 0
    assert run("--out", d, "congestion", "--logs", d / "synth_logs.csv", "--nodes", d / "nodes.json",
               *MESH_FLAGS, *GRID_FLAGS) == 0
    for v in nodes:
        assert run("--out", d, "profiles", "--connections", d / "connections.csv", "--dest", v,
                   "--nodes", d / "nodes.json") == 0
    profiles = [d / f"profiles_{v}.json" for v in nodes]
    assert run("--out", d, "weights", "--profiles", *profiles, "--nodes", d / "nodes.json",
               "--stay", d / "stay.json", "--congestion", d / "congestion.json", *GRID_FLAGS) == 0
    return d


def test_pipeline_recovers_weights(pipeline):
    g = json.loads((pipeline / "weights.json").read_text())
    for c in CITY["corridors"]:
        got = g["weights"][f"{c['origin']}->{c['dest']}"]
        assert got == pytest.approx(c["minutes"], abs=2)
    assert g["stay_minutes"]["v2"] == 45
    theta = json.loads((pipeline / "congestion.json").read_text())["theta"]
    assert all(sorted(row) == ["0", "1"] and max(row.values()) == 1.0 for row in theta.values())
    assert g["congestion"]["v1"] == [theta["v1"]["0"], theta["v1"]["1"]]


def test_pipeline_solve_and_oracle_agree(pipeline):
    w = pipeline / "weights.json"
    assert run("--out", pipeline, "solve", "--weights", w, "--seed", 1, *FAST) == 0
    assert run("--out", pipeline, "oracle", "--weights", w) == 0
    s = json.loads((pipeline / "solve.json").read_text())
    o = json.loads((pipeline / "oracle.json").read_text())
    assert s["cost"] == pytest.approx(o["cost"])
    assert s["tour"] in o["ties"]


def test_analyze_outputs_and_empty_filter(pipeline, tmp_path, caplog):
    prof = pipeline / "profiles_v1.json"
    nodes = pipeline / "nodes.json"
    assert run("--out", tmp_path, "analyze", "--profiles", prof, "--origin", "v0", "--nodes", nodes,
               "--query-start", "8", "--query-end", "12", "--smooth", "--logs", pipeline / "synth_logs.csv") == 0
    rows = (tmp_path / "density.csv").read_text().splitlines()
    assert rows[0] == "bin_lower_s,density" and len(rows) > 1
    assert (tmp_path / "mean_by_hour.csv").read_text().startswith("hour,mean_minutes\n8,")
    assert (tmp_path / "log_counts.csv").exists()

    empty = tmp_path / "empty"
    code = run("--out", empty, "analyze", "--profiles", prof, "--origin", "v0", "--nodes", nodes, "--months", "12")
    assert code == 0
    assert (empty / "density.csv").read_text() == "bin_lower_s,density\n"
    assert "no travel-time samples" in caplog.text


def test_subcommands_idempotent(pipeline, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("--out", out, "synth", "--spec", pipeline / "city.json", "--seed", 3) == 0
        assert run("--out", out, "ingest", "--logs", out / "synth_logs.csv", *MESH_FLAGS) == 0
        assert run("--out", out, "profiles", "--connections", out / "connections.csv", "--dest", "v1",
                   "--nodes", pipeline / "nodes.json", "--transfers") == 0
        assert run("--out", out, "solve", "--fixture", "kyoto", "--seed", 7, *FAST) == 0
        assert run("--out", out, "oracle", "--fixture", "kyoto", "--stay-multiplier", 0.4) == 0
    for name in ("synth_logs.csv", "connections.csv", "log_counts.csv", "profiles_v1.json", "solve.json", "oracle.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_solve_fixture(tmp_path):
    assert run("solve", "--fixture", "kyoto", "--stay-multiplier", "1.0", "--seed", 7, "--out", tmp_path, *FAST) == 0
    r = json.loads((tmp_path / "solve.json").read_text())
    assert r["params"]["rng_seed"] == 7 and len(r["history"]) == 10
    assert r["reference"]["route"] == ["v0", "v4", "v5", "v2", "v1", "v3", "v6", "v0"]
    assert r["timeline"][-1]["arrival"] - 480 == r["cost"]


def test_oracle_perturbed_fixture(tmp_path):
    assert run("--out", tmp_path, "oracle", "--fixture", "kyoto", "--perturb-node", "v3", "--factor", 2) == 0
    r = json.loads((tmp_path / "oracle.json").read_text())
    assert r["permutations_evaluated"] == 720
    ref = r["reference"]
    assert ref["route"] == ["v0", "v6", "v3", "v1", "v2", "v5", "v4", "v0"]
    assert ref["gap"] == pytest.approx(ref["cost"] - r["cost"]) and ref["gap"] >= 0


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 11, "aco": {"ants": 3, "iterations": 2}, "solve": {"stay_multiplier": 0.2}}))
    assert run("--config", cfg, "--out", tmp_path, "solve", "--fixture", "kyoto") == 0
    r = json.loads((tmp_path / "solve.json").read_text())
    assert r["params"]["rng_seed"] == 11 and r["params"]["ants"] == 3 and r["stay_multiplier"] == 0.2
    assert run("--config", cfg, "--out", tmp_path, "solve", "--seed", 4) == 0
    assert json.loads((tmp_path / "solve.json").read_text())["params"]["rng_seed"] == 4


def test_errors_are_machine_readable(tmp_path, capsys):
    assert run("--out", tmp_path, "ingest", "--logs", tmp_path / "missing.csv", *MESH_FLAGS) == 1
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["command"] == "ingest" and rec["error"]
    assert run("--out", tmp_path, "oracle", "--fixture", "kyoto", "--perturb-node", "v99") == 1
    assert "v99" in json.loads(capsys.readouterr().err)["message"]


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_flags(command):
    out = subprocess.run([sys.executable, "-m", "tempotsp", command, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--out" in out.stdout


def test_unknown_flag_fails():
    out = subprocess.run([sys.executable, "-m", "tempotsp", "solve", "--bogus"], capture_output=True, text=True)
    assert out.returncode == 2 and "unrecognized" in out.stderr
