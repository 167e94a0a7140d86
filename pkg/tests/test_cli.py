import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hapticrrt.cli import EXIT_ERROR, EXIT_NO_GOAL, EXIT_OK, EXIT_VERIFY, main, read_tree, verify_dir
from hapticrrt.config import shipped_path
from hapticrrt.storage import csv_text, dumps_json, fmt_float, loads_json, read_csv, write_atomic

PENDULUM = str(shipped_path("pendulum"))


@pytest.fixture(scope="module")
def pendulum_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("plan")
    assert main(["plan", "--config", PENDULUM, "--out", str(out)]) == EXIT_OK
    return out


def _copy(src, dst):
    dst.mkdir(exist_ok=True)
    for p in src.iterdir():
        (dst / p.name).write_bytes(p.read_bytes())
    return dst


# -- storage -----------------------------------------------------------------------

@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trip(x):
    assert float(fmt_float(x)) == x


def test_special_floats():
    assert fmt_float(float("nan")) == "NaN"
    assert fmt_float(float("-inf")) == "-Infinity"
    assert fmt_float(3.0) == "3.0"
    assert fmt_float(0.1) == "0.10000000000000001"


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
def test_json_round_trip(xs):
    doc = {"a": xs, "b": [{"x": x, "n": i} for i, x in enumerate(xs)], "c": None, "d": True}
    assert loads_json(dumps_json(doc)) == doc


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    rows = rng.normal(size=(7, 4)) * 10.0 ** rng.integers(-20, 20, size=(7, 4))
    write_atomic(tmp_path / "x.csv", csv_text(["a", "b", "c", "d"], rows.tolist()))
    header, data = read_csv(tmp_path / "x.csv")
    assert header == ["a", "b", "c", "d"]
    np.testing.assert_array_equal(data, rows)


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "sub" / "f.txt"
    write_atomic(p, "one")
    write_atomic(p, "two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]


# -- plan --------------------------------------------------------------------------

def test_plan_outputs(pendulum_out):
    names = {p.name for p in pendulum_out.iterdir()}
    assert {"tree.json", "path.csv", "manifest.json", "config.json"} <= names
    doc = read_tree(pendulum_out / "tree.json")
    assert doc["metadata"]["goal_node"] is not None
    header, data = read_csv(pendulum_out / "path.csv")
    assert header[:3] == ["t", "u0", "u1"]
    assert {"phi", "W", "f_ctrl0", "f_ctrl1", "residual"} <= set(header)
    goal = doc["nodes"][doc["metadata"]["goal_node"]]
    assert abs(goal["z"][0]) <= 0.05
    # the tree file carries the full stored precision
    assert data[-1, header.index("phi")] == goal["cumulative_phi"]


def test_plan_zero_nodes(tmp_path):
    assert main(["plan", "--config", PENDULUM, "--set", "planner.max_nodes=0", "--out", str(tmp_path)]) == EXIT_NO_GOAL
    doc = read_tree(tmp_path / "tree.json")
    assert len(doc["nodes"]) == 1
    assert not (tmp_path / "path.csv").exists()


def test_malformed_config(tmp_path, capsys):
    cfg = json.loads(shipped_path("pendulum").read_text())
    cfg["control_bounds"]["lo"] = "wide"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert main(["plan", "--config", str(bad), "--out", str(out)]) == EXIT_ERROR
    assert "control_bounds" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())
    bad.write_text("{not json")
    assert main(["plan", "--config", str(bad), "--out", str(out)]) == EXIT_ERROR
    assert main(["plan", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == EXIT_ERROR


def test_bad_override(tmp_path):
    assert main(["plan", "--config", PENDULUM, "--set", "planner.epsilon", "--out", str(tmp_path)]) == EXIT_ERROR


# -- verify ------------------------------------------------------------------------

def test_verify_fresh(pendulum_out, capsys):
    assert main(["verify", "--out", str(pendulum_out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "FAIL" not in text and "PASS" in text


def test_verify_tampered_phi(pendulum_out, tmp_path, capsys):
    d = _copy(pendulum_out, tmp_path / "t")
    doc = read_tree(d / "tree.json")
    doc["nodes"][3]["cumulative_phi"] += 0.01
    (d / "tree.json").write_text(dumps_json(doc))
    assert main(["verify", "--out", str(d)]) == EXIT_VERIFY
    text = capsys.readouterr().out
    line = next(l for l in text.splitlines() if l.startswith("FAIL") and "phi additivity" in l)
    assert "3" in line.split("nodes", 1)[1].replace(",", " ").split()


def test_verify_seed_mismatch(pendulum_out, tmp_path):
    d = _copy(pendulum_out, tmp_path / "s")
    man = loads_json((d / "manifest.json").read_text())
    man["seed"] = man["seed"] + 1
    (d / "manifest.json").write_text(dumps_json(man))
    rep = verify_dir(d)
    assert rep.failed
    assert any("seed" in l and l.startswith("FAIL") for l in rep.lines)


def test_verify_missing_manifest(tmp_path):
    assert main(["verify", "--out", str(tmp_path)]) == EXIT_VERIFY


# -- mesh and metric field ---------------------------------------------------------

def test_mesh_deterministic(tmp_path):
    grid = ["--grid", "0:-0.6:0.6:4", "--grid", "1:-1.2:-0.4:3"]
    for name in ("a", "b"):
        assert main(["mesh", "--config", PENDULUM, *grid, "--out", str(tmp_path / name)]) == EXIT_OK
    a = (tmp_path / "a" / "mesh.csv").read_bytes()
    assert a == (tmp_path / "b" / "mesh.csv").read_bytes()
    header, data = read_csv(tmp_path / "a" / "mesh.csv")
    assert header[:4] == ["i", "j", "m", "branch"]
    assert len(data) == 12
    assert main(["verify", "--out", str(tmp_path / "a")]) == EXIT_OK


def test_plan_deterministic(tmp_path, pendulum_out):
    assert main(["plan", "--config", PENDULUM, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "tree.json").read_bytes() == (pendulum_out / "tree.json").read_bytes()
    assert (tmp_path / "path.csv").read_bytes() == (pendulum_out / "path.csv").read_bytes()


def test_seed_flag(tmp_path, pendulum_out):
    assert main(["plan", "--config", PENDULUM, "--seed", "7", "--out", str(tmp_path)]) in (EXIT_OK, EXIT_NO_GOAL)
    doc = read_tree(tmp_path / "tree.json")
    assert doc["metadata"]["seed"] == 7
    assert loads_json((tmp_path / "manifest.json").read_text())["seed"] == 7


def test_grid_too_large(tmp_path, capsys):
    code = main(["mesh", "--config", PENDULUM, "--grid", "0:0:1:1001", "--grid", "1:0:1:1000",
                 "--out", str(tmp_path / "g")])
    assert code == EXIT_ERROR
    assert "1000000" in capsys.readouterr().err.replace(",", "").replace("_", "")
    assert not (tmp_path / "g").exists()


def test_metric_field(tmp_path):
    out = tmp_path / "m"
    assert main(["metric-field", "--config", PENDULUM, "--grid", "0:-0.5:0.5:3", "--grid", "1:-1.1:-0.7:2",
                 "--out", str(out)]) == EXIT_OK
    header, data = read_csv(out / "metric.csv")
    assert {"eig0", "eig1", "angle0", "angle1", "obstacle"} <= set(header)
    assert len(data) == 6
    e0, e1 = data[:, header.index("eig0")], data[:, header.index("eig1")]
    assert np.all(e0 <= e1)
