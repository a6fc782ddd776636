import csv
import json

import pytest

from parablow.cli import cli_main

CONFIG = {
    "q": 2,
    "domain": "interval(-1,1)",
    "h": 0.0625,
    "path": ["minimal", "maximal"],
    "output_times": [0.01, 0.1, 0.5],
    "probe": {"radius": 0.5},
    "tolerance": 1e-3,
    "stepper": {"tau0": 1e-5, "rho": 1.05},
    "sweep": {"q": [2, 3]},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(CONFIG, indent=2))
    return path


def strip_wall(obj):
    if isinstance(obj, dict):
        return {k: strip_wall(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [strip_wall(v) for v in obj]
    return obj


def test_missing_config_is_usage_error(capsys):
    assert cli_main(["solve", "--config", "missing.cfg"]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_subcommand_and_bad_config(tmp_path, capsys):
    assert cli_main(["explode"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "q": 0.5,\n  "domain": "interval(-1,1)"\n}')
    assert cli_main(["solve", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_solve_writes_outputs(config, tmp_path):
    out = tmp_path / "solve"
    assert cli_main(["solve", "--config", str(config), "--out", str(out)]) == 0
    summary = json.loads((out / "solve.json").read_text())
    assert summary["times"] == [0.01, 0.1, 0.5]
    assert (out / "solve_diagnostics.csv").exists()


def test_construct_compare_table(config, tmp_path, capsys):
    out = tmp_path / "c"
    rc = cli_main(["construct", "--config", str(config), "--path", "minimal", "--path", "maximal", "--compare", "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(open(out / "compare.csv")))
    assert [float(r["t"]) for r in rows] == [0.01, 0.1, 0.5]
    assert all(float(r["rel_sup_difference"]) < 0.5 for r in rows)
    assert "rel_sup_difference" in capsys.readouterr().out


def test_env_overrides_out(config, tmp_path, monkeypatch):
    env_out = tmp_path / "from_env"
    monkeypatch.setenv("PARABLOW_OUT", str(env_out))
    assert cli_main(["construct", "--config", str(config), "--path", "maximal", "--out", str(tmp_path / "ignored")]) == 0
    assert (env_out / "maximal.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_sweep_parallel_matches_serial(config, tmp_path):
    a, b = tmp_path / "s1", tmp_path / "s2"
    assert cli_main(["sweep", "--config", str(config), "--jobs", "1", "--out", str(a)]) == 0
    assert cli_main(["sweep", "--config", str(config), "--jobs", "2", "--out", str(b)]) == 0
    assert (a / "sweep.csv").read_text() == (b / "sweep.csv").read_text()
    assert len((a / "sweep.csv").read_text().splitlines()) == 3


def test_verify_subset_deterministic(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        rc = cli_main(["verify", "--suite", "quick", "--only", "ode_oracle", "--only", "contraction_order", "--out", str(out)])
        assert rc == 0
        outs.append(strip_wall(json.loads((out / "report.json").read_text())))
        assert sorted(p.name for p in out.iterdir()) == ["contraction_order.csv", "ode_oracle.csv", "report.json", "report.txt"]
    assert outs[0] == outs[1]
    assert cli_main(["report", "--out", str(tmp_path / "r1")]) == 0
    assert cli_main(["report", "--out", str(tmp_path / "nowhere")]) == 2


def test_verify_quick_suite(tmp_path, capsys):
    out = tmp_path / "quick"
    rc = cli_main(["verify", "--suite", "quick", "--out", str(out)])
    data = json.loads((out / "report.json").read_text())
    assert len(data["checks"]) == 13
    assert rc == (0 if data["overall"] == "PASS" else 1)
    assert rc == 0, capsys.readouterr().out
