import csv
import io
import json

import pytest

from gtexchange.cli import BOUND_COLUMNS, main
from gtexchange.experiments import REPORT_COLUMNS


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_simulate_csv(capsys):
    code, out = run(capsys, "simulate", "--n", "8", "--m", "6", "--p", "0.3", "--trials", "5", "--seed", "4")
    assert code == 0
    assert out.splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert len(rows(out)) == 5
    assert run(capsys, "simulate", "--n", "8", "--m", "6", "--p", "0.3", "--trials", "5", "--seed", "4")[1] == out


def test_simulate_config_file_and_env_seed(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 8, "m": 4, "p": 0.4, "trials": 3, "seed": 1, "scheduler": "Greedy"}))
    _, from_file = run(capsys, "simulate", "--config", str(cfg))
    monkeypatch.setenv("GTX_SEED", "1")
    _, from_env = run(capsys, "simulate", "--n", "8", "--m", "4", "--p", "0.4", "--trials", "3", "--scheduler", "Greedy")
    assert from_file == from_env
    monkeypatch.setenv("GTX_SEED", "2")
    _, other = run(capsys, "simulate", "--config", str(cfg))
    assert other != from_file
    _, flag = run(capsys, "simulate", "--config", str(cfg), "--seed", "1")
    assert flag == from_file


def test_simulate_partition_regime(capsys):
    regime = json.dumps({"kind": "LinearRegime", "alpha": 1.0, "w": 1.2, "v": 0.9})
    code, out = run(capsys, "simulate", "--n", "64", "--regime", regime, "--scheduler", "PartitionTreeSplit",
                    "--target", "T", "--timing")
    assert code == 0
    assert "wall_time" in out.splitlines()[0]


def test_simulate_invalid(capsys):
    assert run(capsys, "simulate", "--n", "4", "--m", "4", "--p", "2.0")[0] == 2
    assert run(capsys, "simulate", "--n", "4")[0] == 2
    regime = json.dumps({"kind": "LinearRegime", "alpha": 1.0, "w": 1.0, "v": 2.0})
    assert run(capsys, "simulate", "--n", "64", "--regime", regime, "--scheduler", "PartitionTreeSplit")[0] == 2


def test_sweep(capsys):
    code, out = run(capsys, "sweep", "--p", "0.3", "--m", "8", "--trials", "50", "--error-target", "0.05")
    assert code == 0
    table = rows(out)
    assert len({r["min_n"] for r in table}) == 1


def test_sweep_not_found(capsys):
    code, _ = run(capsys, "sweep", "--p", "1.0", "--m", "4", "--trials", "10", "--n-grid", "1,2,3", "--strict")
    assert code == 3


def test_bounds(capsys):
    code, out = run(capsys, "bounds", "--formula", "split,cover-exact", "--n", "1,3", "--size", "2", "--p", "0.5")
    assert code == 0
    assert out.splitlines()[0] == ",".join(BOUND_COLUMNS)
    table = rows(out)
    assert len(table) == 4
    first = table[0]
    assert float(first["raw_value"]) == pytest.approx(1.5)
    assert float(first["clamped_value"]) == 1.0 and first["is_upper_bound"] == "True"
    assert table[3]["formula_id"] == "cover-exact" and float(table[3]["raw_value"]) == pytest.approx(0.578125)


def test_bounds_invalid(capsys):
    assert run(capsys, "bounds", "--formula", "nope", "--n", "1", "--size", "2", "--p", "0.5")[0] == 2
    assert run(capsys, "bounds", "--formula", "partition", "--n", "10", "--size", "10", "--p", "0.5")[0] == 2
    assert run(capsys, "bounds", "--formula", "split", "--n", "1", "--size", "3", "--p", "0.5")[0] == 2


def test_verify_custom_grid(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps([{"formula": "cover", "n": 3, "size": 2, "p": 0.5}]))
    code, out = run(capsys, "verify", "--grid", str(grid), "--samples", "5000")
    assert code == 0
    assert rows(out)[0]["bound_ok"] == "True"


def test_oracle(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"n": 3, "m": 3, "holdings": [[0], [1], [2]]}))
    code, out = run(capsys, "oracle", str(inst))
    assert code == 0
    result = json.loads(out)
    # whoever goes last ends with a subset of a finished user
    assert result["optimum"] == 2
    assert len(result["schedule"]) == 2
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"n": 2, "m": 6, "holdings": [[0]] * 6}))
    assert run(capsys, "oracle", str(big))[0] == 2
    assert run(capsys, "oracle", str(tmp_path / "missing.json"))[0] == 2


def test_out_file(tmp_path, capsys):
    target = tmp_path / "b.csv"
    code, out = run(capsys, "bounds", "--formula", "existence", "--n", "100", "--size", "8", "--p", "0.25",
                    "--out", str(target))
    assert code == 0 and out == ""
    assert float(rows(target.read_text())[0]["raw_value"]) == pytest.approx(0.00042451392916340964, rel=1e-12)
