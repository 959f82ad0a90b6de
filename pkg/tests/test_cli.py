import json
import subprocess
import sys

import numpy as np
import pytest

from bootlik.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from bootlik.experiment import ResultTable, load_dataset


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_validate_prints_resolved(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, {"model": "normal"}), "--seed", "4"]) == EXIT_OK
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["seed"] == 4 and cfg["K"] == 100 and cfg["R"] == 10


def test_validate_paper_scale(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, {"model": "sde"}), "--paper-scale"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["R"] == 50


def test_invalid_config_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path, {"model": "ising", "samplers": ["bcel"]})
    assert main(["validate", cfg]) == EXIT_INVALID
    assert "bcel" in capsys.readouterr().err
    assert main(["run", cfg]) == EXIT_INVALID


def test_bad_arguments_exit_1(tmp_path):
    assert main(["frobnicate"]) == EXIT_INVALID
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_INVALID
    assert main(["simulate", "garch", "0.1", "-o", str(tmp_path / "g.csv")]) == EXIT_INVALID


def test_runtime_failure_exit_2(tmp_path, capsys):
    flat = tmp_path / "flat.csv"
    flat.write_text("y\n" + "0.0\n" * 50)
    cfg = _write(tmp_path, {"model": "normal", "samplers": ["bcbl"], "data": str(flat), "K": 10, "L": 50, "R": 1})
    assert main(["run", cfg, "--seed", "1", "-o", str(tmp_path / "out")]) == EXIT_RUNTIME
    assert "run failed" in capsys.readouterr().err


def test_run_writes_table(tmp_path, capsys):
    cfg = _write(tmp_path, {"model": "normal", "samplers": ["bcbl", "abc"], "K": 10, "L": 50, "M": 100,
                            "N": 100, "abc_budget": 500, "quantile": 0.1})
    out = tmp_path / "out"
    assert main(["run", cfg, "--seed", "2", "-R", "2", "-o", str(out)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "mu" in captured.out and "wall-clock bcbl" in captured.err
    table = ResultTable.read_csv(out / "results.csv")
    assert [(r.sampler, r.replicates) for r in table.rows] == [("bcbl", 2), ("abc", 2)]
    assert json.loads((out / "config.json").read_text())["seed"] == 2


def test_run_without_seed_prints_it(tmp_path, capsys):
    cfg = _write(tmp_path, {"model": "normal", "samplers": ["bcel"], "M": 50, "N": 50, "R": 1})
    assert main(["run", cfg, "-o", str(tmp_path / "out")]) == EXIT_OK
    err = capsys.readouterr().err
    seed = int(err.split("seed: ")[1].split()[0])
    assert json.loads((tmp_path / "out/config.json").read_text())["seed"] == seed


def test_plotdata(tmp_path, capsys):
    src = tmp_path / "s.csv"
    src.write_text("theta,weight\n" + "".join(f"{v!r},1.0\n" for v in np.linspace(-1, 1, 50).tolist()))
    assert main(["plotdata", str(src), "-o", str(tmp_path / "d")]) == EXIT_OK
    assert (tmp_path / "d/s_theta_density.csv").exists()


@pytest.mark.parametrize("model,params", [("normal", ["0.5"]), ("garch", []), ("ising", ["0.4"]),
                                          ("sde", ["0.2", "0.3"]), ("popgen", ["0.5", "10"])])
def test_simulate(tmp_path, model, params):
    p = tmp_path / f"{model}.csv"
    args = ["simulate", model, *params, "-n", "12" if model != "sde" else "150", "--seed", "3", "-o", str(p)]
    assert main(args) == EXIT_OK
    data = load_dataset(model, p)
    assert np.asarray(getattr(data, "values", data)).size > 0
    again = tmp_path / "again.csv"
    main(args[:-1] + [str(again)])
    assert p.read_bytes() == again.read_bytes()


def test_simulate_bad_params(tmp_path):
    assert main(["simulate", "ising", "--", "-1", "-o", str(tmp_path / "x.csv")]) == EXIT_INVALID


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bootlik", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "plotdata" in r.stdout
