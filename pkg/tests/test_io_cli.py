import json
import subprocess
import sys

import numpy as np
import pytest

from dyadlmo import io as fio
from dyadlmo.cli import ExperimentConfig, ConfigError, main, run_experiment
from dyadlmo.dyadic import GridSignal, HaarExpansion, haar_forward
from dyadlmo.norms import NormReport, lmo_norm, product_bmo_norm
from dyadlmo.opnorm import cotlar_decay_suite
from dyadlmo.paraproducts import pi_main


# --- file formats -------------------------------------------------------------------


def test_signal_and_coeff_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    sig = GridSignal(rng.standard_normal((4, 8)))
    fio.write_signal(tmp_path / "s.txt", sig)
    back = fio.read_signal(tmp_path / "s.txt")
    assert back.values.tobytes() == sig.values.tobytes()
    exp = HaarExpansion(rng.standard_normal((2, 2, 4)), truncated=True)
    fio.write_coeffs(tmp_path / "c.txt", exp)
    back = fio.read_coeffs(tmp_path / "c.txt")
    assert back.coeffs.tobytes() == exp.coeffs.tobytes() and back.truncated
    with pytest.raises(fio.MalformedFileError):
        fio.read_coeffs(tmp_path / "s.txt")


@pytest.mark.parametrize("text, where", [
    ("", "empty"),
    ("{bad\n1\n", "line 1"),
    ('{"format": "x", "version": 1}\n', "unknown format"),
    ('{"format": "dyadlmo-signal", "version": 1, "n_params": 1, "depth": [1], "count": 2}\n1\n',
     "expected 2"),
    ('{"format": "dyadlmo-signal", "version": 1, "n_params": 1, "depth": [1], "count": 2}\n1\nz\n',
     "line 3"),
    ('{"format": "dyadlmo-signal", "version": 1, "n_params": 2, "depth": [1], "count": 2}\n1\n2\n',
     "depth"),
])
def test_malformed_files(text, where):
    with pytest.raises(fio.MalformedFileError, match=where):
        fio.loads_array(text)


def test_sparse_csv():
    values = np.arange(8.0).reshape(2, 4)
    assert np.array_equal(fio.csv_to_array(fio.array_to_csv(values)), values)
    arr = fio.csv_to_array("0,1,2.5\n1,3,-1\n")
    assert arr.shape == (2, 4) and arr[0, 1] == 2.5 and arr[1, 3] == -1 and arr.sum() == 1.5
    with pytest.raises(fio.MalformedFileError):
        fio.csv_to_array("0,1,x\n")
    with pytest.raises(fio.MalformedFileError):
        fio.csv_to_array("0,9,1\n", depth=(1, 2))


# --- configuration -------------------------------------------------------------------


def test_config_validation():
    cfg = ExperimentConfig.from_dict({"experiment": "growth", "depths": [2]})
    assert cfg.n_params == 2 and len(cfg.config_hash) == 16
    other = ExperimentConfig.from_dict({"experiment": "growth", "depths": [2], "out": "elsewhere"})
    assert other.config_hash == cfg.config_hash
    for bad, field in [({"budget": 0}, "budget"), ({"depths": []}, "depths"),
                       ({"nope": 1}, "nope"), ({"experiment": "x"}, "experiment"),
                       ({"seed": 1.5}, "seed")]:
        with pytest.raises(ConfigError, match=field):
            ExperimentConfig.from_dict(bad)


# --- subcommands ------------------------------------------------------------------------


def test_transform_constant_signal(tmp_path, capsys):
    fio.write_signal(tmp_path / "one.txt", GridSignal(np.ones((4, 4))))
    assert main(["transform", str(tmp_path / "one.txt"), "--out", str(tmp_path / "c.txt")]) == 0
    c = fio.read_coeffs(tmp_path / "c.txt").coeffs
    assert c[0, 0] == pytest.approx(1.0) and np.count_nonzero(np.abs(c) > 1e-15) == 1
    assert "parseval_error" in capsys.readouterr().err
    assert main(["transform", str(tmp_path / "c.txt"), "--direction", "inverse",
                 "--out", str(tmp_path / "back.txt")]) == 0
    np.testing.assert_allclose(fio.read_signal(tmp_path / "back.txt").values, 1.0)


def test_transform_matches_library(tmp_path):
    rng = np.random.default_rng(1)
    sig = GridSignal(rng.standard_normal((8, 4)))
    fio.write_signal(tmp_path / "s.txt", sig)
    main(["transform", str(tmp_path / "s.txt"), "--out", str(tmp_path / "c.txt")])
    np.testing.assert_array_equal(fio.read_coeffs(tmp_path / "c.txt").coeffs,
                                  haar_forward(sig).coeffs)


def test_norm_command(tmp_path, capsys):
    fio.write_coeffs(tmp_path / "z.txt", HaarExpansion.zeros((2, 2)))
    assert main(["norm", str(tmp_path / "z.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.0
    rng = np.random.default_rng(2)
    exp = HaarExpansion(rng.standard_normal((4, 4)))
    fio.write_coeffs(tmp_path / "e.txt", exp)
    for which, ref in [("bmoP", product_bmo_norm(exp)), ("lmo", lmo_norm(exp))]:
        assert main(["norm", str(tmp_path / "e.txt"), "--which", which]) == 0
        rep = NormReport.from_json(capsys.readouterr().out)
        assert rep.value == pytest.approx(ref.value, rel=1e-15)
        assert rep.witness == ref.witness
    for which in ("bmo", "rect", "lmoAxis", "lmoBeta"):
        assert main(["norm", str(tmp_path / "e.txt"), "--which", which]) == 0
    capsys.readouterr()
    assert main(["norm", str(tmp_path / "e.txt"), "--which", "lmoBeta", "--delta", "1,2"]) == 2


def test_para_and_commutator_commands(tmp_path, capsys):
    rng = np.random.default_rng(3)
    phi, b = HaarExpansion(rng.standard_normal((4, 4))), HaarExpansion(rng.standard_normal((4, 4)))
    fio.write_coeffs(tmp_path / "p.txt", phi)
    fio.write_coeffs(tmp_path / "b.txt", b)
    assert main(["para", str(tmp_path / "p.txt"), str(tmp_path / "b.txt"),
                 "--out", str(tmp_path / "o.txt")]) == 0
    np.testing.assert_allclose(fio.read_coeffs(tmp_path / "o.txt").coeffs, pi_main(phi, b).coeffs)
    assert main(["para", str(tmp_path / "p.txt"), str(tmp_path / "b.txt"), "--kind", "beta"]) == 2
    assert main(["commutator", str(tmp_path / "p.txt"), str(tmp_path / "b.txt"),
                 "--axes", "0,1", "--out", str(tmp_path / "k.txt")]) == 0
    assert "truncation_flag 1" in capsys.readouterr().err
    assert fio.read_coeffs(tmp_path / "k.txt").truncated


def test_exit_codes(tmp_path):
    assert main(["bogus"]) == 2
    assert main(["norm", str(tmp_path / "missing.txt")]) == 2
    (tmp_path / "bad.json").write_text('{"experiment": "growth",\n "depths": [2,]}')
    assert main(["experiment", "--config", str(tmp_path / "bad.json")]) == 2
    assert main(["experiment", "--name", "growth", "--budget", "0"]) == 2


def test_numeric_failure_exit_code(monkeypatch, tmp_path):
    from dyadlmo import cli
    from dyadlmo.opnorm import ConvergenceError

    def boom(cfg):
        raise ConvergenceError("cap")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["experiment", "--name", "core", "--out", str(tmp_path)]) == 3


# --- experiments ------------------------------------------------------------------------------


def test_empty_ensemble_gives_header_only(tmp_path):
    out = tmp_path / "r"
    assert main(["experiment", "--name", "equivalence", "--ensemble", "0", "--depth", "2",
                 "--out", str(out)]) == 0
    lines = (out / "equivalence.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("schema_version,config_hash,seed")


def test_replay_is_byte_identical(tmp_path):
    out = tmp_path / "a"
    assert main(["experiment", "--name", "equivalence", "--ensemble", "3", "--depth", "2",
                 "--budget", "2", "--seed", "4", "--out", str(out)]) == 0
    first = (out / "equivalence.csv").read_bytes()
    replay = tmp_path / "replay.json"
    cfg = json.loads((out / "config.json").read_text())
    cfg["out"] = str(tmp_path / "b")
    replay.write_text(json.dumps(cfg))
    assert main(["experiment", "--config", str(replay)]) == 0
    assert (tmp_path / "b" / "equivalence.csv").read_bytes() == first
    rows = first.decode().splitlines()[1:]
    cfg_hash = ExperimentConfig.from_dict(cfg).config_hash
    assert rows and all(r.split(",")[1] == cfg_hash and r.split(",")[2] == "4" for r in rows)


def test_flags_override_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "cotlar", "depths": [2], "ensemble": 1,
                                "out": str(tmp_path / "x")}))
    assert main(["experiment", "--config", str(path), "--seed", "9"]) == 0
    assert json.loads((tmp_path / "x" / "config.json").read_text())["seed"] == 9


def test_suite_output_matches_library():
    cfg = ExperimentConfig.from_dict({"experiment": "cotlar", "depths": [2, 3], "ensemble": 2})
    _, doc = run_experiment(cfg)
    rep = cotlar_decay_suite(0, [2, 3], 2, 2)
    assert doc["summary"]["C_J3"] == pytest.approx(rep.summary["C_J3"], rel=1e-15)


def test_shift_average_logs_grid_specs():
    cfg = ExperimentConfig.from_dict({"experiment": "shift_average", "depths": [3], "samples": 5})
    text, _ = run_experiment(cfg)
    header, *rows = text.splitlines()
    assert header.endswith("sample,alpha,r,statistic") and len(rows) == 5
    assert all(len(r.split(",")[4]) == 3 for r in rows)


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "dyadlmo.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "experiment" in res.stdout
