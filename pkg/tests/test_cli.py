"""CLI surface: subcommands, exit codes, byte-determinism."""

import json

from fedbilevel.cli import main


def _cfg(tmp_path, extra=None):
    doc = {"problem": {"type": "quadratic", "d1": 2, "d2": 2, "m": 2,
                       "mu": 1.0, "L_g": 2.0},
           "K": 3, "seed": 5}
    doc.update(extra or {})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_writes_metrics_and_plot(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", "--config", _cfg(tmp_path), "--out-dir", str(out)])
    assert rc == 0
    assert (out / "fbo-aggitd_metrics.csv").exists()
    assert (out / "fbo-aggitd_grad_norm.svg").exists()
    assert "rounds=" in capsys.readouterr().out


def test_run_twice_byte_identical(tmp_path):
    cfg = _cfg(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", cfg, "--out-dir", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--out-dir", str(out2)]) == 0
    a = (out1 / "fbo-aggitd_metrics.csv").read_bytes()
    b = (out2 / "fbo-aggitd_metrics.csv").read_bytes()
    assert a == b


def test_set_overrides(tmp_path):
    out = tmp_path / "out"
    rc = main(["run", "--config", _cfg(tmp_path), "--set", "estimator=aid",
               "--set", "K=2", "--out-dir", str(out)])
    assert rc == 0
    assert (out / "fednest_metrics.csv").exists()


def test_estimate_dumps_trace(tmp_path):
    out = tmp_path / "out"
    rc = main(["estimate", "--config", _cfg(tmp_path), "--out-dir", str(out)])
    assert rc == 0
    doc = json.loads((out / "estimate_trace.json").read_text())
    assert {"Q", "y_iterates", "z_final", "p", "h_direct", "h_indirect"} <= set(doc)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope}")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", _cfg(tmp_path, {"beta": 0.9})]) == 2


def test_divergence_exit_code(tmp_path):
    assert main(["run", "--config", _cfg(tmp_path, {"alpha": 1e7, "K": 40}),
                 "--out-dir", str(tmp_path / "o")]) == 3


def test_verify_battery(capsys):
    assert main(["verify", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out
    assert "[FAIL]" not in out


def test_sweep_cli(tmp_path):
    out = tmp_path / "cells"
    rc = main(["sweep", "--config", _cfg(tmp_path), "--grid", '{"tau": [1, 2]}',
               "--out-dir", str(out)])
    assert rc == 0
    assert (out / "index.json").exists()
    assert main(["sweep", "--config", _cfg(tmp_path), "--grid", "not-json"]) == 2
