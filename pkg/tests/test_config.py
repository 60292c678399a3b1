"""Config parsing, validation, round-trips and sweeps."""

import json

import pytest

from fedbilevel import ConfigError, ParameterError
from fedbilevel.config import (config_from_dict, parse_config, serialize_config,
                               sweep)
from fedbilevel.hyperrep import HyperRepSpec
from fedbilevel.quadratic import QuadraticSpec


def _write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return path


def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, {"problem": "quadratic", "K": 10}))
    spec = cfg.problem
    assert isinstance(spec, QuadraticSpec)
    assert cfg.lam == pytest.approx(min(10.0, 1.0 / spec.L_g))
    assert cfg.beta == pytest.approx(min(1.0, cfg.lam, 1.0 / (6 * spec.L_g)))
    assert cfg.N == 10  # ceil(kappa) for the default mu=1, L_g=10
    assert cfg.T == cfg.N


def test_beta_cap_rejection_names_cap(tmp_path):
    doc = {"problem": {"type": "quadratic", "L_g": 10.0}, "K": 5, "beta": 0.2}
    with pytest.raises(ConfigError, match="1/\\(6 L_g\\)"):
        parse_config(_write(tmp_path, doc))


def test_lambda_cap_rejection(tmp_path):
    doc = {"problem": {"type": "quadratic", "L_g": 10.0}, "K": 5, "lambda": 0.5}
    with pytest.raises(ConfigError, match="lambda"):
        parse_config(_write(tmp_path, doc))


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        parse_config(_write(tmp_path, {"K": 5, "momentum": 0.9}))


def test_malformed_json_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"K": 5,\n  "seed": }')
    with pytest.raises(ConfigError, match=r"line 2 column"):
        parse_config(path)


def test_round_trip_identity(tmp_path):
    doc = {"problem": {"type": "quadratic", "d1": 4, "d2": 3, "m": 5},
           "estimator": "aid", "K": 7, "N": 3, "T": 2, "tau": 2,
           "participation": 0.5, "hetero": 0.4,
           "noise": {"mode": "finite-sum", "spread": 0.2}, "seed": 11}
    cfg = parse_config(_write(tmp_path, doc))
    again = config_from_dict(serialize_config(cfg))
    assert again == cfg


def test_round_trip_preserves_distinct_instance_seed(tmp_path):
    doc = {"problem": {"type": "quadratic", "seed": 5}, "K": 3, "seed": 9}
    cfg = parse_config(_write(tmp_path, doc))
    assert cfg.problem.seed == 5
    assert cfg.seed == 9
    assert config_from_dict(serialize_config(cfg)) == cfg


def test_hetero_and_noise_keys_reach_problem_spec(tmp_path):
    doc = {"problem": "quadratic", "K": 2, "hetero": 0.7,
           "noise": {"mode": "additive-gaussian", "std": 0.05}}
    cfg = parse_config(_write(tmp_path, doc))
    assert cfg.problem.hetero == 0.7
    assert cfg.problem.noise_mode == "additive-gaussian"
    assert cfg.problem.noise_std == 0.05


def test_hyperrep_problem_config(tmp_path):
    doc = {"problem": {"type": "hyperrep", "m": 3, "n_points": 120,
                       "classes": 3, "ridge": 0.2}, "K": 2}
    cfg = parse_config(_write(tmp_path, doc))
    assert isinstance(cfg.problem, HyperRepSpec)
    assert cfg.problem.ridge == 0.2


def test_bad_values_rejected(tmp_path):
    for doc in ({"K": -1}, {"participation": 0.0}, {"tau": 0},
                {"eval_every": 0}, {"problem": "mystery"},
                {"noise": {"mode": "poisson"}}):
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, {"problem": "quadratic", **doc}))


def _fast_base():
    return {"problem": {"type": "quadratic", "d1": 2, "d2": 2, "m": 2,
                        "mu": 1.0, "L_g": 2.0},
            "K": 2, "seed": 3}


def test_sweep_grid(tmp_path):
    out = tmp_path / "cells"
    index = sweep(_fast_base(), {"tau": [1, 5]}, out)
    assert len(index) == 2
    assert all("tau=" in name for name in index)
    for fname in index.values():
        assert (out / fname).exists()
    idx_doc = json.loads((out / "index.json").read_text())
    assert idx_doc == index


def test_sweep_seeds_fixed_across_cells(tmp_path):
    out = tmp_path / "cells"
    index = sweep(_fast_base(), {"tau": [1, 2]}, out)
    # both cells ran with the same seed: identical initial row
    rows = []
    for fname in index.values():
        first = (out / fname).read_bytes().decode().splitlines()[2]
        rows.append(first)
    assert rows[0] == rows[1]


def test_sweep_errors(tmp_path):
    with pytest.raises(ParameterError):
        sweep(_fast_base(), {}, tmp_path)
    with pytest.raises(ParameterError):
        sweep(_fast_base(), {"tau": [1]}, tmp_path, overrides={"tau": 3})
    with pytest.raises(ParameterError):
        sweep(_fast_base(), {"warp": [1]}, tmp_path)
