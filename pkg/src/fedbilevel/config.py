"""JSON run configuration: parsing, validation, serialization and sweeps.

Schema (all keys optional except none; unknown keys are rejected):

    problem        "quadratic" | "hyperrep" | {"type": ..., <spec fields>}
    estimator      "aggitd" | "aid" | "local"
    K, N, T        integers (N, T default from the condition number)
    lambda         Neumann stepsize; must satisfy lambda <= min{10, 1/L_g}
    alpha, beta    stepsizes; beta must satisfy beta <= min{1, lambda, 1/(6 L_g)}
    tau            local step count (int or per-client list)
    participation  ratio in (0, 1]
    hetero         heterogeneity scale in [0, 1] (quadratic)
    noise          {"mode": "finite-sum"|"additive-gaussian", "spread": s, "std": s}
    seed, eval_every, out_dir

Unset stepsizes are filled by the condition-number-guided defaults at parse
time so a parsed config is fully concrete and round-trips exactly.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import os

from .drivers import (ESTIMATOR_AGGITD, RunConfig, default_N,
                      default_stepsizes, run)
from .errors import ConfigError, ParameterError
from .hyperrep import HyperRepSpec
from .problems import NOISE_FINITE_SUM, NOISE_GAUSSIAN, ProblemConstants
from .quadratic import QuadraticSpec
from .reporting import export_csv

CONFIG_KEYS = {"problem", "estimator", "K", "N", "T", "lambda", "alpha", "beta",
               "tau", "participation", "hetero", "noise", "seed", "eval_every",
               "out_dir"}


def _problem_spec(doc: dict):
    raw = doc.get("problem", "quadratic")
    if isinstance(raw, str):
        raw = {"type": raw}
    if not isinstance(raw, dict):
        raise ConfigError("problem must be a string or an object")
    kind = raw.get("type", "quadratic")
    fields = {k: v for k, v in raw.items() if k != "type"}
    if "hetero" in doc:
        fields["hetero"] = doc["hetero"]
    if "noise" in doc:
        noise = doc["noise"]
        if not isinstance(noise, dict):
            raise ConfigError("noise must be an object with mode/spread/std")
        mode = noise.get("mode", NOISE_FINITE_SUM)
        if mode not in (NOISE_FINITE_SUM, NOISE_GAUSSIAN):
            raise ConfigError(f"unknown noise mode {mode!r}")
        fields["noise_mode"] = mode
        if "spread" in noise:
            fields["noise_spread"] = float(noise["spread"])
        if "std" in noise:
            fields["noise_std"] = float(noise["std"])
    if kind == "quadratic":
        fields.setdefault("seed", doc.get("seed", 0))
        try:
            return QuadraticSpec(**fields)
        except TypeError as exc:
            raise ConfigError(f"bad quadratic problem field: {exc}") from exc
    if kind == "hyperrep":
        fields.pop("noise_mode", None)
        fields.pop("noise_spread", None)
        fields.pop("noise_std", None)
        fields.pop("hetero", None)
        fields.pop("seed", None)
        try:
            return HyperRepSpec(**fields)
        except TypeError as exc:
            raise ConfigError(f"bad hyperrep problem field: {exc}") from exc
    raise ConfigError(f"unknown problem type {kind!r}")


def _declared_constants(spec) -> ProblemConstants:
    if isinstance(spec, QuadraticSpec):
        return ProblemConstants(mu=spec.mu, L_g=spec.L_g)
    # nominal hyperrep bound; exact instance constants depend on the data draw
    return ProblemConstants(mu=spec.ridge, L_g=spec.ridge + 8.0)


def config_from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    spec = _problem_spec(doc)
    constants = _declared_constants(spec)
    K = int(doc.get("K", 100))
    if K < 0:
        raise ConfigError("K must be >= 0")
    N = doc.get("N")
    N = int(N) if N is not None else default_N(constants)
    T = doc.get("T")
    T = int(T) if T is not None else max(1, N)
    if N < 0 or T < 1:
        raise ConfigError("need N >= 0 and T >= 1")

    lam_d, alpha_d, beta_d = default_stepsizes(constants, K, N)
    lam = float(doc.get("lambda", lam_d))
    alpha = float(doc.get("alpha", alpha_d))
    beta = float(doc.get("beta", beta_d))
    lam_cap = min(10.0, 1.0 / constants.L_g)
    if lam <= 0 or lam > lam_cap * (1 + 1e-12):
        raise ConfigError(f"lambda={lam} violates cap min{{10, 1/L_g}}={lam_cap}")
    beta_cap = min(1.0, lam, 1.0 / (6.0 * constants.L_g))
    if beta <= 0 or beta > beta_cap * (1 + 1e-12):
        raise ConfigError(f"beta={beta} violates cap min{{1, lambda, 1/(6 L_g)}}={beta_cap}")
    if alpha <= 0:
        raise ConfigError("alpha must be positive")

    tau = doc.get("tau", 1)
    taus = tau if isinstance(tau, list) else [tau]
    if any(int(t) < 1 for t in taus):
        raise ConfigError("every tau_i must be >= 1")
    participation = float(doc.get("participation", 1.0))
    if not 0.0 < participation <= 1.0:
        raise ConfigError("participation must lie in (0, 1]")
    eval_every = int(doc.get("eval_every", 1))
    if eval_every < 1:
        raise ConfigError("eval_every must be >= 1")
    estimator = doc.get("estimator", ESTIMATOR_AGGITD)

    try:
        return RunConfig(problem=spec, estimator=estimator, K=K, N=N, T=T,
                         lam=lam, alpha=alpha, beta=beta,
                         tau=tau if isinstance(tau, list) else int(tau),
                         participation=participation,
                         seed=int(doc.get("seed", 0)), eval_every=eval_every,
                         out_dir=doc.get("out_dir"))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> RunConfig:
    """Load and validate a JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed config {path}: {exc.msg} at line {exc.lineno} column {exc.colno}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(doc)


def serialize_config(cfg: RunConfig) -> dict:
    """Concrete JSON document; parse(serialize(cfg)) == cfg."""
    if isinstance(cfg.problem, QuadraticSpec):
        pf = dataclasses.asdict(cfg.problem)
        noise = {"mode": pf.pop("noise_mode"), "spread": pf.pop("noise_spread"),
                 "std": pf.pop("noise_std")}
        hetero = pf.pop("hetero")
        # the instance seed stays inside the problem object: it may legitimately
        # differ from the run seed when set explicitly
        doc_problem = {"type": "quadratic", **pf}
    else:
        doc_problem = {"type": "hyperrep", **dataclasses.asdict(cfg.problem)}
        noise = None
        hetero = None
    doc = {
        "problem": doc_problem,
        "estimator": cfg.estimator,
        "K": cfg.K, "N": cfg.N, "T": cfg.T,
        "lambda": cfg.lam, "alpha": cfg.alpha, "beta": cfg.beta,
        "tau": cfg.tau if isinstance(cfg.tau, int) else list(cfg.tau),
        "participation": cfg.participation,
        "seed": cfg.seed, "eval_every": cfg.eval_every,
    }
    if hetero is not None:
        doc["hetero"] = hetero
    if noise is not None:
        doc["noise"] = noise
    if cfg.out_dir is not None:
        doc["out_dir"] = cfg.out_dir
    return doc


def apply_overrides(doc: dict, overrides: dict) -> dict:
    """Merge --set style overrides into a raw config document."""
    out = dict(doc)
    for key, value in overrides.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        out[key] = value
    return out


def parse_set_args(pairs) -> dict:
    """Parse key=value strings; values are JSON when possible, else strings."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def sweep(base_doc: dict, grid: dict, out_dir, overrides: dict | None = None) -> dict:
    """Run the Cartesian product of grid overrides; one CSV per cell.

    Returns the cell -> file index, which is also written last as index.json.
    Seeds stay fixed across cells unless the grid itself varies them.
    """
    if not grid:
        raise ParameterError("sweep grid must be nonempty")
    overrides = overrides or {}
    clash = set(grid) & set(overrides)
    if clash:
        raise ParameterError(f"grid keys conflict with overrides: {sorted(clash)}")
    for key in grid:
        if key not in CONFIG_KEYS:
            raise ParameterError(f"unknown grid key {key!r}")

    os.makedirs(out_dir, exist_ok=True)
    keys = sorted(grid)
    index = {}
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = {k: v for k, v in zip(keys, combo)}
        doc = apply_overrides(apply_overrides(base_doc, overrides), cell)
        cfg = config_from_dict(doc)
        label = "__".join(f"{k}={json.dumps(v)}" for k, v in cell.items())
        fname = "run__" + label.replace('"', "").replace(" ", "") + ".csv"
        report = run(cfg)
        export_csv(report, os.path.join(out_dir, fname))
        index[label] = fname
    with open(os.path.join(out_dir, "index.json"), "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
    return index
