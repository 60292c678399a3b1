"""Self-check battery behind the `verify` CLI subcommand.

Each check pairs a library code path with an algorithmically independent
oracle and reports one pass/fail line. This is a quick smoke battery; the
full criteria live in the test suite.
"""

from __future__ import annotations

import tempfile

import numpy as np

from .drivers import RunConfig, run_fbo_aggitd, run_fednest_baseline
from .hypergrad import (AggITDConfig, aggitd, dense_hessiv,
                        expected_aggitd_indirect)
from .lower import LowerStepConfig, one_round_lower
from .oracle import fd_hypergradient
from .quadratic import QuadraticProblem, QuadraticSpec, make_quadratic
from .reporting import export_csv
from .rng import RngStream
from .runtime import CommLedger


def _check_fd(seed):
    spec = QuadraticSpec(d1=4, d2=4, m=3, hetero=0.4, seed=seed)
    inst = make_quadratic(spec)
    gen = RngStream(seed).child("fd").generator()
    worst = 0.0
    for _ in range(20):
        x = gen.normal(size=spec.d1)
        a = inst.hypergradient(x)
        b = fd_hypergradient(inst, x)
        worst = max(worst, np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
    return worst <= 1e-5, f"max rel err {worst:.2e} (tol 1e-5)"


def _check_dense_vs_neumann(seed):
    inst = make_quadratic(QuadraticSpec(d2=6, d1=3, m=2, seed=seed))
    gen = RngStream(seed).child("neumann").generator()
    v = gen.normal(size=6)
    lam = 1.0 / inst.L_g
    s = v.copy()
    acc = v.copy()
    for _ in range(1, 500):
        s = s - lam * (inst.A_bar @ s)
        acc += s
    series = lam * acc
    direct = dense_hessiv(inst, np.zeros(3), np.zeros(6), v)
    rel = np.linalg.norm(series - direct) / np.linalg.norm(direct)
    return rel <= 1e-6, f"series vs factorization rel err {rel:.2e} (tol 1e-6)"


def _check_fixed_point(seed):
    spec = QuadraticSpec(d1=3, d2=3, m=3, hetero=0.5, noise_spread=0.0, seed=seed)
    inst = make_quadratic(spec)
    problem = QuadraticProblem(inst)
    x = np.ones(3)
    ys = inst.y_star(x)
    cfg = LowerStepConfig(beta=1.0 / (6 * inst.L_g), tau=3)
    y1 = one_round_lower(problem, x, ys, np.zeros(3), cfg, range(3),
                         RngStream(seed).child("fp"), CommLedger())
    err = float(np.linalg.norm(y1 - ys))
    return err <= 1e-12, f"noise-off svrg fixed point drift {err:.2e}"


def _check_q_identity(seed):
    spec = QuadraticSpec(d1=4, d2=4, m=3, hetero=0.3, noise_spread=0.0, seed=seed)
    inst = make_quadratic(spec)
    problem = QuadraticProblem(inst)
    N = 6
    lam = 1.0 / inst.L_g
    cfg = AggITDConfig(lam=lam, N=N, lower=LowerStepConfig(beta=1 / (6 * inst.L_g), tau=2))
    x = np.ones(4)
    y0 = np.zeros(4)
    acc = None
    trace = None
    for Q in range(N + 1):
        _, _, trace = aggitd(problem, x, y0, cfg, range(3), RngStream(seed), CommLedger(),
                             q_override=Q)
        acc = trace.h_indirect if acc is None else acc + trace.h_indirect
    mean_ind = acc / (N + 1)
    expected = expected_aggitd_indirect(inst, x, trace.y_iterates, lam, N)
    err = float(np.max(np.abs(mean_ind - expected)))
    return err <= 1e-12, f"Q-enumerated mean vs expectation {err:.2e} (tol 1e-12)"


def _check_rounds(seed):
    spec = QuadraticSpec(d1=3, d2=3, m=3, seed=seed)
    cfg = RunConfig(problem=spec, K=2, N=4, T=3, eval_every=1, seed=seed)
    rep_a = run_fbo_aggitd(cfg)
    rep_b = run_fednest_baseline(cfg)
    ok_a = all(r == 2 * 4 + 3 and l == 1 for r, l in rep_a.outer_history)
    ok_b = all(r == 2 * 4 + 3 + 3 and l == 2 for r, l in rep_b.outer_history)
    return ok_a and ok_b, (f"per-outer rounds/loops: fused {rep_a.outer_history[0]}, "
                           f"baseline {rep_b.outer_history[0]}")


def _check_determinism(seed):
    spec = QuadraticSpec(d1=3, d2=3, m=2, seed=seed)
    cfg = RunConfig(problem=spec, K=3, seed=seed)
    bufs = []
    for _ in range(2):
        rep = run_fbo_aggitd(cfg)
        with tempfile.NamedTemporaryFile(suffix=".csv") as tmp:
            export_csv(rep, tmp.name)
            tmp.seek(0)
            bufs.append(tmp.read())
    return bufs[0] == bufs[1], f"{len(bufs[0])} bytes, identical={bufs[0] == bufs[1]}"


CHECKS = [
    ("hypergradient-vs-finite-differences", _check_fd),
    ("dense-solve-vs-neumann-series", _check_dense_vs_neumann),
    ("lower-solver-fixed-point", _check_fixed_point),
    ("chain-seed-enumeration-identity", _check_q_identity),
    ("communication-round-accounting", _check_rounds),
    ("run-determinism", _check_determinism),
]


def run_verification(seed: int = 0):
    """Run all checks; returns [(name, passed, detail)]."""
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
