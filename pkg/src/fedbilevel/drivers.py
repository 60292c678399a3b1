"""Outer-loop solvers: the fused-estimator driver and the two-loop baseline.

Each outer iteration runs the hypergradient estimator, then a local SVRG-type
upper phase (One-Round-Upper), warm-starting the next iteration's lower
variable at the estimator's final lower iterate. Communication per outer
iteration: 2N+3 rounds / 1 loop for the fused driver, 2N+T+3 rounds / 2 loops
for the baseline. Metrics rows use exact noise-off oracles over the full
client set regardless of the participation ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergenceError, ParameterError
from .hypergrad import AggITDConfig, AidConfig, aggitd, aid_fhe, local_fhe
from .hyperrep import (HyperRepSpec, hypergradient_numeric, make_hyperrep,
                       solve_head_exact)
from .lower import LowerStepConfig, one_round_lower
from .problems import BilevelProblem, Point, ProblemConstants
from .quadratic import QuadraticProblem, QuadraticSpec, make_problem
from .rng import RngStream
from .runtime import CommLedger, Participation, aggregate_mean, select_participants

DIVERGENCE_NORM = 1e8

ESTIMATOR_AGGITD = "aggitd"
ESTIMATOR_AID = "aid"
ESTIMATOR_LOCAL = "local"


def default_N(constants: ProblemConstants) -> int:
    return max(1, math.ceil(constants.kappa_g))


def default_stepsizes(constants: ProblemConstants, K: int, N: int | None = None,
                      alpha_bar: float | None = None) -> tuple[float, float, float]:
    """Condition-number-guided defaults: lam = min{10, 1/L_g}, beta at its cap,
    alpha = alpha_bar / sqrt(K) with alpha_bar defaulting to kappa_g^-4."""
    lam = min(10.0, 1.0 / constants.L_g)
    beta = min(1.0, lam, 1.0 / (6.0 * constants.L_g))
    if alpha_bar is None:
        alpha_bar = constants.kappa_g ** -4
    alpha = alpha_bar / math.sqrt(max(K, 1))
    return lam, alpha, beta


@dataclass
class RunConfig:
    """All hyperparameters of a run; None fields are filled from defaults."""

    problem: QuadraticSpec | HyperRepSpec = field(default_factory=QuadraticSpec)
    estimator: str = ESTIMATOR_AGGITD
    K: int = 100
    N: int | None = None
    T: int | None = None
    lam: float | None = None
    alpha: float | None = None
    beta: float | None = None
    alpha_bar: float | None = None
    tau: int | Sequence[int] = 1
    variant: str = "svrg"
    participation: float = 1.0
    seed: int = 0
    eval_every: int = 1
    batch_size: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.K < 0:
            raise ParameterError("K must be >= 0")
        if self.eval_every < 1:
            raise ParameterError("eval_every must be >= 1")
        if self.estimator not in (ESTIMATOR_AGGITD, ESTIMATOR_AID, ESTIMATOR_LOCAL):
            raise ParameterError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class MetricsRecord:
    k: int
    rounds_cum: int
    grad_norm_sq: float
    lower_gap: float
    est_err: float
    objective: float
    test_metric: float

    FIELDS = ("k", "rounds_cum", "grad_norm_sq", "lower_gap", "est_err",
              "objective", "test_metric")

    def values(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class RunReport:
    label: str
    rows: list
    final_x: np.ndarray
    final_y: np.ndarray
    rounds_total: int
    loops_total: int
    scalars_sent: int
    outer_history: list

    def column(self, name: str) -> np.ndarray:
        if name not in MetricsRecord.FIELDS:
            raise ParameterError(f"unknown metric {name!r}")
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


class Evaluator:
    """Exact metrics via closed forms (quadratic) or Newton-solved oracles (hyperrep)."""

    def __init__(self, problem: BilevelProblem):
        self.problem = problem
        self.is_quadratic = isinstance(problem, QuadraticProblem)

    def hypergradient(self, x: np.ndarray) -> np.ndarray:
        if self.is_quadratic:
            return self.problem.inst.hypergradient(x)
        return hypergradient_numeric(self.problem, x)

    def record(self, k: int, ledger: CommLedger, x, y, est_err: float) -> MetricsRecord:
        if self.is_quadratic:
            inst = self.problem.inst
            ys = inst.y_star(x)
            gap = float(np.sum((y - ys) ** 2))
            grad = inst.hypergradient(x)
            obj = inst.objective(x)
            test = 0.0
        else:
            ys = solve_head_exact(self.problem, x)
            gap = float(np.sum((y - ys) ** 2))
            grad = hypergradient_numeric(self.problem, x)
            obj = self.problem.upper_value(x, ys)
            test = self.problem.accuracy(x, y)
        return MetricsRecord(k=k, rounds_cum=ledger.rounds_total,
                             grad_norm_sq=float(grad @ grad), lower_gap=gap,
                             est_err=est_err, objective=obj, test_metric=test)


def build_problem(cfg: RunConfig) -> BilevelProblem:
    if isinstance(cfg.problem, QuadraticSpec):
        return make_problem(cfg.problem, batch_size=cfg.batch_size)
    if isinstance(cfg.problem, HyperRepSpec):
        return make_hyperrep(cfg.problem, cfg.seed, batch_size=max(cfg.batch_size, 4))
    raise ParameterError(f"unknown problem spec type {type(cfg.problem).__name__}")


def resolve_params(cfg: RunConfig, constants: ProblemConstants):
    """Fill unset (N, T, lam, alpha, beta) from the condition-number defaults."""
    N = cfg.N if cfg.N is not None else default_N(constants)
    T = cfg.T if cfg.T is not None else max(1, N)
    lam0, alpha0, beta0 = default_stepsizes(constants, cfg.K, N, cfg.alpha_bar)
    lam = cfg.lam if cfg.lam is not None else lam0
    alpha = cfg.alpha if cfg.alpha is not None else alpha0
    beta = cfg.beta if cfg.beta is not None else beta0
    return N, T, lam, alpha, beta


def one_round_upper(problem: BilevelProblem, x: np.ndarray, y_plus: np.ndarray,
                    h: np.ndarray, alpha: float, tau: int | Sequence[int],
                    participants: Sequence[int], rng: RngStream,
                    ledger: CommLedger) -> np.ndarray:
    """Local SVRG-type upper phase: tau_i corrected steps per client from x.

    The anchor gradient at x is re-evaluated per local step with that step's
    own sample (shared with the local term), so a single local step reduces to
    x - alpha*h exactly. Charges one round (the iterate aggregation).
    """
    results = {}
    for i in participants:
        tau_i = int(tau[i]) if isinstance(tau, Sequence) else int(tau)
        if tau_i < 1:
            raise ParameterError("every tau_i must be >= 1")
        alpha_i = alpha / tau_i
        x_i = x
        for v in range(tau_i):
            gen = rng.child(i, "xi_up", v).generator()
            mark = gen.bit_generator.state
            g_anchor = problem.grad_upper_x(i, Point(x, y_plus), gen)
            gen.bit_generator.state = mark  # same sample for the local term
            g_local = problem.grad_upper_x(i, Point(x_i, y_plus), gen)
            x_i = x_i - alpha_i * (h - g_anchor + g_local)
        results[i] = x_i
    return aggregate_mean(results, ledger)


def _guard(k: int, x: np.ndarray, y: np.ndarray) -> None:
    xn, yn = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if not (np.isfinite(xn) and np.isfinite(yn)) or xn > DIVERGENCE_NORM or yn > DIVERGENCE_NORM:
        raise DivergenceError(
            f"iterate diverged at outer iteration {k}: ||x||={xn:.3e}, ||y||={yn:.3e}",
            k=k, x_norm=xn, y_norm=yn)


def run_fbo_aggitd(cfg: RunConfig, problem: BilevelProblem | None = None) -> RunReport:
    """Full fused-estimator run: K outer iterations with warm start."""
    if problem is None:
        problem = build_problem(cfg)
    N, _, lam, alpha, beta = resolve_params(cfg, problem.constants)
    lower_cfg = LowerStepConfig(beta=beta, tau=cfg.tau, variant=cfg.variant)
    acfg = AggITDConfig(lam=lam, N=N, lower=lower_cfg)
    part = Participation(cfg.participation)
    root = RngStream(cfg.seed)
    ledger = CommLedger()
    evaluator = Evaluator(problem)

    x, y = problem.initial_point()
    rows = [evaluator.record(0, ledger, x, y, est_err=0.0)]
    for k in range(cfg.K):
        ledger.start_outer()
        parts = select_participants(part, problem.m, root.child("part", k))
        h, y, _ = aggitd(problem, x, y, acfg, parts, root.child("est", k), ledger)
        x_prev = x
        x = one_round_upper(problem, x, y, h, alpha, cfg.tau, parts,
                            root.child("upper", k), ledger)
        ledger.finish_outer()
        _guard(k, x, y)
        if (k + 1) % cfg.eval_every == 0 or k + 1 == cfg.K:
            err = float(np.linalg.norm(h - evaluator.hypergradient(x_prev)))
            rows.append(evaluator.record(k + 1, ledger, x, y, err))
    return RunReport(label="fbo-aggitd", rows=rows, final_x=x, final_y=y,
                     rounds_total=ledger.rounds_total, loops_total=ledger.loops_total,
                     scalars_sent=ledger.scalars_sent, outer_history=ledger.outer_history)


def run_fednest_baseline(cfg: RunConfig, problem: BilevelProblem | None = None,
                         estimator: str | None = None) -> RunReport:
    """Two-loop baseline: 2N lower rounds, then the AID (or fully local) FHE."""
    if problem is None:
        problem = build_problem(cfg)
    estimator = estimator or (cfg.estimator if cfg.estimator != ESTIMATOR_AGGITD
                              else ESTIMATOR_AID)
    N, T, lam, alpha, beta = resolve_params(cfg, problem.constants)
    lower_cfg = LowerStepConfig(beta=beta, tau=cfg.tau, variant=cfg.variant)
    aid_cfg = AidConfig(lam=lam, N=N, T=T, lower=lower_cfg)
    part = Participation(cfg.participation)
    root = RngStream(cfg.seed)
    ledger = CommLedger()
    evaluator = Evaluator(problem)

    x, y = problem.initial_point()
    rows = [evaluator.record(0, ledger, x, y, est_err=0.0)]
    for k in range(cfg.K):
        ledger.start_outer()
        parts = select_participants(part, problem.m, root.child("part", k))
        scope = root.child("est", k)
        ledger.begin_loop()
        for t in range(N):
            point = Point(x, y)
            q = aggregate_mean({i: problem.grad_lower_y(i, point, scope.child(i, "zeta_q", t))
                                for i in parts}, ledger)
            y = one_round_lower(problem, x, y, q, lower_cfg, parts,
                                scope.child("lower", t), ledger)
        if estimator == ESTIMATOR_AID:
            h = aid_fhe(problem, x, y, aid_cfg, parts, scope.child("aid"), ledger)
        else:
            h = local_fhe(problem, x, y, aid_cfg, rng=scope.child("local"),
                          participants=parts, ledger=ledger)
        x_prev = x
        x = one_round_upper(problem, x, y, h, alpha, cfg.tau, parts,
                            root.child("upper", k), ledger)
        ledger.finish_outer()
        _guard(k, x, y)
        if (k + 1) % cfg.eval_every == 0 or k + 1 == cfg.K:
            err = float(np.linalg.norm(h - evaluator.hypergradient(x_prev)))
            rows.append(evaluator.record(k + 1, ledger, x, y, err))
    label = "fednest" if estimator == ESTIMATOR_AID else "lfednest"
    return RunReport(label=label, rows=rows, final_x=x, final_y=y,
                     rounds_total=ledger.rounds_total, loops_total=ledger.loops_total,
                     scalars_sent=ledger.scalars_sent, outer_history=ledger.outer_history)


def run(cfg: RunConfig) -> RunReport:
    """Dispatch on cfg.estimator: the fused driver or a baseline variant."""
    if cfg.estimator == ESTIMATOR_AGGITD:
        return run_fbo_aggitd(cfg)
    return run_fednest_baseline(cfg)
