"""Federated hypergradient estimators.

Three estimators of the hypergradient of f(x) = mean_i f_i(x, y*(x)):

* ``aggitd`` -- the fused estimator. A single loop over t = 0..N both runs the
  federated lower-level updates and builds the Hessian-inverse-vector chain,
  seeding the chain at a uniformly random iterate index Q and piggybacking the
  chain payloads on the gradient rounds. Costs 2N+2 rounds (the upper round
  elsewhere completes 2N+3 per outer iteration).
* ``aid_fhe`` -- the two-loop baseline: a Neumann chain of T rounds built at
  the finished lower iterate y^N, of which a uniformly random prefix length
  T' is used. Costs T+2 rounds on top of the caller's 2N lower rounds.
* ``local_fhe`` -- each client builds its Hessian-inverse-vector product from
  its own curvature and upper gradient only; one round for the final average.
  Biased under heterogeneity, which is exactly what it is here to demonstrate.

Deterministic expectation helpers (``expected_*``) compute the exact
conditional means of these estimators on quadratic instances, for tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError, UnsupportedProblemError
from .lower import LowerStepConfig, one_round_lower
from .problems import BilevelProblem, Point, ProblemConstants
from .quadratic import QuadraticInstance
from .rng import RngStream
from .runtime import CommLedger, aggregate_mean

_CAP_TOL = 1.0 + 1e-12


def _check_lambda(lam: float, constants: ProblemConstants) -> None:
    cap = min(10.0, 1.0 / constants.L_g)
    if lam <= 0 or lam > cap * _CAP_TOL:
        raise ParameterError(f"lambda={lam} violates cap min{{10, 1/L_g}}={cap}")


def _check_beta(beta: float, lam: float, constants: ProblemConstants) -> None:
    cap = min(1.0, lam, 1.0 / (6.0 * constants.L_g))
    if beta > cap * _CAP_TOL:
        raise ParameterError(f"beta={beta} violates cap min{{1, lambda, 1/(6 L_g)}}={cap}")


@dataclass(frozen=True)
class AggITDConfig:
    """Neumann stepsize lambda, lower-loop length N and the lower-step config."""

    lam: float
    N: int
    lower: LowerStepConfig

    def __post_init__(self):
        if self.N < 0:
            raise ParameterError("N must be >= 0")


@dataclass(frozen=True)
class AidConfig:
    """Baseline knobs: Neumann budget T (chain length), lower loop length N."""

    lam: float
    N: int
    T: int
    lower: LowerStepConfig

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError("T must be >= 1")
        if self.N < 0:
            raise ParameterError("N must be >= 0")


@dataclass
class EstimatorTrace:
    """Diagnostic record of one fused-estimator evaluation.

    Invariants: p = lambda*(N+1)*z_final and h = h_direct - h_indirect.
    """

    Q: int
    y_iterates: list
    z_final: np.ndarray
    p: np.ndarray
    h_direct: np.ndarray
    h_indirect: np.ndarray
    h_indirect_clients: dict

    def to_json_dict(self) -> dict:
        return {
            "Q": self.Q,
            "y_iterates": [np.asarray(v).tolist() for v in self.y_iterates],
            "z_final": np.asarray(self.z_final).tolist(),
            "p": np.asarray(self.p).tolist(),
            "h_direct": np.asarray(self.h_direct).tolist(),
            "h_indirect": np.asarray(self.h_indirect).tolist(),
            "h_indirect_clients": {str(i): np.asarray(v).tolist()
                                   for i, v in self.h_indirect_clients.items()},
        }


def aggitd(problem: BilevelProblem, x: np.ndarray, y: np.ndarray,
           cfg: AggITDConfig, participants: Sequence[int], rng: RngStream,
           ledger: CommLedger, q_override: int | None = None):
    """Fused lower-level optimization + hypergradient estimation (one loop).

    Returns (h_tilde, y_N, trace). Charges exactly 2N+2 rounds: per t a single
    gradient round with the chain payloads piggybacked, a One-Round-Lower
    iterate round for t <= N-1, and one final round aggregating the per-client
    estimates. q_override pins the chain-seeding index Q for enumeration tests.
    """
    _check_lambda(cfg.lam, problem.constants)
    _check_beta(cfg.lower.beta, cfg.lam, problem.constants)
    N, lam = cfg.N, cfg.lam
    if q_override is not None:
        if not 0 <= q_override <= N:
            raise ParameterError(f"q_override={q_override} outside {{0..{N}}}")
        Q = int(q_override)
    else:
        Q = int(rng.child("Q").generator().integers(0, N + 1))

    ledger.begin_loop()
    y_t = np.asarray(y, dtype=float)
    y_iterates = [y_t]
    z = None
    for t in range(N + 1):
        point = Point(x, y_t)
        payloads = {}
        for i in participants:
            parts = []
            if t <= N - 1:
                parts.append(problem.grad_lower_y(i, point, rng.child(i, "zeta_q", t)))
            if t == Q:
                parts.append(problem.grad_upper_y(i, point, rng.child(i, "xi_r", t)))
            elif t >= Q + 1:
                hv = problem.hvp_lower_yy(i, point, z, rng.child(i, "u", t))
                parts.append(z - lam * hv)
            payloads[i] = parts
        means = aggregate_mean(payloads, ledger)
        j = 0
        if t <= N - 1:
            q_t = means[j]
            j += 1
        if t >= Q:
            z = means[j]
        if t <= N - 1:
            y_t = one_round_lower(problem, x, y_t, q_t, cfg.lower,
                                  participants, rng.child("lower", t), ledger)
            y_iterates.append(y_t)

    p = lam * (N + 1) * z
    point = Point(x, y_t)
    payloads = {}
    indirect_clients = {}
    for i in participants:
        direct = problem.grad_upper_x(i, point, rng.child(i, "xi_h"))
        indirect = problem.jvp_lower_xy(i, point, p, rng.child(i, "chi"))
        indirect_clients[i] = indirect
        payloads[i] = [direct, indirect]
    h_direct, h_indirect = aggregate_mean(payloads, ledger)

    trace = EstimatorTrace(Q=Q, y_iterates=y_iterates, z_final=z, p=p,
                           h_direct=h_direct, h_indirect=h_indirect,
                           h_indirect_clients=indirect_clients)
    return h_direct - h_indirect, y_t, trace


def aid_fhe(problem: BilevelProblem, x: np.ndarray, y_N: np.ndarray,
            cfg: AidConfig, participants: Sequence[int], rng: RngStream,
            ledger: CommLedger, t_prime_override: int | None = None) -> np.ndarray:
    """Two-loop baseline estimator evaluated at the finished lower iterate.

    Builds p_0 = lambda*T * mean_i grad_y F_i, then the full T-round chain
    p_t = (I - lambda * mean_i H_i) p_{t-1}; the estimate uses p_{T'} with
    T' uniform in {0..T-1}. The full chain is always executed so the round
    bill is the deterministic T+2 this call charges.
    """
    _check_lambda(cfg.lam, problem.constants)
    T, lam = cfg.T, cfg.lam
    if t_prime_override is not None:
        if not 0 <= t_prime_override < T:
            raise ParameterError(f"t_prime_override={t_prime_override} outside {{0..{T - 1}}}")
        T_prime = int(t_prime_override)
    else:
        T_prime = int(rng.child("T_prime").generator().integers(0, T))

    ledger.begin_loop()
    point = Point(x, np.asarray(y_N, dtype=float))
    r = aggregate_mean({i: problem.grad_upper_y(i, point, rng.child(i, "xi0"))
                        for i in participants}, ledger)
    p = lam * T * r
    chain = [p]
    for t in range(1, T + 1):
        p = aggregate_mean({i: p - lam * problem.hvp_lower_yy(i, point, p, rng.child(i, "zeta_h", t))
                            for i in participants}, ledger)
        chain.append(p)
    p_sel = chain[T_prime]

    payloads = {}
    for i in participants:
        direct = problem.grad_upper_x(i, point, rng.child(i, "xi_h"))
        indirect = problem.jvp_lower_xy(i, point, p_sel, rng.child(i, "chi"))
        payloads[i] = [direct, indirect]
    h_direct, h_indirect = aggregate_mean(payloads, ledger)
    return h_direct - h_indirect


def local_fhe(problem: BilevelProblem, x: np.ndarray, y_N: np.ndarray,
              cfg: AidConfig, rng: RngStream | None = None,
              participants: Sequence[int] | None = None,
              ledger: CommLedger | None = None) -> np.ndarray:
    """Fully local estimator: per-client Neumann chain from local curvature only.

    With rng=None the exact truncated recursion on noise-off oracles is used.
    No cross-client second-order aggregation happens; only the final average
    costs a round.
    """
    _check_lambda(cfg.lam, problem.constants)
    T, lam = cfg.T, cfg.lam
    if participants is None:
        participants = range(problem.m)
    if ledger is None:
        ledger = CommLedger()
    point = Point(x, np.asarray(y_N, dtype=float))
    payloads = {}
    for i in participants:
        def stream(tag, *idx):
            return None if rng is None else rng.child(i, tag, *idx)
        r = problem.grad_upper_y(i, point, stream("xi0"))
        s = r.copy()
        acc = r.copy()
        for j in range(1, T):
            s = s - lam * problem.hvp_lower_yy(i, point, s, stream("zeta_h", j))
            acc += s
        p_i = lam * acc
        payloads[i] = problem.grad_upper_x(i, point, stream("xi_h")) \
            - problem.jvp_lower_xy(i, point, p_i, stream("chi"))
    return aggregate_mean(payloads, ledger)


def dense_hessiv(inst: QuadraticInstance, x: np.ndarray, y: np.ndarray,
                 v: np.ndarray) -> np.ndarray:
    """Reference Hessian-inverse-vector solve by direct symmetric factorization."""
    if not isinstance(inst, QuadraticInstance):
        raise UnsupportedProblemError("dense_hessiv needs a quadratic instance")
    return inst.solve_A_bar(np.asarray(v, dtype=float))


# -- deterministic expectation helpers (testing oracles) ----------------------

def expected_aggitd_indirect(inst: QuadraticInstance, x: np.ndarray,
                             y_iterates: Sequence[np.ndarray], lam: float,
                             N: int) -> np.ndarray:
    """Exact conditional mean of the fused estimator's indirect part.

    Given the iterate trajectory y^0..y^N, averages the chain over the seeding
    index analytically:
        lam * Bbar^T * sum_Q prod_{t=N..Q+1} (I - lam*Abar) * grad_y f(x, y^Q).
    """
    if len(y_iterates) != N + 1:
        raise ParameterError(f"need N+1={N + 1} iterates, got {len(y_iterates)}")
    Ident = np.eye(inst.d2)
    factor = Ident - lam * inst.A_bar
    S = np.zeros(inst.d2)
    M = Ident
    for Qi in range(N, -1, -1):
        S = S + M @ inst.grad_upper_y_exact(x, y_iterates[Qi])
        if Qi > 0:
            M = M @ factor
    return lam * inst.B_bar.T @ S


def expected_aid_hessiv(inst: QuadraticInstance, x: np.ndarray,
                        y_N: np.ndarray, lam: float, T: int) -> np.ndarray:
    """T'-marginalized baseline chain: lam * sum_{j<T} (I - lam*Abar)^j grad_y f."""
    v = inst.grad_upper_y_exact(x, y_N)
    s = v.copy()
    acc = v.copy()
    for _ in range(1, T):
        s = s - lam * (inst.A_bar @ s)
        acc += s
    return lam * acc


def expected_aid_fhe(inst: QuadraticInstance, x: np.ndarray, y_N: np.ndarray,
                     lam: float, T: int) -> np.ndarray:
    """Exact mean of the baseline estimator (noise off, T' marginalized)."""
    hiv = expected_aid_hessiv(inst, x, y_N, lam, T)
    return inst.grad_upper_x_exact(x, y_N) - inst.B_bar.T @ hiv


def expected_local_fhe(inst: QuadraticInstance, x: np.ndarray, y: np.ndarray,
                       lam: float | None = None, T: int | None = None) -> np.ndarray:
    """Exact mean of the fully local estimator; T=None gives the exact-inverse limit."""
    vals = []
    for cd in inst.clients:
        gy = y - cd.d
        if T is None:
            hiv = np.linalg.solve(cd.A, gy)
        else:
            s = gy.copy()
            acc = gy.copy()
            for _ in range(1, T):
                s = s - lam * (cd.A @ s)
                acc += s
            hiv = lam * acc
        vals.append(cd.rho_x * x + cd.e - cd.B.T @ hiv)
    return np.mean(vals, axis=0)
