"""Desk-scale hyper-representation task: linear embedding over a logistic head.

Upper variable x = vec(E) is a linear embedding (embed_dim x feature_dim)
trained on each client's held-out split; lower variable y = vec(H) is a
ridge-regularized multinomial logistic head (classes x embed_dim) trained on
the client's training split. The ridge makes every per-sample lower objective
ridge-strongly-convex in y. All second-order products (Hessian-vector in the
head, mixed partial mapping head directions to embedding space) are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .problems import BilevelProblem, ProblemConstants
from .rng import RngStream

PARTITION_IID = "iid"
PARTITION_LABEL_SKEW = "label-skew"


@dataclass(frozen=True)
class HyperRepSpec:
    embed_dim: int = 4
    feature_dim: int = 8
    classes: int = 3
    ridge: float = 0.1
    partition: str = PARTITION_IID
    shards_per_client: int = 1
    m: int = 4
    n_points: int = 240
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.ridge <= 0:
            raise ParameterError("ridge must be > 0 for a strongly convex head objective")


def partition(labels: np.ndarray, mode: str, m: int, seed: int,
              shards_per_client: int = 1) -> list[np.ndarray]:
    """Split dataset indices across m clients; disjoint lists covering everything."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if m > n:
        raise ParameterError(f"cannot split {n} points across {m} clients")
    gen = RngStream(seed).child("partition", mode).generator()
    if mode == PARTITION_IID:
        perm = gen.permutation(n)
        return [np.sort(part) for part in np.array_split(perm, m)]
    if mode == PARTITION_LABEL_SKEW:
        k = shards_per_client
        n_shards = m * k
        if n_shards > n:
            raise ParameterError(f"{m} clients x {k} shards exceed {n} points")
        order = np.lexsort((np.arange(n), labels))  # by label, ties by index
        shards = np.array_split(order, n_shards)
        assignment = gen.permutation(n_shards)
        return [np.sort(np.concatenate([shards[s] for s in assignment[i * k:(i + 1) * k]]))
                for i in range(m)]
    raise ParameterError(f"unknown partition mode {mode!r}")


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class HyperRepProblem(BilevelProblem):
    """Oracle bundle over the synthetic mixture data.

    Stochasticity is finite-sum only: each oracle call draws batch indices
    from the relevant split (training split for lower-level quantities,
    held-out split for upper-level ones).
    """

    def __init__(self, U: np.ndarray, labels: np.ndarray,
                 train_idx: list[np.ndarray], val_idx: list[np.ndarray],
                 test_idx: np.ndarray, spec: HyperRepSpec, batch_size: int = 8,
                 seed: int = 0):
        p, f, C = spec.embed_dim, spec.feature_dim, spec.classes
        # declared constants on a nominal region ||E||_2 <= 2
        u_max = float(np.max(np.linalg.norm(U, axis=1)))
        L_g = spec.ridge + 0.5 * (2.0 * u_max) ** 2
        constants = ProblemConstants(mu=spec.ridge, L_g=L_g, L_f=L_g, M=0.0)
        super().__init__(m=len(train_idx), d1=p * f, d2=C * p,
                         constants=constants, batch_size=batch_size)
        self.U = U
        self.labels = labels
        self.train_idx = train_idx
        self.val_idx = val_idx
        self.test_idx = test_idx
        self.spec = spec
        self.seed = seed

    def initial_point(self):
        # the origin is a stationary saddle of the bilinear embedding/head pair,
        # so start from a small seeded embedding with a zero head
        gen = RngStream(self.seed).child("init").generator()
        p, f = self.spec.embed_dim, self.spec.feature_dim
        x0 = (0.5 / np.sqrt(f)) * gen.normal(size=p * f)
        return x0, np.zeros(self.d2)

    # vec conventions: y -> H (C, p) row-major, x -> E (p, f) row-major
    def _unpack(self, x, y):
        p, f, C = self.spec.embed_dim, self.spec.feature_dim, self.spec.classes
        return x.reshape(p, f), y.reshape(C, p)

    def _batch(self, idx_pool, gen):
        if gen is None:
            return idx_pool
        k = min(self.batch_size, idx_pool.shape[0])
        if k >= idx_pool.shape[0]:
            return idx_pool
        return np.sort(gen.choice(idx_pool, size=k, replace=False))

    def _per_point(self, E, H, idx):
        Us = self.U[idx]                       # (b, f)
        Z = Us @ E.T                           # (b, p)
        P = _softmax_rows(Z @ H.T)             # (b, C)
        R = P.copy()
        R[np.arange(len(idx)), self.labels[idx]] -= 1.0   # residuals pi - onehot
        return Us, Z, P, R

    def _grad_lower_y(self, client, x, y, gen):
        E, H = self._unpack(x, y)
        idx = self._batch(self.train_idx[client], gen)
        Us, Z, P, R = self._per_point(E, H, idx)
        G = R.T @ Z / len(idx)                 # (C, p)
        return G.reshape(-1) + self.spec.ridge * y

    def _grad_upper_y(self, client, x, y, gen):
        E, H = self._unpack(x, y)
        idx = self._batch(self.val_idx[client], gen)
        Us, Z, P, R = self._per_point(E, H, idx)
        return (R.T @ Z / len(idx)).reshape(-1)

    def _grad_upper_x(self, client, x, y, gen):
        E, H = self._unpack(x, y)
        idx = self._batch(self.val_idx[client], gen)
        Us, Z, P, R = self._per_point(E, H, idx)
        return ((R @ H).T @ Us / len(idx)).reshape(-1)

    def _hvp_lower_yy(self, client, x, y, v, gen):
        E, H = self._unpack(x, y)
        V = v.reshape(H.shape)
        idx = self._batch(self.train_idx[client], gen)
        Us, Z, P, R = self._per_point(E, H, idx)
        W = Z @ V.T                            # (b, C): V z_j rows
        DW = P * W - P * (P * W).sum(axis=1, keepdims=True)   # D_j (V z_j)
        out = DW.T @ Z / len(idx)
        return out.reshape(-1) + self.spec.ridge * v

    def _jvp_lower_xy(self, client, x, y, v, gen):
        E, H = self._unpack(x, y)
        V = v.reshape(H.shape)
        idx = self._batch(self.train_idx[client], gen)
        Us, Z, P, R = self._per_point(E, H, idx)
        W = Z @ V.T
        DW = P * W - P * (P * W).sum(axis=1, keepdims=True)
        term = DW @ H + R @ V                  # (b, p): H^T D V z + V^T (pi - e)
        return (term.T @ Us / len(idx)).reshape(-1)

    # -- evaluation helpers --------------------------------------------------

    def upper_value(self, x, y, idx=None) -> float:
        """Mean cross-entropy of the head on the pooled held-out split."""
        E, H = self._unpack(x, y)
        if idx is None:
            idx = np.concatenate(self.val_idx)
        Us = self.U[idx]
        logits = (Us @ E.T) @ H.T
        z = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        return float(np.mean(lse - z[np.arange(len(idx)), self.labels[idx]]))

    def accuracy(self, x, y) -> float:
        E, H = self._unpack(x, y)
        Us = self.U[self.test_idx]
        pred = ((Us @ E.T) @ H.T).argmax(axis=1)
        return float(np.mean(pred == self.labels[self.test_idx]))


def make_hyperrep(spec: HyperRepSpec, seed: int, batch_size: int = 8) -> HyperRepProblem:
    """Generate the Gaussian-mixture dataset and partition it across clients."""
    root = RngStream(seed).child("make_hyperrep")
    gen = root.generator()
    C, f = spec.classes, spec.feature_dim
    centers = 2.0 * gen.normal(size=(C, f))
    labels = np.arange(spec.n_points) % C
    labels = labels[gen.permutation(spec.n_points)]
    U = centers[labels] + gen.normal(size=(spec.n_points, f))

    n_test = int(spec.test_fraction * spec.n_points)
    test_idx = np.arange(spec.n_points - n_test, spec.n_points)
    pool = np.arange(spec.n_points - n_test)

    client_idx = partition(labels[pool], spec.partition, spec.m, seed,
                           shards_per_client=spec.shards_per_client)
    train_idx, val_idx = [], []
    for i, idx in enumerate(client_idx):
        if idx.size < 2:
            raise ParameterError("each client needs at least 2 points for train/val halves")
        cg = root.child("split", i).generator()
        perm = cg.permutation(idx)
        half = idx.size // 2
        train_idx.append(np.sort(pool[perm[:half]]))
        val_idx.append(np.sort(pool[perm[half:]]))
    return HyperRepProblem(U, labels, train_idx, val_idx, test_idx, spec,
                           batch_size=batch_size, seed=seed)


def solve_head_exact(problem: HyperRepProblem, x: np.ndarray,
                     tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Newton solve of the aggregate (full participation, full batch) head problem."""
    d2 = problem.d2
    y = np.zeros(d2)
    from .problems import Point
    for _ in range(max_iter):
        pt = Point(x, y)
        g = problem.agg_grad_lower_y(pt)
        if np.linalg.norm(g) <= tol:
            break
        Hd = np.column_stack([problem.agg_hvp_lower_yy(pt, e)
                              for e in np.eye(d2)])
        y = y - np.linalg.solve(Hd, g)
    return y


def hypergradient_numeric(problem: HyperRepProblem, x: np.ndarray) -> np.ndarray:
    """Implicit-function hypergradient with Newton-solved head and dense HessIV."""
    from .problems import Point
    y = solve_head_exact(problem, x)
    pt = Point(x, y)
    Hd = np.column_stack([problem.agg_hvp_lower_yy(pt, e) for e in np.eye(problem.d2)])
    w = np.linalg.solve(Hd, problem.agg_grad_upper_y(pt))
    return problem.agg_grad_upper_x(pt) - problem.agg_jvp_lower_xy(pt, w)
