"""Anatomy of the fused hypergradient estimator.

Runs one estimator call and inspects its trace, then demonstrates the two
identities the tests lean on: averaging the estimate over every possible
chain-seeding index Q reproduces the analytic conditional expectation, and
with a warm lower iterate the expected estimate converges to the true
hypergradient geometrically in N. Closes with the three-estimator bias
comparison under heterogeneity (the reason aggregation matters).
"""

import numpy as np

from fedbilevel import (AggITDConfig, CommLedger, LowerStepConfig,
                        QuadraticProblem, QuadraticSpec, RngStream, aggitd,
                        expected_aggitd_indirect, expected_aid_fhe,
                        expected_local_fhe, make_quadratic)

spec = QuadraticSpec(d1=4, d2=4, m=4, mu=1.0, L_g=10.0, hetero=0.5,
                     noise_spread=0.1, seed=7)
inst = make_quadratic(spec)
problem = QuadraticProblem(inst)
lam = 1.0 / inst.L_g
beta = 1.0 / (6 * inst.L_g)
x = np.full(4, 0.5)
y0 = np.zeros(4)

print("-- one estimator call --")
cfg = AggITDConfig(lam=lam, N=6, lower=LowerStepConfig(beta=beta, tau=2))
ledger = CommLedger()
h, y_N, trace = aggitd(problem, x, y0, cfg, range(4), RngStream(0), ledger)
print(f"chain seeded at Q={trace.Q} of N=6; rounds used: {ledger.rounds_total} "
      f"(= 2N+2; the upper round elsewhere completes 2N+3)")
print(f"estimate h = direct - indirect, ||h|| = {np.linalg.norm(h):.4f}, "
      f"true ||grad f|| = {np.linalg.norm(inst.hypergradient(x)):.4f}")

print("\n-- seeding-index average equals the conditional expectation (noise off) --")
det = QuadraticProblem(make_quadratic(
    QuadraticSpec(d1=4, d2=4, m=4, mu=1.0, L_g=10.0, hetero=0.5,
                  noise_spread=0.0, seed=7)))
acc = None
for Q in range(7):
    _, _, tr = aggitd(det, x, y0, cfg, range(4), RngStream(0), CommLedger(),
                      q_override=Q)
    acc = tr.h_indirect if acc is None else acc + tr.h_indirect
expected = expected_aggitd_indirect(det.inst, x, tr.y_iterates, lam, 6)
print(f"max coordinate gap: {np.max(np.abs(acc / 7 - expected)):.2e}")

print("\n-- geometric bias decay in N (warm start at y*) --")
ys = inst.y_star(x)
truth = inst.hypergradient(x)
for N in (5, 10, 20, 40):
    ind = expected_aggitd_indirect(inst, x, [ys] * (N + 1), lam, N)
    err = np.linalg.norm(inst.grad_upper_x_exact(x, ys) - ind - truth)
    print(f"  N={N:3d}: ||E[h] - grad f|| = {err:.3e}")

print("\n-- estimator family under heterogeneity (exact lower solves) --")
N = T = 50
ind = expected_aggitd_indirect(inst, x, [ys] * (N + 1), lam, N)
bias_fused = np.linalg.norm(inst.grad_upper_x_exact(x, ys) - ind - truth)
bias_aid = np.linalg.norm(expected_aid_fhe(inst, x, ys, lam, T) - truth)
bias_local = np.linalg.norm(expected_local_fhe(inst, x, ys, lam, T) - truth)
print(f"  fused (single loop):      bias {bias_fused:.3e}")
print(f"  two-loop baseline:        bias {bias_aid:.3e}")
print(f"  fully local (no 2nd-order aggregation): bias {bias_local:.3e}")
print("aggregated curvature kills the heterogeneity bias; the local shortcut keeps it.")
