"""Communication-round arithmetic of the two drivers.

One aggregate-and-broadcast exchange is one round; piggybacked payloads share
a round. The fused driver spends exactly 2N+3 rounds per outer iteration in a
single communication loop; the two-loop baseline spends 2N+T+3. This script
prints the bill for a grid of (N, T) and the payload-scalar accounting.
"""

from fedbilevel import QuadraticSpec, RunConfig, run_fbo_aggitd, run_fednest_baseline

spec = QuadraticSpec(d1=4, d2=4, m=4, mu=1.0, L_g=2.0, hetero=0.3,
                     noise_spread=0.1, seed=5)

print(f"{'N':>3} {'T':>3} | {'fused rounds':>12} {'loops':>5} | "
      f"{'baseline rounds':>15} {'loops':>5} | {'saved/itr':>9}")
for N in (1, 2, 5, 10, 20):
    for T in (1, 5):
        cfg = RunConfig(problem=spec, K=3, N=N, T=T, seed=5)
        rep_a = run_fbo_aggitd(cfg)
        rep_b = run_fednest_baseline(cfg)
        (ra, la), (rb, lb) = rep_a.outer_history[0], rep_b.outer_history[0]
        assert rep_a.outer_history == [(ra, la)] * 3
        assert rep_b.outer_history == [(rb, lb)] * 3
        print(f"{N:>3} {T:>3} | {ra:>12} {la:>5} | {rb:>15} {lb:>5} | {rb - ra:>9}")

cfg = RunConfig(problem=spec, K=10, N=5, T=5, seed=5)
rep_a = run_fbo_aggitd(cfg)
rep_b = run_fednest_baseline(cfg)
print(f"\npayload accounting over K=10 outer iterations (uploaded scalars):")
print(f"  fused:    {rep_a.scalars_sent:7d} scalars in {rep_a.rounds_total} rounds")
print(f"  baseline: {rep_b.scalars_sent:7d} scalars in {rep_b.rounds_total} rounds")
