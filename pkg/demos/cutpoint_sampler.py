"""Exact cutpoint patterns of the infinite walk versus the formula p_k.

Compares the fast ladder sampler with the simulation-based regeneration
sampler, then shows how rarely a long stretch has no cutpoint at all.
"""
from cutpoints import experiments as ex
from cutpoints import resistance_chain as rc

chain = rc.ChainLaw(rc.canonical(2.0))
table = rc.tails(chain.profile, 2 ** 20 + 2)

for method, K, reps in (("ladder", 64, 50_000), ("regeneration", 8, 5_000)):
    rows = ex.level_frequencies(chain, table, K, reps, seed=1, method=method)
    print(f"{method} sampler, K={K}, {reps} samples")
    for r in rows[1::max(1, K // 8)]:
        print(f"  level {r.params['k']:3d}: freq {r.estimate:.4f} +- {r.se:.4f}   p_k {r.target:.4f}   z {r.z:+.2f}")

for m in (4, 6, 9):
    c = ex.block_census(chain, table, m, 10_000, seed=2)
    lo, hi = c.no_cutpoint.ci()
    print(f"P[no cutpoint in 1..{2 ** (m + 1)}] = {c.no_cutpoint.estimate:.4f}  (95% CI {lo:.4f}..{hi:.4f})")
