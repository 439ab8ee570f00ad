"""Exact quantities of the canonical chain r_k = 1/(k ln^2 k).

Prints tail sums with their certified enclosures, cutpoint probabilities,
and the divergence audit that rules out a quick Borel-Cantelli argument.
"""
import math

from cutpoints import resistance_chain as rc

table = rc.tails(rc.canonical(2.0), 2 ** 20 + 2)

print("k        t_k              enclosure width   p_k          p_k k ln k")
for k in (2, 10, 100, 10 ** 4, 10 ** 6):
    lo, hi = table.t_bounds(k)
    p = rc.cutpoint_probability(table, k)
    print(f"{k:<8d} {table.t(k):.12f}   {hi - lo:.1e}          {p:.4e}   {p * k * math.log(k):.4f}")

print("\nsum of p_k over [m, 10^6] against its telescoping lower bound:")
for m in (2, 10, 100):
    a = rc.divergence_audit(table, m, 10 ** 6)
    print(f"  m={m:<4d} {a.partial_sum:.6f} >= {a.lower_bound:.6f}")

print("\nconditional cut probability Q_96(64) =", rc.conditional_cut_probability(table, 64, 96))
