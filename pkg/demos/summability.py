"""Trend diagnostics for a_m, the probability of a cutpoint in (2^m, 2^{m+1}].

Finitely many cutpoints would follow from a_m being summable; the table
shows a_m m^2 staying flat, which is evidence only.
"""
from cutpoints import experiments as ex
from cutpoints import resistance_chain as rc

chain = rc.ChainLaw(rc.canonical(2.0))
table = rc.tails(chain.profile, 2 ** 20 + 2)

tab = ex.summability_table(chain, table, range(4, 11), 10_000, seed=5)
print(" m   a_m      se       a_m m^2")
for m, a, se, a2 in tab.rows:
    print(f"{m:2d}   {a:.4f}   {se:.4f}   {a2:.3f}")
print("nonincreasing within 2 SE:", tab.nonincreasing, "  growth ratio:", round(tab.growth_ratio(), 3))
for m in range(4, 10):
    r = ex.inequality_audit(chain, table, m, 10_000, seed=5)
    print(f"block m={m}: sum p_j = {r.lhs:.4f} >= a_m b_m = {r.rhs:.4f}  [{r.status}]")
