"""Reordering stack entries leaves transition counts unchanged.

Also shows that uniformly resampled orderings reproduce the walk's law on a
small absorbed chain.
"""
from collections import Counter

import numpy as np

from cutpoints import stack_machine as sm
from cutpoints.rng import derive_stream

rows = {0: {1: .5, 2: .5}, 1: {0: .2, 2: .2, 3: .6}, 2: {0: .3, 1: .2, 3: .5}}
law = sm.FiniteChain(rows)
# pick a walk long enough to have something to reorder
seed = next(s for s in range(100)
            if len(sm.run_from_stacks(sm.StackSystem(law, seed=s), 0, 3)[0].states) >= 12)
traj, snap = sm.run_from_stacks(sm.StackSystem(law, seed=seed), 0, 3)
print("walk:", traj.as_tuple())
g = np.random.default_rng(0)
for _ in range(3):
    perms = {x: g.permutation(len(snap.W(x))) for x in snap.popped}
    t2, s2 = sm.reorder_and_rerun(snap, perms)
    print("reordered:", t2.as_tuple(), "same counts:",
          sm.transition_counts(t2.states) == sm.transition_counts(traj.states))

n = 20_000
direct, resampled = Counter(), Counter()
for i in range(n):
    direct[sm.run_from_stacks(sm.StackSystem(law, seed=1, stream=derive_stream(1, i)), 0, 3)[0].as_tuple()] += 1
    _, s = sm.run_from_stacks(sm.StackSystem(law, seed=2, stream=derive_stream(2, i)), 0, 3)
    resampled[sm.resample_orderings(s.multisets(), s.exits(), 0, 3, seed=3, replicate=i).as_tuple()] += 1
print("\nmost common paths   direct   resampled")
for path, c in direct.most_common(5):
    print(f"  {str(path):<16s} {c / n:.4f}   {resampled[path] / n:.4f}")
