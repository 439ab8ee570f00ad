"""Edge counts of a tree walk recovered from the visit counts alone."""
import numpy as np

from cutpoints import tree_walk as tw

g = np.random.default_rng(3)
tree = tw.random_tree(g, 9)
target = max(tree.vertices)
walk = tw.simulate_tree_walk(tree, tree.root, target, seed=4)
stats = tw.walk_statistics(walk)

print(tw.format_tree(tree))
print("walk:", " ".join(map(str, walk.states)))
print("visits V:", dict(sorted(stats.V.items())))
M = tw.reconstruct_M_from_V(tree, stats.V, tree.root, target)
print("reconstructed M equals counted M:", {k: v for k, v in M.items() if v} == stats.M)
U = tw.infer_exit_pointers(tree, stats.V, tree.root, target)
print("last exits inferred:", {x: U[x] for x in sorted(stats.V) if x != target})
print("loop-erasure:", tw.loop_erasure(walk.states))
