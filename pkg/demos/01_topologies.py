"""Build the four network topologies and prune one into a rooted tree.

Every iteration of the distributed scheme routes data toward a single
updating node along a spanning tree, so the pruning step is worth seeing
on its own before any signal processing happens.
"""

from dasf import (
    make_erdos_renyi,
    make_fully_connected,
    make_path,
    make_random_tree,
    prune_to_tree,
    select_updating_node,
)


def describe(name, graph):
    degs = [graph.degree(k) for k in graph.nodes]
    print(f"{name:16s} K={graph.node_count:2d}  M={graph.total_channels:2d}  "
          f"edges={len(graph.edges()):2d}  degree min/max={min(degs)}/{max(degs)}")


K = 8
print("= four ways to build a connected sensor network =")
describe("fully connected", make_fully_connected(K, 2))
describe("path", make_path(K, 2))
describe("random tree", make_random_tree(K, 2, rng_seed=1))
er = make_erdos_renyi(K, 2, edge_prob=0.4, rng_seed=7)
describe("erdos-renyi 0.4", er)

print()
print("= pruning the Erdos-Renyi graph to a tree rooted at node 3 =")
tree = prune_to_tree(er, root=3)
print("graph edges :", er.edges())
print("tree edges  :", tree.edges())
print("parent map  :", dict(sorted(tree.parent.items())))
print("bfs order   :", tree.order)
for b in tree.branch_roots():
    print(f"branch via {b}: {tree.branch(b)}")

# Ties between candidate parents go to the lowest index by default; a seed
# makes the choice random but reproducible.
alt = prune_to_tree(er, root=3, rng_seed=123)
print("seeded prune differs from deterministic prune:", alt.parent != tree.parent)

print()
print("= the round-robin schedule of updating nodes =")
print("iteration :", list(range(10)))
print("node      :", [select_updating_node(i, K) for i in range(10)])

# Every node's channel rows occupy a fixed block of the stacked network-wide
# signal; the engine uses these slices to split and rebuild filters.
print()
print("= per-node row blocks in the stacked M-channel layout =")
mixed = make_path(4, (3, 1, 2, 2))
for k in mixed.nodes:
    s = mixed.block_slice(k)
    print(f"node {k}: rows {s.start}..{s.stop - 1}  ({mixed.channel_count(k)} channels)")
assert sum(mixed.channels) == mixed.total_channels
print("total:", mixed.total_channels, "rows")
