# %% [markdown]
# # Topology and routes
#
# A three-stage tree built from 4-port switches has 16 end-nodes. We look at
# its wiring, the shortest paths between two nodes, and how many
# destinations each output port carries under different routing choices.

# %%
from collections import Counter

from ftsim import RLFTParams, RoutingConfig, build_rlft, destinations_per_port, enumerate_shortest_paths
from ftsim.topology import port_column, table_check

tree = build_rlft(RLFTParams(4, 3))
tree.node_count, tree.switch_count, tree.arity

# %% [markdown]
# Nodes 0 and 15 sit in different pods, so packets climb to the top stage.
# With K=2 there are K^2 = 4 ways up.

# %%
for path in enumerate_shortest_paths(tree, 0, 15):
    print(" ".join(str(hop) for hop in path))

# %% [markdown]
# Destinations per output port, grouped by column. Deterministic routing
# gives each upward port a slice of the tree; full adaptivity lets every
# upward port see almost everyone.

# %%
def per_column(routing):
    counts = Counter()
    for ref, dsts in destinations_per_port(tree, routing).items():
        counts[port_column(tree, ref), len(dsts)] += 1
    return sorted(counts)


print("deterministic", per_column(RoutingConfig()))
print("adaptive     ", per_column(RoutingConfig("adaptive")))
print("stage 1 only ", per_column(RoutingConfig("adaptive", stage=1)))

# %% [markdown]
# The same numbers against the closed form, on a K=4 tree with the port
# filter at delta=2.

# %%
for cell in table_check(build_rlft(RLFTParams(8, 3)), 2):
    print(f"{'ok ' if cell.ok else 'BAD'} {cell.row:38s} {cell.column:4s} {cell.expected}")
