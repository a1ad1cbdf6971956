# %% [markdown]
# # Which destinations share a VC
#
# Static queuing schemes pick a VC at injection. How well they separate
# flows depends on the routes those flows can take. Here we compare two
# VCs on the 16-node tree.

# %%
from ftsim import QueueScheme, RLFTParams, RoutingConfig, build_rlft, mapping_table

tree = build_rlft(RLFTParams(4, 3))


def show(scheme, routing, stage, ports):
    table = mapping_table(QueueScheme(scheme, 2), tree, routing)
    for ref, vcs in sorted(table.items()):
        if ref.stage == stage and ref.port in ports:
            print(ref.stage, ref.index, ref.port, [sorted(v) for v in vcs])


# %% [markdown]
# DBBM with deterministic routing: the buffers feeding stage-2 switches from
# below use only one of their two VCs.

# %%
show("DBBM", RoutingConfig(), 2, (0, 1))

# %% [markdown]
# vFtree with fully adaptive routing: at the top every VC holds every
# reachable destination, so the VCs no longer isolate anything.

# %%
show("VFTREE", RoutingConfig("adaptive"), 3, (0,))

# %% [markdown]
# Restricting adaptivity to stage 1 and filtering ports with delta=2 shrinks
# the sets again.

# %%
show("VFTREE", RoutingConfig("adaptive", stage=1, delta=2), 3, (0,))
