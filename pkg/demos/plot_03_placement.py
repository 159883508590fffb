"""
Choosing where new data goes
============================

The cost of a store is transfer time plus weighted load, weighted client
count and a smoothed latency. New records go to the cheapest eligible store,
and the latency estimate follows what the runtime observes.
"""

from hybridorm import (
    EntityDescriptor,
    EntityRuntime,
    FieldDescriptor,
    PlacementPolicy,
    PolicyWeights,
    Record,
    SchemaRegistry,
    StoreDescriptor,
    StoreMetrics,
    choose_location,
    score,
)

weights = PolicyWeights(w_load=0.05, w_clients=0.001, ewma_alpha=0.2)

# 1 MB over 1 MB/s, half-loaded, ten clients, 100 ms latency
print(score(StoreMetrics(1e6, 0.5, 10, 0.1), weights, 1e6))

notes = EntityDescriptor("Notes", (FieldDescriptor("id", "integer", is_primary_key=True),
                                   FieldDescriptor("body", "text")))
registry = SchemaRegistry().register_entity(notes)
for loc, privacy in [("a_slow", "public"), ("b_fast", "public"), ("vault", "private")]:
    registry.register_store(StoreDescriptor(loc, privacy))

###############################################################################
# With identical metrics every store costs the same and the name decides.

decision = choose_location(registry, notes, 64, {}, weights)
print(decision.chosen, decision.scores)

###############################################################################
# Run traffic against stores with different injected delays. The simulated
# clock keeps the run reproducible.

policy = PlacementPolicy(weights)
rt = EntityRuntime(registry, policy, delays={"a_slow": 0.050, "b_fast": 0.005, "vault": 0.020},
                   wall_clock=False)
for i in range(30):
    rt.insert(Record("Notes", {"id": i, "body": "x" * 16}))
print([d.chosen for d in rt.decisions])
for loc, m in policy.snapshot().items():
    print(f"{loc:7s} ewma={m.latency_ewma:.4f}")

###############################################################################
# Confidential entities only ever see private stores, whatever they cost.

secret = EntityDescriptor("Secrets", notes.fields, "private_only")
print(policy.choose(registry, secret, 64))
