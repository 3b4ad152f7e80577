"""One overload, three ways to fix it.

Builds a loaded K_8 with node 0 pushed past the threshold, then lets the
greedy baseline and the exhaustive oracle each run one migration round on a
copy of the same state.  Prints what moved, the migration loss and the
network fragmentation level afterwards.

    python demos/migration_round.py
"""

from nfvfrag.migration import make_policy, oracle_destination, run_migration_round, select_vnf
from nfvfrag.simulator import overloaded_scenario
from nfvfrag.topology import complete_graph

net = complete_graph(8)
state = overloaded_scenario(net, seed=4, load=0.35)
over = state.detect_overloads()
print("overloaded nodes (node: worst resource):", over.nodes)

key = select_vnf(state, 0, over.nodes[0])
res = oracle_destination(state, key)
print(f"\nselected VNF {key}; oracle labels per destination:")
for node, label in enumerate(res.labels):
    tag = " <- current host" if node == 0 else (" <- best" if node == res.node else "")
    print(f"  node {node}: {label:.5f}{tag}")

for name in ("greedy", "oracle"):
    trial = state.clone()
    out = run_migration_round(trial, make_policy(name))
    moves = ", ".join(f"{a.item}->{a.destination}" for a in out.actions) or "none"
    print(f"\n{name}: moves {moves}")
    print(f"  loss {out.total_loss:.2f} MB, post-round level {out.post_frag:.5f}, "
          f"still overloaded: {bool(trial.detect_overloads().nodes)}")
