"""How the fragmentation level reacts to where load sits.

Two placements of the same total demand on NSFNET: one spread evenly, one
piled onto a single node.  Utilization-variance style metrics see only the
imbalance; the fragmentation level also sees that the crowded node's
neighbourhood has little connected capacity left.

    python demos/fragmentation_walkthrough.py
"""

import numpy as np

from nfvfrag.fragmentation import load_metric_suite, model_for
from nfvfrag.state import NetworkState
from nfvfrag.topology import PathTable, load_topology
from nfvfrag.workload import SfcRequest, Vnf

net = load_topology("nsfnet")
print(f"{net.name}: {net.n_nodes} nodes, {net.n_links} links")


def state_with(hosts, demand=(2.0, 4.0)):
    state = NetworkState(net, PathTable(net, max_hops=3))
    for i, host in enumerate(hosts):
        vnf = Vnf(i, 0, np.tile(demand, (11, 1)), 1.0, 0)
        sfc = SfcRequest(i, 0, 10, 50.0, [vnf], [])
        state.sfcs[i] = sfc
        state.vnfs[vnf.key] = vnf
        state.vnf_demand[vnf.key] = vnf.demand_trace[0]
        state._place(vnf.key, host)
    return state


spread = state_with(list(range(net.n_nodes)) * 2)
piled = state_with([3] * 8 + list(range(net.n_nodes))[:20])

model = model_for(net, K=2)
for name, st in (("spread", spread), ("piled", piled)):
    rep = model.report(st)
    worst = int(np.argmax(rep.levels))
    print(f"\n{name}: max level {rep.max_level:.4f} at node {worst}")
    for k, v in load_metric_suite(st, net).items():
        print(f"  {k:12s} {v:.4f}")
