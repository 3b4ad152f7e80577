import numpy as np
import pytest

from nfvfrag.state import NetworkState
from nfvfrag.topology import PathTable, network_from_document
from nfvfrag.workload import SfcRequest, Vnf, VnfLink


def make_net(n, edges, cpu=32.0, mem=64.0, bw=5.0, delay=1.0, name="fixture"):
    """Small network; scalar or per-node/per-link capacities and delays."""
    per = lambda v, i: v[i] if np.ndim(v) else v
    doc = {
        "name": name,
        "nodes": [{"id": i, "cpu": per(cpu, i), "mem": per(mem, i)} for i in range(n)],
        "links": [{"u": u, "v": v, "bandwidth": per(bw, i), "delay_ms": per(delay, i)}
                  for i, (u, v) in enumerate(edges)],
    }
    return network_from_document(doc)


def make_sfc(sid, demands, link_demands=(), parents=None, deadline=50.0, proc=1.0,
             lifetime=10, arrival=0):
    """SFC with constant demands.  ``demands`` is a list of (cpu, mem);
    link i joins parents[i] -> i+1 (linear chain by default)."""
    T = lifetime + 1
    vnfs = [Vnf(sid, i, np.tile(np.asarray(d, float), (T, 1)), proc, arrival)
            for i, d in enumerate(demands)]
    parents = list(range(len(demands) - 1)) if parents is None else parents
    link_demands = list(link_demands) or [0.0] * (len(demands) - 1)
    links = [VnfLink(sid, parents[i], i + 1, np.full((T, 1), float(link_demands[i])), deadline, arrival)
             for i in range(len(demands) - 1)]
    return SfcRequest(sid, arrival, lifetime, deadline, vnfs, links)


def place(state, sfc, hosts):
    """Install ``sfc`` at the given hosts with min-delay routes, bypassing
    admission checks (used to build overloaded fixtures)."""
    state.sfcs[sfc.id] = sfc
    for v in sfc.vnfs:
        state.vnfs[v.key] = v
        state.vnf_demand[v.key] = v.demand_trace[0]
        state._place(v.key, hosts[v.index])
    for l in sfc.vnf_links:
        state.vlinks[l.key] = l
        state.link_demand[l.key] = l.demand_trace[0]
        a, b = hosts[l.src], hosts[l.dst]
        from nfvfrag.state import empty_path
        p = empty_path(a) if a == b else state.table.min_delay_path(a, b)
        state._route(l.key, p)
    return state


def make_state(net, rho=0.5, max_hops=4):
    return NetworkState(net, PathTable(net, max_hops=max_hops), rho=rho)


@pytest.fixture
def triangle():
    return make_net(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def square():
    # 0-1-2-3-0 ring with a chord 0-2
    return make_net(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
