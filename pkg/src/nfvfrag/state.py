"""Dynamic placement state: VNFs on nodes, VNF links on paths, utilizations,
deployment, expiry, migration and overload detection."""

from dataclasses import dataclass, field

import numpy as np

from .topology import Path, PathTable

EPS = 1e-9


class InfeasibleMigration(Exception):
    """Destination violates node capacity, bandwidth or deadline constraints."""


def empty_path(node):
    return Path((node,), (), 0.0)


def select_path(table, link_util, link_cap, rho, demand, deadline, proc_delay, src, dst,
                exclude=None):
    """First path in the delay-sorted candidate list that fits the bandwidth
    threshold and the link deadline, optionally avoiding one physical link.
    Returns ``None`` when nothing fits."""
    if src == dst:
        return empty_path(src)
    limit = rho * link_cap
    budget = deadline - proc_delay + EPS
    for p in table.paths(src, dst):
        if p.delay > budget:
            # sorted by delay, nothing later fits either
            return None
        if exclude is not None and exclude in p.links:
            continue
        idx = list(p.links)
        if np.all(link_util[idx] + demand <= limit[idx] + EPS):
            return p
    return None


@dataclass
class MigrationAction:
    vnf: tuple
    source: int
    destination: int
    routes: dict  # vnf-link key -> Path
    node_util: np.ndarray = field(repr=False, default=None)
    link_util: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError("migration source and destination must differ")


@dataclass
class OverloadSet:
    nodes: dict  # node -> worst resource index
    links: dict  # link -> worst resource index

    def __bool__(self):
        return bool(self.nodes or self.links)


@dataclass
class DeployResult:
    accepted: bool
    placement: dict = None  # vnf index -> node
    routes: dict = None  # link key -> Path


def _scatter(index, rows, shape):
    out = np.zeros(shape)
    if index:
        w = np.asarray(rows)
        idx = np.asarray(index)
        for c in range(shape[1]):
            out[:, c] = np.bincount(idx, weights=w[:, c], minlength=shape[0])
    return out


class NetworkState:
    def __init__(self, net, table=None, rho=0.5, backtrack_budget=64):
        self.net = net
        self.table = table if table is not None else PathTable(net)
        self.rho = rho
        self.backtrack_budget = backtrack_budget
        self.t = 0
        self.node_cap = net.node_capacity
        self.link_cap = net.link_capacity
        self.node_util = np.zeros_like(self.node_cap)
        self.link_util = np.zeros_like(self.link_cap)
        self.node_vnfs = [set() for _ in range(net.n_nodes)]
        self.link_vlinks = [set() for _ in range(net.n_links)]
        self.placement = {}
        self.routes = {}
        self.sfcs = {}
        self.vnfs = {}
        self.vlinks = {}
        self.vnf_demand = {}
        self.link_demand = {}

    # -- bookkeeping -------------------------------------------------------
    def clone(self):
        other = object.__new__(NetworkState)
        other.__dict__.update(self.__dict__)
        other.node_util = self.node_util.copy()
        other.link_util = self.link_util.copy()
        other.node_vnfs = [set(s) for s in self.node_vnfs]
        other.link_vlinks = [set(s) for s in self.link_vlinks]
        for name in ("placement", "routes", "sfcs", "vnfs", "vlinks", "vnf_demand", "link_demand"):
            setattr(other, name, dict(getattr(self, name)))
        return other

    def sfc_of(self, key):
        return self.sfcs[key[0]]

    def adjacent_links(self, key):
        up, down = self.sfcs[key[0]].adjacent_links(key[1])
        return up, down

    def recompute_utilization(self):
        self._refresh(None)

    def _refresh(self, t):
        """Rebuild utilization from scratch; with ``t`` also re-read demands."""
        hosts, rows, edges, weights = [], [], [], []
        for s in self.sfcs.values():
            if t is not None:
                nd, ld = s.demand_rows(t)
                for v in s.vnfs:
                    self.vnf_demand[v.key] = nd[v.index]
                for j, l in enumerate(s.vnf_links):
                    self.link_demand[l.key] = ld[j]
            for v in s.vnfs:
                hosts.append(self.placement[v.key])
                rows.append(self.vnf_demand[v.key])
            for l in s.vnf_links:
                d = self.link_demand[l.key]
                for e in self.routes[l.key].links:
                    edges.append(e)
                    weights.append(d)
        self.node_util = _scatter(hosts, rows, self.node_cap.shape)
        self.link_util = _scatter(edges, weights, self.link_cap.shape)

    def advance(self, t):
        """Move the clock to slot ``t`` and re-read every active demand."""
        self.t = t
        self._refresh(t)

    def node_utilization(self, n, i):
        return float(sum(self.vnf_demand[k][i] for k in self.node_vnfs[n]))

    def link_utilization(self, e, i):
        return float(sum(self.link_demand[k][i] for k in self.link_vlinks[e]))

    def total_vnf_demand(self):
        if not self.vnf_demand:
            return np.zeros(self.node_cap.shape[1])
        return np.sum([self.vnf_demand[k] for k in self.placement], axis=0)

    # -- placement primitives ---------------------------------------------
    def _route(self, key, path):
        old = self.routes.get(key)
        d = self.link_demand[key]
        if old is not None:
            for e in old.links:
                self.link_vlinks[e].discard(key)
                self.link_util[e] -= d
        self.routes[key] = path
        for e in path.links:
            self.link_vlinks[e].add(key)
            self.link_util[e] += d

    def _place(self, key, node):
        old = self.placement.get(key)
        d = self.vnf_demand[key]
        if old is not None:
            self.node_vnfs[old].discard(key)
            self.node_util[old] -= d
        self.placement[key] = node
        self.node_vnfs[node].add(key)
        self.node_util[node] += d

    # -- deployment ---------------------------------------------------------
    def deploy_sfc(self, sfc):
        """Load-aware first fit with bounded backtracking.

        VNFs are placed in index order; candidate hosts are ordered by the
        post-placement max utilization ratio (ties by node id) and the parent
        link is routed on the first fitting precomputed path.  If the greedy
        descent dead-ends, alternatives are explored depth first until
        ``backtrack_budget`` extra expansions are spent.
        """
        if sfc.id in self.sfcs:
            raise ValueError(f"SFC {sfc.id} already active")
        t = self.t
        dem, lrows = sfc.demand_rows(t)
        ldem = {l.key: lrows[j] for j, l in enumerate(sfc.vnf_links)}
        node_util = self.node_util.copy()
        link_util = self.link_util.copy()
        limit = self.rho * self.node_cap
        link_limit = self.rho * self.link_cap
        placement = {}
        routes = {}
        budget = [self.backtrack_budget]
        n = len(sfc.vnfs)

        def options(i):
            r = dem[i]
            fits = np.all(node_util + r <= limit + EPS, axis=1)
            cand = np.flatnonzero(fits)
            if cand.size == 0:
                return
            score = np.max((node_util[cand] + r) / self.node_cap[cand], axis=1)
            order = cand[np.lexsort((cand, score))]
            parent = sfc.parent_link(i)
            for node in order:
                node = int(node)
                if parent is None:
                    yield node, None, None
                    continue
                src = placement[parent.src]
                d = ldem[parent.key]
                if src == node:
                    yield node, parent, empty_path(node)
                    continue
                budget_delay = parent.deadline - sfc.vnfs[i].processing_delay + EPS
                for p in self.table.paths(src, node):
                    if p.delay > budget_delay:
                        break
                    idx = list(p.links)
                    if np.all(link_util[idx] + d <= link_limit[idx] + EPS):
                        yield node, parent, p

        def dfs(i):
            if i == n:
                return True
            first = True
            for node, link, path in options(i):
                if not first:
                    if budget[0] <= 0:
                        return False
                    budget[0] -= 1
                first = False
                node_util[node] += dem[i]
                if path is not None and path.links:
                    link_util[list(path.links)] += ldem[link.key]
                placement[i] = node
                if link is not None:
                    routes[link.key] = path
                if dfs(i + 1):
                    return True
                node_util[node] -= dem[i]
                if path is not None and path.links:
                    link_util[list(path.links)] -= ldem[link.key]
                del placement[i]
                if link is not None:
                    del routes[link.key]
            return False

        if not dfs(0):
            return DeployResult(False)
        self.sfcs[sfc.id] = sfc
        for v in sfc.vnfs:
            self.vnfs[v.key] = v
            self.vnf_demand[v.key] = dem[v.index]
            self._place(v.key, placement[v.index])
        for l in sfc.vnf_links:
            self.vlinks[l.key] = l
            self.link_demand[l.key] = ldem[l.key]
            self._route(l.key, routes[l.key])
        return DeployResult(True, dict(placement), dict(routes))

    def remove_sfc(self, sfc_id):
        sfc = self.sfcs.pop(sfc_id)
        for l in sfc.vnf_links:
            p = self.routes.pop(l.key)
            d = self.link_demand.pop(l.key)
            for e in p.links:
                self.link_vlinks[e].discard(l.key)
                self.link_util[e] -= d
            del self.vlinks[l.key]
        for v in sfc.vnfs:
            node = self.placement.pop(v.key)
            self.node_vnfs[node].discard(v.key)
            self.node_util[node] -= self.vnf_demand.pop(v.key)
            del self.vnfs[v.key]

    def release_expired(self, t):
        expired = [sid for sid, s in self.sfcs.items() if s.expiry <= t]
        for sid in expired:
            self.remove_sfc(sid)
        return len(expired)

    # -- migration ----------------------------------------------------------
    def plan_migration(self, key, dst, node_util=None, link_util=None):
        """What-if move of VNF ``key`` to ``dst`` without touching the state.

        Raises :class:`InfeasibleMigration` when the destination would exceed
        the threshold or an adjacent VNF link cannot be rerouted.
        """
        src = self.placement[key]
        if dst == src:
            raise ValueError("destination equals current host")
        node_util = (self.node_util if node_util is None else node_util).copy()
        link_util = (self.link_util if link_util is None else link_util).copy()
        r = self.vnf_demand[key]
        node_util[src] -= r
        node_util[dst] += r
        if np.any(node_util[dst] > self.rho * self.node_cap[dst] + EPS):
            raise InfeasibleMigration(f"node {dst} over threshold")
        up, down = self.adjacent_links(key)
        adjacent = up + down
        for l in adjacent:
            old = self.routes[l.key]
            if old.links:
                link_util[list(old.links)] -= self.link_demand[l.key]
        sfc = self.sfcs[key[0]]
        routes = {}
        for l in adjacent:
            a = dst if l.src == key[1] else self.placement[(key[0], l.src)]
            b = dst if l.dst == key[1] else self.placement[(key[0], l.dst)]
            d = self.link_demand[l.key]
            p = select_path(self.table, link_util, self.link_cap, self.rho, d, l.deadline,
                            sfc.vnfs[l.dst].processing_delay, a, b)
            if p is None:
                raise InfeasibleMigration(f"cannot reroute {l.key} for move to node {dst}")
            if p.links:
                link_util[list(p.links)] += d
            routes[l.key] = p
        return MigrationAction(key, src, dst, routes, node_util, link_util)

    def apply_migration(self, action):
        if self.placement.get(action.vnf) != action.source:
            raise InfeasibleMigration(f"{action.vnf} is not hosted on node {action.source}")
        if np.any(self.node_util[action.destination] + self.vnf_demand[action.vnf]
                  > self.rho * self.node_cap[action.destination] + EPS):
            raise InfeasibleMigration(f"node {action.destination} over threshold")
        for lk, p in action.routes.items():
            l = self.vlinks[lk]
            a = action.destination if l.src == action.vnf[1] else self.placement[(lk[0], l.src)]
            b = action.destination if l.dst == action.vnf[1] else self.placement[(lk[0], l.dst)]
            if p.nodes[0] != a or p.nodes[-1] != b:
                raise InfeasibleMigration(f"route for {lk} does not join {a} and {b}")
        self._place(action.vnf, action.destination)
        for lk, p in action.routes.items():
            self._route(lk, p)
        return self

    def reroute(self, link_key, path):
        self._route(link_key, path)

    # -- overloads ------------------------------------------------------------
    def detect_overloads(self, rho=None):
        rho = self.rho if rho is None else rho
        nodes, links = {}, {}
        over = np.any(self.node_util > rho * self.node_cap, axis=1)
        ratio = self.node_util / self.node_cap
        for n in np.flatnonzero(over):
            nodes[int(n)] = int(np.argmax(ratio[n]))
        over = np.any(self.link_util > rho * self.link_cap, axis=1)
        ratio = self.link_util / self.link_cap
        for e in np.flatnonzero(over):
            links[int(e)] = int(np.argmax(ratio[e]))
        return OverloadSet(nodes, links)

    # -- checks & export ------------------------------------------------------
    def check_consistency(self):
        nodes = [set() for _ in self.node_vnfs]
        for k, n in self.placement.items():
            nodes[n].add(k)
        assert nodes == self.node_vnfs, "placement map and node VNF sets disagree"
        links = [set() for _ in self.link_vlinks]
        for k, p in self.routes.items():
            l = self.vlinks[k]
            a, b = self.placement[(k[0], l.src)], self.placement[(k[0], l.dst)]
            assert p.nodes[0] == a and p.nodes[-1] == b, f"route of {k} does not join hosts"
            for e in p.links:
                links[e].add(k)
        assert links == self.link_vlinks, "route map and link sets disagree"
        nu, lu = self.node_util.copy(), self.link_util.copy()
        self.recompute_utilization()
        assert np.allclose(nu, self.node_util, atol=1e-9), "node utilization drifted"
        assert np.allclose(lu, self.link_util, atol=1e-9), "link utilization drifted"

    def snapshot(self):
        return {
            "t": self.t,
            "rho": self.rho,
            "topology": self.net.to_document(),
            "node_capacity": self.node_cap.tolist(),
            "link_capacity": self.link_cap.tolist(),
            "node_utilization": self.node_util.tolist(),
            "link_utilization": self.link_util.tolist(),
            "placements": [
                {"sfc": k[0], "vnf": k[1], "node": n,
                 "demand": [float(x) for x in self.vnf_demand[k]]}
                for k, n in sorted(self.placement.items())
            ],
            "routes": [
                {"sfc": k[0], "src": k[1], "dst": k[2], "nodes": list(p.nodes),
                 "links": list(p.links), "demand": [float(x) for x in self.link_demand[k]]}
                for k, p in sorted(self.routes.items())
            ],
            "active_sfcs": [
                {"id": s.id, "arrival": s.arrival_time, "lifetime": s.lifetime}
                for s in sorted(self.sfcs.values(), key=lambda s: s.id)
            ],
        }
