"""Physical network graph, k-hop neighborhoods, simple-path enumeration and
multi-hop graphs."""

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FilePath

import numpy as np

DEFAULT_MAX_HOPS = 6
DEFAULT_PATHS_PER_PAIR = 64


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    id: int
    capacity: tuple  # (cpu GHz, mem GB)


@dataclass(frozen=True)
class LinkSpec:
    id: int
    endpoints: tuple  # (u, v) with u < v
    capacity: tuple  # (bandwidth MBps,)
    propagation_delay: float  # ms


@dataclass(frozen=True)
class Path:
    nodes: tuple
    links: tuple
    delay: float

    @property
    def hops(self):
        return len(self.links)


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple
    links: tuple
    name: str = "network"
    adjacency: tuple = field(init=False, repr=False)
    _link_of: dict = field(init=False, repr=False)

    def __post_init__(self):
        adj = [[] for _ in self.nodes]
        link_of = {}
        for link in self.links:
            u, v = link.endpoints
            adj[u].append((v, link.id))
            adj[v].append((u, link.id))
            link_of[(u, v)] = link.id
            link_of[(v, u)] = link.id
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))
        object.__setattr__(self, "_link_of", link_of)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def node_capacity(self):
        """(N, R1) array of node capacities."""
        return np.array([n.capacity for n in self.nodes], dtype=float)

    @property
    def link_capacity(self):
        """(E, R2) array of link capacities."""
        return np.array([l.capacity for l in self.links], dtype=float)

    @property
    def link_delay(self):
        return np.array([l.propagation_delay for l in self.links], dtype=float)

    @property
    def edges(self):
        return [l.endpoints for l in self.links]

    def neighbors(self, n):
        return [v for v, _ in self.adjacency[n]]

    def link_between(self, u, v):
        return self._link_of.get((u, v))

    def structure_hash(self):
        """Hash of node count and edge set; capacities and delays are ignored."""
        doc = {"n": self.n_nodes, "edges": sorted(list(e) for e in self.edges)}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def scaled(self, cpu=1.0, mem=1.0, bw=1.0):
        nodes = tuple(NodeSpec(n.id, (n.capacity[0] * cpu, n.capacity[1] * mem)) for n in self.nodes)
        links = tuple(
            LinkSpec(l.id, l.endpoints, tuple(c * bw for c in l.capacity), l.propagation_delay)
            for l in self.links
        )
        return Network(nodes, links, name=self.name)

    def to_document(self):
        return {
            "name": self.name,
            "nodes": [{"id": n.id, "cpu": n.capacity[0], "mem": n.capacity[1]} for n in self.nodes],
            "links": [
                {"u": l.endpoints[0], "v": l.endpoints[1], "bandwidth": l.capacity[0],
                 "delay_ms": l.propagation_delay}
                for l in self.links
            ],
        }


def _positive(value, what):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise TopologyError(f"{what}: not a number ({value!r})") from None
    if not np.isfinite(x) or x <= 0:
        raise TopologyError(f"{what}: must be strictly positive, got {value!r}")
    return x


def network_from_document(doc, name=None):
    if not isinstance(doc, dict) or "nodes" not in doc or "links" not in doc:
        raise TopologyError("topology document needs 'nodes' and 'links' lists")
    raw_nodes = doc["nodes"]
    ids = []
    for i, nd in enumerate(raw_nodes):
        try:
            ids.append(int(nd["id"]))
        except (KeyError, TypeError, ValueError):
            raise TopologyError(f"nodes[{i}].id missing or not an integer") from None
    if sorted(ids) != list(range(len(ids))):
        raise TopologyError("node ids must be exactly 0..N-1")
    nodes = [None] * len(ids)
    for i, nd in enumerate(raw_nodes):
        cap = (_positive(nd.get("cpu"), f"nodes[{i}].cpu"), _positive(nd.get("mem"), f"nodes[{i}].mem"))
        nodes[ids[i]] = NodeSpec(ids[i], cap)

    links = []
    seen = set()
    for i, ld in enumerate(doc["links"]):
        try:
            u, v = int(ld["u"]), int(ld["v"])
        except (KeyError, TypeError, ValueError):
            raise TopologyError(f"links[{i}]: endpoints 'u'/'v' missing or not integers") from None
        if u == v:
            raise TopologyError(f"links[{i}]: self-loop at node {u}")
        if not (0 <= u < len(nodes) and 0 <= v < len(nodes)):
            raise TopologyError(f"links[{i}]: endpoint not a declared node ({u}, {v})")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise TopologyError(f"links[{i}]: duplicate link {key}")
        seen.add(key)
        bw = _positive(ld.get("bandwidth"), f"links[{i}].bandwidth")
        delay = _positive(ld.get("delay_ms"), f"links[{i}].delay_ms")
        links.append(LinkSpec(len(links), key, (bw,), delay))

    net = Network(tuple(nodes), tuple(links), name=name or doc.get("name", "network"))
    if len(nodes) == 0:
        raise TopologyError("topology has no nodes")
    if len(_bfs_distances(net, 0)) != len(nodes):
        raise TopologyError("topology is disconnected")
    return net


BUNDLED = ("nsfnet", "usbackbone")


def load_topology(source):
    """Load a topology from a bundled name, a path, or an already-parsed dict."""
    if isinstance(source, dict):
        return network_from_document(source)
    if isinstance(source, str) and source in BUNDLED:
        text = resources.files("nfvfrag.data").joinpath(f"{source}.json").read_text()
        name = source
    else:
        path = FilePath(source)
        if not path.exists():
            raise FileNotFoundError(f"topology file not found: {path}")
        text = path.read_text()
        name = path.stem
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"cannot parse topology document: {exc}") from None
    return network_from_document(doc, name=doc.get("name", name) if isinstance(doc, dict) else name)


def complete_graph(n, cpu=32.0, mem=64.0, bandwidth=5.0, delay_ms=1.0):
    nodes = tuple(NodeSpec(i, (cpu, mem)) for i in range(n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    links = tuple(LinkSpec(i, p, (bandwidth,), delay_ms) for i, p in enumerate(pairs))
    return Network(nodes, links, name=f"K{n}")


def _bfs_distances(net, source):
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, _ in net.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def hop_distances(net):
    """(N, N) integer matrix of shortest-path hop counts."""
    out = np.zeros((net.n_nodes, net.n_nodes), dtype=int)
    for s in range(net.n_nodes):
        for v, d in _bfs_distances(net, s).items():
            out[s, v] = d
    return out


def diameter(net):
    return int(hop_distances(net).max())


def k_hop_neighbors(net, n, k):
    """Nodes whose shortest-path hop distance from ``n`` is exactly ``k``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return {v for v, d in _bfs_distances(net, n).items() if d == k}


def _simple_paths_from(net, start, max_hops, exact=False):
    out = []
    delay = net.link_delay
    nodes, links = [start], []
    on_path = {start}

    def dfs(u, acc):
        if links and (not exact or len(links) == max_hops):
            out.append(Path(tuple(nodes), tuple(links), acc))
        if len(links) == max_hops:
            return
        for v, lid in net.adjacency[u]:
            if v in on_path:
                continue
            nodes.append(v)
            links.append(lid)
            on_path.add(v)
            dfs(v, acc + delay[lid])
            on_path.discard(v)
            links.pop()
            nodes.pop()

    dfs(start, 0.0)
    return out


def k_hop_paths(net, n, k):
    """All simple paths of exactly ``k`` links that start at ``n``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _simple_paths_from(net, n, k, exact=True)


class PathTable:
    """Per ordered node pair, simple paths up to a hop cap sorted by
    (total delay, hop count, node sequence)."""

    def __init__(self, net, max_hops=DEFAULT_MAX_HOPS, per_pair=DEFAULT_PATHS_PER_PAIR):
        if max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        self.net = net
        self.max_hops = max_hops
        self.per_pair = per_pair
        self._paths = {}
        for s in range(net.n_nodes):
            by_dst = {}
            for p in _simple_paths_from(net, s, max_hops):
                by_dst.setdefault(p.nodes[-1], []).append(p)
            for d, plist in by_dst.items():
                plist.sort(key=lambda p: (round(p.delay, 9), p.hops, p.nodes))
                self._paths[(s, d)] = tuple(plist[:per_pair])

    def paths(self, src, dst):
        return self._paths.get((src, dst), ())

    def min_delay_path(self, src, dst):
        plist = self.paths(src, dst)
        return plist[0] if plist else None

    def __contains__(self, pair):
        return pair in self._paths

    def pairs(self):
        return self._paths.keys()


def build_path_table(net, max_hops=DEFAULT_MAX_HOPS, per_pair=DEFAULT_PATHS_PER_PAIR):
    return PathTable(net, max_hops, per_pair)


@dataclass(frozen=True)
class MultiHopGraph:
    k: int
    edges: frozenset  # undirected pairs (u, v), u < v

    def adjacency_mask(self, n_nodes, self_loops=True):
        mask = np.zeros((n_nodes, n_nodes), dtype=bool)
        for u, v in self.edges:
            mask[u, v] = mask[v, u] = True
        if self_loops:
            np.fill_diagonal(mask, True)
        return mask


def derive_multi_hop_graph(net, k):
    """Join every pair of nodes connected by a simple path of exactly ``k`` links."""
    if k < 1:
        raise ValueError("k must be >= 1")
    edges = set()
    for s in range(net.n_nodes):
        for p in k_hop_paths(net, s, k):
            u, v = p.nodes[0], p.nodes[-1]
            edges.add((min(u, v), max(u, v)))
    return MultiHopGraph(k, frozenset(edges))
