"""Overload-driven VNF migration: VNF selection, migration loss, destination
policies and the per-slot migration round."""

from dataclasses import dataclass, field

import numpy as np

from .fragmentation import DEFAULT_K, DEFAULT_Q, model_for
from .state import EPS, InfeasibleMigration, select_path

DEFAULT_ZETA = 5
DEFAULT_BW = 1.0  # MBps reserved per VNF migration
INFEASIBLE_LABEL = 1.0


class SelectionExhausted(Exception):
    """Every VNF on the node is blacklisted."""


class MigrationFailed(Exception):
    """No feasible destination for the selected VNF."""


def select_vnf(state, n, j, blacklist=(), rho=None):
    """VNF to move off overloaded node ``n`` for resource ``j``.

    If no single move can bring the node back under the threshold, take the
    largest consumer of ``j``; otherwise take the smallest consumer whose
    removal is enough.  Ties go to the lowest VNF key.
    """
    rho = state.rho if rho is None else rho
    cands = sorted(k for k in state.node_vnfs[n] if k not in blacklist)
    if not cands:
        raise SelectionExhausted(f"all VNFs on node {n} blacklisted")
    u = state.node_util[n, j]
    limit = rho * state.node_cap[n, j]
    dem = {k: state.vnf_demand[k][j] for k in cands}
    largest = max(dem.values())
    if u - largest > limit:
        return max(cands, key=lambda k: (dem[k], _neg(k)))
    fixes = [k for k in cands if u - dem[k] <= limit]
    return min(fixes, key=lambda k: (dem[k], k))


def _neg(key):
    return tuple(-x for x in key)


def select_max_demand(state, n, j, blacklist=()):
    cands = sorted(k for k in state.node_vnfs[n] if k not in blacklist)
    if not cands:
        raise SelectionExhausted(f"all VNFs on node {n} blacklisted")
    return max(cands, key=lambda k: (state.vnf_demand[k][j], _neg(k)))


def migration_loss(state, key, dst, bw=DEFAULT_BW):
    """Upstream traffic (MB) displaced while VNF ``key`` moves to ``dst``.

    Transfer time is the VNF's memory (GB -> MB) over the reserved bandwidth;
    propagation time is the delay of the minimum-delay path (ms -> s).  Their
    sum multiplies the summed bandwidth demand of the VNF's upstream links.
    """
    src = state.placement[key]
    if dst == src:
        return 0.0
    path = state.table.min_delay_path(src, dst)
    if path is None:
        raise MigrationFailed(f"no path from {src} to {dst}")
    t_tr = state.vnf_demand[key][1] * 1000.0 / bw
    t_pr = path.delay / 1000.0
    up, _ = state.adjacent_links(key)
    upstream = sum(float(state.link_demand[l.key][0]) for l in up)
    return (t_tr + t_pr) * upstream


def greedy_destination(state, key, j):
    """Feasible node with the largest residual of resource ``j``."""
    src = state.placement[key]
    residual = state.node_cap[:, j] - state.node_util[:, j]
    order = sorted((n for n in range(state.net.n_nodes) if n != src),
                   key=lambda n: (-residual[n], n))
    for n in order:
        try:
            return state.plan_migration(key, n)
        except InfeasibleMigration:
            continue
    raise MigrationFailed(f"no feasible destination for {key}")


@dataclass
class OracleResult:
    node: int  # best feasible destination, -1 if none
    labels: np.ndarray  # post-migration max fragmentation per destination
    plans: dict  # destination -> MigrationAction

    @property
    def action(self):
        return self.plans.get(self.node)


def oracle_destination(state, key, K=DEFAULT_K, q=DEFAULT_Q):
    """Simulate the move to every node and score the resulting networks.

    The current host gets the unchanged network's level; infeasible
    destinations get the sentinel 1.0.
    """
    model = model_for(state.net, K)
    src = state.placement[key]
    N = state.net.n_nodes
    labels = np.full(N, INFEASIBLE_LABEL)
    plans = {}
    for d in range(N):
        if d == src:
            continue
        try:
            plans[d] = state.plan_migration(key, d)
        except InfeasibleMigration:
            pass
    nodes = [src] + sorted(plans)
    nu = np.stack([state.node_util] + [plans[d].node_util for d in nodes[1:]])
    lu = np.stack([state.link_util] + [plans[d].link_util for d in nodes[1:]])
    labels[nodes] = model.max_level(nu, lu, q)
    best = -1
    if plans:
        feas = sorted(plans)
        best = min(feas, key=lambda d: (labels[d], d))
    return OracleResult(best, labels, plans)


def reroute_overloaded_link(state, e, j, rho=None):
    """Move VNF links off physical link ``e`` (largest demand first) onto
    the first fitting path avoiding ``e`` until the excess is gone.

    Returns (rerouted link keys, failed link keys).
    """
    rho = state.rho if rho is None else rho
    delta = state.link_util[e, j] - rho * state.link_cap[e, j]
    cands = sorted(state.link_vlinks[e], key=lambda k: (-state.link_demand[k][j], k))
    moved, failed = [], []
    for lk in cands:
        if delta <= 0:
            break
        l = state.vlinks[lk]
        d = state.link_demand[lk]
        old = state.routes[lk]
        util = state.link_util.copy()
        util[list(old.links)] -= d
        a = state.placement[(lk[0], l.src)]
        b = state.placement[(lk[0], l.dst)]
        proc = state.sfcs[lk[0]].vnfs[l.dst].processing_delay
        p = select_path(state.table, util, state.link_cap, rho, d, l.deadline, proc, a, b,
                        exclude=e)
        if p is None:
            failed.append(lk)
            continue
        state.reroute(lk, p)
        delta -= d[j]
        moved.append(lk)
    return moved, failed


# -- policies -----------------------------------------------------------------

class GreedyPolicy:
    """Largest consumer of the overloaded resource, moved to the node with
    the most of that resource left, shortest fitting paths."""

    name = "greedy"

    def select(self, state, n, j, blacklist):
        return select_max_demand(state, n, j, blacklist)

    def destination(self, state, key, j):
        return greedy_destination(state, key, j)


class OraclePolicy:
    """Exhaustive what-if search minimizing the post-move network level."""

    name = "oracle"

    def __init__(self, K=DEFAULT_K, q=DEFAULT_Q, recorder=None):
        self.K, self.q = K, q
        self.recorder = recorder

    def select(self, state, n, j, blacklist):
        return select_vnf(state, n, j, blacklist)

    def destination(self, state, key, j):
        res = oracle_destination(state, key, self.K, self.q)
        if self.recorder is not None:
            self.recorder(state, key, res)
        if res.node < 0:
            raise MigrationFailed(f"no feasible destination for {key}")
        return res.action


class MhgatPolicy:
    """Destinations ranked by the model's predicted post-move level; the
    lowest-ranked feasible node wins."""

    name = "mhgat"

    def __init__(self, model, edge_mode="sum"):
        self.model = model
        self.edge_mode = edge_mode
        self.last_prediction = None

    def select(self, state, n, j, blacklist):
        return select_vnf(state, n, j, blacklist)

    def destination(self, state, key, j):
        from .mhgat.features import build_edge_features, build_node_features

        x = build_node_features(state, state.net, key)
        ef = build_edge_features(state, state.net, key, mode=self.edge_mode)
        pred = self.model.predict(x, ef)
        self.last_prediction = pred
        src = state.placement[key]
        for n in np.lexsort((np.arange(len(pred)), pred)):
            n = int(n)
            if n == src:
                continue
            try:
                return state.plan_migration(key, n)
            except InfeasibleMigration:
                continue
        raise MigrationFailed(f"no feasible destination for {key}")


def make_policy(kind, model=None, K=DEFAULT_K, q=DEFAULT_Q):
    if kind == "greedy":
        return GreedyPolicy()
    if kind == "oracle":
        return OraclePolicy(K, q)
    if kind == "mhgat":
        if model is None:
            raise ValueError("mhgat policy needs a trained model")
        return MhgatPolicy(model)
    raise ValueError(f"unknown policy {kind!r}")


# -- the round ----------------------------------------------------------------

@dataclass
class ActionRecord:
    kind: str  # "vnf" | "link"
    item: tuple
    source: int
    destination: int
    loss: float = 0.0
    node: int = -1  # overloaded node / link that triggered it


@dataclass
class MigrationOutcome:
    actions: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (kind, item, trigger)
    iterations: dict = field(default_factory=dict)  # node -> loop count
    post_frag: float = float("nan")

    @property
    def total_loss(self):
        return float(sum(a.loss for a in self.actions))

    @property
    def losses(self):
        return [a.loss for a in self.actions if a.kind == "vnf"]


def run_migration_round(state, policy, rho=None, zeta=DEFAULT_ZETA, bw=DEFAULT_BW,
                        K=DEFAULT_K, q=DEFAULT_Q, overloads=None):
    """One pass of overload relief: node overloads first (at most ``zeta``
    attempts per node, failed VNFs blacklisted), then link overloads."""
    if zeta < 1:
        raise ValueError("zeta must be >= 1")
    rho = state.rho if rho is None else rho
    out = MigrationOutcome()
    if overloads is None:
        overloads = state.detect_overloads(rho)
    cap = state.node_cap
    for n in sorted(overloads.nodes):
        loop = 0
        blacklist = set()
        while np.any(state.node_util[n] > rho * cap[n]) and loop < zeta:
            loop += 1
            j = int(np.argmax(state.node_util[n] / cap[n]))
            try:
                key = policy.select(state, n, j, blacklist)
            except SelectionExhausted:
                break
            try:
                action = policy.destination(state, key, j)
                loss = migration_loss(state, key, action.destination, bw)
                state.apply_migration(action)
            except (MigrationFailed, InfeasibleMigration):
                blacklist.add(key)
                out.failures.append(("vnf", key, n))
                continue
            out.actions.append(ActionRecord("vnf", key, action.source, action.destination, loss, n))
        out.iterations[n] = loop
    link_over = state.detect_overloads(rho).links
    for e in sorted(link_over):
        j = link_over[e]
        moved, failed = reroute_overloaded_link(state, e, j, rho)
        for lk in moved:
            p = state.routes[lk]
            out.actions.append(ActionRecord("link", lk, p.nodes[0], p.nodes[-1], 0.0, e))
        out.failures.extend(("link", lk, e) for lk in failed)
    out.post_frag = float(model_for(state.net, K).max_level(state.node_util, state.link_util, q))
    return out
