"""Input tensors for the destination-scoring network."""

import numpy as np


def build_node_features(state, net, key):
    """(N, 2*R1): VNF demand over each node's capacity, then the node's own
    utilization ratio."""
    cap = state.node_cap
    r = state.vnf_demand[key]
    return np.concatenate([r[None, :] / cap, state.node_util / cap], axis=1)


def link_requirement(state, key, mode="sum"):
    """Bandwidth demand of every VNF link touching ``key`` (up- and downstream).

    ``mode="mean"`` divides by the number of adjacent links instead of summing.
    """
    up, down = state.adjacent_links(key)
    links = up + down
    total = np.zeros(state.link_cap.shape[1])
    for l in links:
        total = total + state.link_demand[l.key]
    if mode == "mean" and links:
        total = total / len(links)
    elif mode not in ("sum", "mean"):
        raise ValueError(f"unknown edge feature mode {mode!r}")
    return total


def build_edge_features(state, net, key, mode="sum"):
    """(2E, 2*R2): per physical link, requirement over capacity then
    utilization over capacity; each link appears twice (u->v, v->u)."""
    cap = state.link_cap
    req = link_requirement(state, key, mode)
    rows = np.concatenate([req[None, :] / cap, state.link_util / cap], axis=1)
    return np.repeat(rows, 2, axis=0)


def dense_edge_features(rows, edges, n_nodes):
    """Scatter directed edge rows (..., 2E, P) into (..., N, N, P); row 2e is
    u->v and row 2e+1 is v->u for edge e = (u, v).  Missing pairs and
    self-loops get zeros."""
    rows = np.asarray(rows, dtype=float)
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    out = np.zeros(rows.shape[:-2] + (n_nodes, n_nodes, rows.shape[-1]))
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        out[..., u, v, :] = rows[..., 0::2, :]
        out[..., v, u, :] = rows[..., 1::2, :]
    return out
