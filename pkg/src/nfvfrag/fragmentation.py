"""Multidimensional resource fragment model and the maximum weighted
fragmentation level.

Connectivity is measured on absolute residual capacities (not utilization
ratios) so heterogeneous networks stay comparable.  Negative residuals of an
over-committed element are clipped to zero.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .topology import hop_distances, k_hop_paths

DEFAULT_K = 2
DEFAULT_Q = 0.5
DIMENSIONS = ("cpu", "mem", "bw")


class CorrelationUndefined(ValueError):
    pass


def _utils(state):
    return state.node_util, state.link_util


class FragmentationModel:
    """Precomputed ring-averaging and path-incidence structures for one
    network and receptive-field limit ``K``.

    All evaluation methods broadcast over leading batch axes of the
    utilization arrays, so |N| what-if states can be scored in one call.
    """

    def __init__(self, net, K=DEFAULT_K):
        if K < 0:
            raise ValueError("K must be >= 0")
        self.net = net
        self.K = K
        self.node_cap = net.node_capacity
        self.link_cap = net.link_capacity
        N = net.n_nodes
        dist = hop_distances(net)
        self.rings = []
        for k in range(K + 1):
            member = (dist == k).astype(float)
            counts = member.sum(axis=1, keepdims=True)
            self.rings.append(np.divide(member, counts, out=np.zeros_like(member), where=counts > 0))
        self.path_edges = [None]
        self.path_mean = [None]
        for k in range(1, K + 1):
            edges, owners = [], []
            for n in range(N):
                for p in k_hop_paths(net, n, k):
                    edges.append(p.links)
                    owners.append(n)
            edges = np.asarray(edges, dtype=int).reshape(-1, k)
            mean = np.zeros((N, len(owners)))
            if owners:
                mean[owners, np.arange(len(owners))] = 1.0
                counts = mean.sum(axis=1, keepdims=True)
                mean = np.divide(mean, counts, out=np.zeros_like(mean), where=counts > 0)
            self.path_edges.append(edges)
            self.path_mean.append(mean)

    @property
    def n_dims(self):
        return self.node_cap.shape[1] + self.link_cap.shape[1]

    def residuals(self, node_util, link_util):
        return (np.maximum(self.node_cap - node_util, 0.0),
                np.maximum(self.link_cap - link_util, 0.0))

    def path_connectivity(self, link_util, k):
        """(..., N, R2) mean over k-hop paths of the bottleneck residual."""
        link_res = np.maximum(self.link_cap - link_util, 0.0)
        shape = link_res.shape[:-2] + (self.node_cap.shape[0], link_res.shape[-1])
        if k == 0 or self.path_edges[k].shape[0] == 0:
            return np.zeros(shape)
        per_path = link_res[..., self.path_edges[k], :].min(axis=-2)
        return np.einsum("np,...pr->...nr", self.path_mean[k], per_path)

    def neighbor_connectivity(self, node_util, k):
        """(..., N, R1) mean residual over nodes exactly k hops away
        (own residual at k = 0)."""
        node_res = np.maximum(self.node_cap - node_util, 0.0)
        return np.einsum("nm,...mr->...nr", self.rings[k], node_res)

    def connectivity(self, node_util, link_util):
        """(..., K+1, N, R1+R2) spliced connectivity vectors."""
        parts = [
            np.concatenate([self.neighbor_connectivity(node_util, k),
                            self.path_connectivity(link_util, k)], axis=-1)
            for k in range(self.K + 1)
        ]
        return np.stack(parts, axis=-3)

    def alpha(self, node_util, link_util):
        a_node = node_util.sum(axis=-2) / self.node_cap.sum(axis=0)
        a_link = link_util.sum(axis=-2) / self.link_cap.sum(axis=0)
        return np.concatenate([a_node, a_link], axis=-1)

    def node_levels(self, node_util, link_util, q=DEFAULT_Q):
        """Overall per-node fragmentation levels, shape (..., N).

        Where every resource weight is zero the level is defined as 1.
        """
        f = fragment_values(self.connectivity(node_util, link_util))
        alpha = self.alpha(node_util, link_util)
        beta = receptive_weights(self.K, q)
        total = alpha.sum(axis=-1)
        safe = np.where(total > 0, total, 1.0)
        per_k = np.einsum("...knr,...r->...kn", f, alpha) / safe[..., None, None]
        levels = np.einsum("k,...kn->...n", beta, per_k) / beta.sum()
        return np.where((total > 0)[..., None], levels, 1.0)

    def max_level(self, node_util, link_util, q=DEFAULT_Q):
        return self.node_levels(node_util, link_util, q).max(axis=-1)

    def report(self, state, q=DEFAULT_Q):
        nu, lu = _utils(state)
        f = fragment_values(self.connectivity(nu, lu))
        alpha = self.alpha(nu, lu)
        beta = receptive_weights(self.K, q)
        vacuous = not alpha.sum() > 0
        if vacuous:
            per_k = np.ones((self.K + 1, nu.shape[0]))
        else:
            per_k = np.einsum("knr,r->kn", f, alpha) / alpha.sum()
        levels = self.node_levels(nu, lu, q)
        return FragmentationReport(
            t=getattr(state, "t", 0), f=f, alpha=alpha, beta=beta, levels_k=per_k,
            levels=levels, max_level=float(levels.max()), vacuous=vacuous,
        )


@lru_cache(maxsize=32)
def model_for(net, K=DEFAULT_K):
    return FragmentationModel(net, K)


@dataclass
class FragmentationReport:
    t: int
    f: np.ndarray  # (K+1, N, R1+R2) fragment values
    alpha: np.ndarray
    beta: np.ndarray
    levels_k: np.ndarray  # (K+1, N)
    levels: np.ndarray  # (N,)
    max_level: float
    vacuous: bool = False

    def rows(self):
        dims = DIMENSIONS if self.f.shape[-1] == len(DIMENSIONS) else range(self.f.shape[-1])
        for n in range(self.f.shape[1]):
            for k in range(self.f.shape[0]):
                for i, name in enumerate(dims):
                    yield {"slot": self.t, "node": n, "k": k, "dimension": name,
                           "f_value": float(self.f[k, n, i]),
                           "node_level": float(self.levels[n]),
                           "network_max": self.max_level}


def receptive_weights(K, q):
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    return q ** np.arange(K + 1, dtype=float)


def fragment_values(connectivity):
    return 1.0 / (np.asarray(connectivity, dtype=float) + 1.0)


def path_connectivity(state, net, n, k, K=DEFAULT_K):
    model = model_for(net, max(K, k))
    return model.path_connectivity(state.link_util, k)[n]


def neighbor_connectivity(state, net, n, k, K=DEFAULT_K):
    model = model_for(net, max(K, k))
    return model.neighbor_connectivity(state.node_util, k)[n]


def resource_weights(state, net):
    return model_for(net, 0).alpha(*_utils(state))


def node_fragmentation_level(levels_by_k, q=DEFAULT_Q):
    """Geometrically weighted mean of per-ring levels ``levels_by_k[0..K]``."""
    levels_by_k = np.asarray(levels_by_k, dtype=float)
    beta = receptive_weights(len(levels_by_k) - 1, q)
    return float(beta @ levels_by_k / beta.sum())


def ring_level(f_values, alpha):
    """alpha-weighted mean of per-dimension fragment values for one ring.
    Returns 1.0 when all weights vanish."""
    alpha = np.asarray(alpha, dtype=float)
    if not alpha.sum() > 0:
        return 1.0
    return float(alpha @ np.asarray(f_values, dtype=float) / alpha.sum())


def max_weighted_fragmentation(state, net, K=DEFAULT_K, q=DEFAULT_Q):
    return float(model_for(net, K).max_level(*_utils(state), q=q))


METRIC_NAMES = ("avr_maxutil", "avr_var", "avr_frag", "max_maxutil", "max_var", "max_frag")


def load_metric_suite(state, net, K=DEFAULT_K, q=DEFAULT_Q):
    """Six per-slot load metrics: per-dimension maximum utilization ratio and
    variance of utilization ratios (nodes for cpu/mem, links for bw),
    aggregated by mean and max across dimensions, plus the mean and max of
    the per-node weighted fragmentation levels."""
    nu, lu = _utils(state)
    ratios = [nu[:, i] / net.node_capacity[:, i] for i in range(nu.shape[1])]
    ratios += [lu[:, i] / net.link_capacity[:, i] for i in range(lu.shape[1])]
    maxutil = np.array([r.max() for r in ratios])
    var = np.array([r.var() for r in ratios])
    levels = model_for(net, K).node_levels(nu, lu, q)
    return {
        "avr_maxutil": float(maxutil.mean()),
        "avr_var": float(var.mean()),
        "avr_frag": float(levels.mean()),
        "max_maxutil": float(maxutil.max()),
        "max_var": float(var.max()),
        "max_frag": float(levels.max()),
    }


def distance_correlation(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def centered(v):
        d = np.abs(v[:, None] - v[None, :])
        return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()

    a, b = centered(x), centered(y)
    dcov = (a * b).mean()
    denom = np.sqrt((a * a).mean() * (b * b).mean())
    return float(np.sqrt(max(dcov, 0.0) / denom)) if denom > 0 else 0.0


CORRELATION_METHODS = ("pearson", "spearman", "kendall", "distance")


def correlate(x, y, method="pearson"):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise CorrelationUndefined("correlation undefined for a constant series")
    if method == "pearson":
        r = stats.pearsonr(x, y).statistic
    elif method == "spearman":
        r = stats.spearmanr(x, y).statistic
    elif method == "kendall":
        r = stats.kendalltau(x, y, variant="b").statistic
    elif method == "distance":
        r = distance_correlation(x, y)
    else:
        raise ValueError(f"unknown correlation method {method!r}")
    return float(np.clip(r, -1.0, 1.0))
