"""Multi-hop graph attention network with hand-written backpropagation.

Shapes: B batch, N nodes, M heads, D per-head width, F input width, P edge
feature width.  Attention is masked to each layer's graph (plus self-loops).
"""

import numpy as np

from ..topology import LinkSpec, Network, NodeSpec, derive_multi_hop_graph
from .features import dense_edge_features

LEAK = 0.2
NEG = -1e30


class ConfigError(ValueError):
    pass


def _leaky(x):
    return np.where(x > 0, x, LEAK * x)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _glorot(rng, shape, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def gat_forward(p, x, mask, edge=None, uniform=False):
    """One multi-head graph attention layer.

    ``p`` holds ``W`` (M, F, D), ``a_dst`` and ``a_src`` (M, D) and optionally
    ``a_edge`` (M, P).  ``x`` is (B, N, F); ``edge`` is (B, N, N, P) or None.
    With ``uniform=True`` attention is replaced by the plain neighbor mean.
    Returns the (B, N, M*D) output and a cache for :func:`gat_backward`.
    """
    W = p["W"]
    z = np.einsum("bnf,mfd->bmnd", x, W)
    if uniform:
        att = np.broadcast_to(mask / mask.sum(axis=1, keepdims=True), (x.shape[0], W.shape[0]) + mask.shape)
        e = None
    else:
        s_dst = np.einsum("bmnd,md->bmn", z, p["a_dst"])
        s_src = np.einsum("bmnd,md->bmn", z, p["a_src"])
        e = s_dst[..., :, None] + s_src[..., None, :]
        if edge is not None:
            e = e + np.einsum("bijp,mp->bmij", edge, p["a_edge"])
        g = np.where(mask, _leaky(e), NEG)
        g = g - g.max(axis=-1, keepdims=True)
        ex = np.exp(g) * mask
        att = ex / ex.sum(axis=-1, keepdims=True)
    h = np.einsum("bmij,bmjd->bmid", att, z)
    out = _elu(h)
    B, M, N, D = out.shape
    cache = dict(x=x, z=z, e=e, att=att, h=h, edge=edge, mask=mask, uniform=uniform)
    return out.transpose(0, 2, 1, 3).reshape(B, N, M * D), cache


def gat_backward(p, cache, dout):
    """Gradients of a GAT layer; returns (dx, param grads)."""
    z, att, h = cache["z"], cache["att"], cache["h"]
    B, M, N, D = h.shape
    dh = dout.reshape(B, N, M, D).transpose(0, 2, 1, 3) * _elu_grad(h)
    dz = np.einsum("bmij,bmid->bmjd", att, dh)
    grads = {}
    if not cache["uniform"]:
        datt = np.einsum("bmid,bmjd->bmij", dh, z)
        dg = att * (datt - (att * datt).sum(axis=-1, keepdims=True))
        de = dg * np.where(cache["e"] > 0, 1.0, LEAK)
        ds_dst = de.sum(axis=-1)
        ds_src = de.sum(axis=-2)
        grads["a_dst"] = np.einsum("bmn,bmnd->md", ds_dst, z)
        grads["a_src"] = np.einsum("bmn,bmnd->md", ds_src, z)
        if cache["edge"] is not None:
            grads["a_edge"] = np.einsum("bmij,bijp->mp", de, cache["edge"])
        dz = dz + ds_dst[..., None] * p["a_dst"][None, :, None, :] \
                + ds_src[..., None] * p["a_src"][None, :, None, :]
    else:
        for name in ("a_dst", "a_src", "a_edge"):
            if name in p:
                grads[name] = np.zeros_like(p[name])
    grads["W"] = np.einsum("bnf,bmnd->mfd", cache["x"], dz)
    dx = np.einsum("bmnd,mfd->bnf", dz, p["W"])
    return dx, grads


def _hop_masks(n_nodes, edges, multihop=True):
    nodes = tuple(NodeSpec(i, (1.0, 1.0)) for i in range(n_nodes))
    links = tuple(LinkSpec(i, (min(u, v), max(u, v)), (1.0,), 1.0) for i, (u, v) in enumerate(edges))
    net = Network(nodes, links)
    ks = (1, 2, 3) if multihop else (1, 1, 1)
    return [derive_multi_hop_graph(net, k).adjacency_mask(n_nodes) for k in ks]


class MhgatModel:
    """Three GAT layers over the 1-, 2- and 3-hop graphs, residual links back
    to the first layer's output, and a three-layer ReLU head."""

    def __init__(self, n_nodes, edges, node_dim=4, edge_dim=2, heads=4, head_dim=8,
                 hidden=(32, 16), use_gat=True, use_residual=True, use_multihop=True,
                 seed=0, out_bias=0.3, topology_hash=None):
        self.n_nodes = n_nodes
        self.edges = [tuple(map(int, e)) for e in edges]
        self.node_dim, self.edge_dim = node_dim, edge_dim
        self.heads, self.head_dim = heads, head_dim
        self.hidden = tuple(hidden)
        self.use_gat, self.use_residual, self.use_multihop = use_gat, use_residual, use_multihop
        self.seed = seed
        self.topology_hash = topology_hash
        self.masks = _hop_masks(n_nodes, self.edges, use_multihop)
        rng = np.random.default_rng(seed)
        width = heads * head_dim
        p = {}
        for layer, fin in ((1, node_dim), (2, width), (3, width)):
            p[f"gat{layer}.W"] = _glorot(rng, (heads, fin, head_dim), fin, head_dim)
            p[f"gat{layer}.a_dst"] = _glorot(rng, (heads, head_dim), 2 * head_dim, 1)
            p[f"gat{layer}.a_src"] = _glorot(rng, (heads, head_dim), 2 * head_dim, 1)
        p["gat1.a_edge"] = _glorot(rng, (heads, edge_dim), edge_dim, 1)
        dims = (width, width) + self.hidden + (1,)
        for i in range(3):
            fin, fout = dims[i + 1], dims[i + 2]
            p[f"lin{i + 1}.W"] = _glorot(rng, (fin, fout), fin, fout)
            p[f"lin{i + 1}.b"] = np.zeros(fout)
        p["lin3.b"][:] = out_bias
        self.params = p
        # fixed input standardization, fitted on training data (identity by default)
        self.scaling = {"x_mean": np.zeros(node_dim), "x_std": np.ones(node_dim),
                        "e_mean": np.zeros(edge_dim), "e_std": np.ones(edge_dim)}
        self.edge_mask = self.masks[0] & ~np.eye(n_nodes, dtype=bool)

    def fit_scaling(self, x, edge_rows):
        """Per-column mean/std of node features (B, N, F) and directed edge
        rows (B, 2E, P); near-constant columns keep unit scale."""
        def stats(a):
            a = a.reshape(-1, a.shape[-1])
            sd = a.std(axis=0)
            return a.mean(axis=0), np.where(sd > 1e-12, sd, 1.0)
        self.scaling["x_mean"], self.scaling["x_std"] = stats(np.asarray(x, float))
        if np.asarray(edge_rows).size:
            self.scaling["e_mean"], self.scaling["e_std"] = stats(np.asarray(edge_rows, float))

    def standardize(self, x, edge):
        sc = self.scaling
        x = (x - sc["x_mean"]) / sc["x_std"]
        edge = (edge - sc["e_mean"]) / sc["e_std"] * self.edge_mask[..., None]
        return x, edge

    @classmethod
    def for_network(cls, net, **kw):
        kw.setdefault("topology_hash", net.structure_hash())
        return cls(net.n_nodes, net.edges, **kw)

    @property
    def flags(self):
        return {"use_gat": self.use_gat, "use_residual": self.use_residual,
                "use_multihop": self.use_multihop}

    @property
    def hyper(self):
        return {"node_dim": self.node_dim, "edge_dim": self.edge_dim, "heads": self.heads,
                "head_dim": self.head_dim, "hidden": list(self.hidden), "seed": self.seed}

    def expected_shapes(self):
        width = self.heads * self.head_dim
        shapes = {}
        for layer, fin in ((1, self.node_dim), (2, width), (3, width)):
            shapes[f"gat{layer}.W"] = (self.heads, fin, self.head_dim)
            shapes[f"gat{layer}.a_dst"] = (self.heads, self.head_dim)
            shapes[f"gat{layer}.a_src"] = (self.heads, self.head_dim)
        shapes["gat1.a_edge"] = (self.heads, self.edge_dim)
        dims = (width, width) + self.hidden + (1,)
        for i in range(3):
            shapes[f"lin{i + 1}.W"] = (dims[i + 1], dims[i + 2])
            shapes[f"lin{i + 1}.b"] = (dims[i + 2],)
        return shapes

    def _layer(self, i):
        pre = f"gat{i}."
        return {k[len(pre):]: v for k, v in self.params.items() if k.startswith(pre)}

    def dense_edges(self, rows):
        return dense_edge_features(rows, self.edges, self.n_nodes)

    def forward(self, x, edge):
        """``x`` (B, N, node_dim), ``edge`` dense (B, N, N, edge_dim).
        Returns (B, N) outputs and the activation cache."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[1:] != (self.n_nodes, self.node_dim):
            raise ConfigError(f"node features shape {x.shape} != (B, {self.n_nodes}, {self.node_dim})")
        if edge.shape[1:] != (self.n_nodes, self.n_nodes, self.edge_dim):
            raise ConfigError(f"edge features shape {edge.shape} does not match the model")
        x, edge = self.standardize(x, edge)
        uni = not self.use_gat
        c = {}
        o1, c["g1"] = gat_forward(self._layer(1), x, self.masks[0], edge, uni)
        o2, c["g2"] = gat_forward(self._layer(2), o1, self.masks[1], None, uni)
        o2p = o1 + o2 if self.use_residual else o2
        o3, c["g3"] = gat_forward(self._layer(3), o2p, self.masks[2], None, uni)
        o3p = o1 + o3 if self.use_residual else o3
        p = self.params
        a1 = o3p @ p["lin1.W"] + p["lin1.b"]
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ p["lin2.W"] + p["lin2.b"]
        h2 = np.maximum(a2, 0.0)
        a3 = h2 @ p["lin3.W"] + p["lin3.b"]
        out = np.maximum(a3, 0.0)[..., 0]
        c.update(O1=o1, O2=o2, O2p=o2p, O3=o3, O3p=o3p, a1=a1, h1=h1, a2=a2, h2=h2, a3=a3)
        return out, c

    def backward(self, c, dout):
        p = self.params
        g = {}
        da3 = dout[..., None] * (c["a3"] > 0)
        g["lin3.W"] = np.einsum("bnh,bno->ho", c["h2"], da3)
        g["lin3.b"] = da3.sum(axis=(0, 1))
        da2 = (da3 @ p["lin3.W"].T) * (c["a2"] > 0)
        g["lin2.W"] = np.einsum("bnh,bno->ho", c["h1"], da2)
        g["lin2.b"] = da2.sum(axis=(0, 1))
        da1 = (da2 @ p["lin2.W"].T) * (c["a1"] > 0)
        g["lin1.W"] = np.einsum("bnh,bno->ho", c["O3p"], da1)
        g["lin1.b"] = da1.sum(axis=(0, 1))
        do3p = da1 @ p["lin1.W"].T
        do1 = do3p if self.use_residual else 0.0
        do2p, g3 = gat_backward(self._layer(3), c["g3"], do3p)
        do1 = do1 + (do2p if self.use_residual else 0.0)
        do1_from2, g2 = gat_backward(self._layer(2), c["g2"], do2p)
        do1 = do1 + do1_from2
        _, g1 = gat_backward(self._layer(1), c["g1"], do1)
        for i, gl in ((1, g1), (2, g2), (3, g3)):
            for k, v in gl.items():
                g[f"gat{i}.{k}"] = v
        return g

    def loss_and_grads(self, x, edge, y):
        out, c = self.forward(x, edge)
        diff = out - y
        loss = float(np.mean(diff ** 2))
        grads = self.backward(c, 2.0 * diff / diff.size)
        return loss, grads

    def predict(self, x, edge_rows):
        """Scores for one sample: ``x`` (N, node_dim), ``edge_rows`` (2E, edge_dim)."""
        out, _ = self.forward(np.asarray(x)[None], self.dense_edges(edge_rows)[None])
        return out[0]

    def predict_batch(self, x, edge):
        return self.forward(x, edge)[0]

    def copy(self):
        other = object.__new__(MhgatModel)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.scaling = {k: v.copy() for k, v in self.scaling.items()}
        return other
