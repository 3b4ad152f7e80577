"""Dataset records, Adam and the supervised training loop."""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class DatasetRecord:
    x: np.ndarray  # (N, 2*R1)
    edge: np.ndarray  # (2E, 2*R2)
    labels: np.ndarray  # (N,)
    topology: str  # structure hash
    meta: dict = field(default_factory=dict)

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x, dtype=float).tobytes())
        h.update(np.ascontiguousarray(self.edge, dtype=float).tobytes())
        return h.hexdigest()

    def to_json(self):
        return json.dumps({
            "x": self.x.tolist(), "edge": self.edge.tolist(), "labels": self.labels.tolist(),
            "topology": self.topology, "meta": self.meta,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(np.asarray(d["x"], dtype=float), np.asarray(d["edge"], dtype=float),
                   np.asarray(d["labels"], dtype=float), d["topology"], d.get("meta", {}))


def write_dataset(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_dataset(path):
    with open(path) as fh:
        return [DatasetRecord.from_json(line) for line in fh if line.strip()]


def stack_records(records, model):
    x = np.stack([r.x for r in records])
    edge = model.dense_edges(np.stack([r.edge for r in records]))
    y = np.stack([r.labels for r in records])
    return x, edge, y


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def backward_and_step(model, batch, optimizer):
    """One optimizer step on ``batch`` = (x, dense edge, labels); returns the
    pre-step MSE."""
    x, edge, y = batch
    loss, grads = model.loss_and_grads(x, edge, y)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        bad = sorted(k for k, g in grads.items() if not np.all(np.isfinite(g)))
        raise TrainingDiverged(f"non-finite loss/gradient (loss={loss}, bad grads: {', '.join(bad) or 'none'})")
    optimizer.step(model.params, grads)
    return loss


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 5
    val_ratio: float = 0.2
    seed: int = 0
    min_delta: float = 0.0
    standardize: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    curve: list  # (epoch, train_mse, val_mse)
    wall: list  # seconds per epoch
    best_epoch: int
    best_val: float


def split_indices(n, val_ratio, seed):
    rng = np.random.default_rng(seed)
    idx = rng.permutation(n)
    n_val = max(1, int(round(n * val_ratio))) if n > 1 else 0
    return idx[n_val:], idx[:n_val]


def mse(model, x, edge, y, batch=256):
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for s in range(0, len(x), batch):
        out = model.predict_batch(x[s:s + batch], edge[s:s + batch])
        total += float(np.sum((out - y[s:s + batch]) ** 2))
    return total / y.size


def train(model, records, config=None, log=None):
    """Mini-batch Adam on MSE with early stopping on the validation split.

    The best-validation parameters are restored before returning.
    """
    config = config or TrainConfig()
    if not records:
        raise ValueError("empty dataset")
    tr, va = split_indices(len(records), config.val_ratio, config.seed)
    if config.standardize:
        model.fit_scaling(np.stack([records[i].x for i in tr]),
                          np.stack([records[i].edge for i in tr]))
    x, edge, y = stack_records(records, model)
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.params, lr=config.lr)
    best = (float("inf"), 0, {k: v.copy() for k, v in model.params.items()})
    curve, wall = [], []
    stale = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = tr[rng.permutation(len(tr))]
        losses = []
        for s in range(0, len(order), config.batch_size):
            b = order[s:s + config.batch_size]
            losses.append(backward_and_step(model, (x[b], edge[b], y[b]), opt) * len(b))
        train_mse = float(np.sum(losses) / len(order))
        val_mse = mse(model, x[va], edge[va], y[va]) if len(va) else train_mse
        curve.append((epoch, train_mse, val_mse))
        wall.append(time.perf_counter() - t0)
        if log is not None:
            log(epoch, train_mse, val_mse)
        if val_mse < best[0] - config.min_delta:
            best = (val_mse, epoch, {k: v.copy() for k, v in model.params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.params = best[2]
    return TrainResult(model, curve, wall, best[1], best[0])
