"""JSON checkpoints; floats are written with repr precision so a round trip
is bit-exact."""

import json
from pathlib import Path

import numpy as np

from .model import MhgatModel

FORMAT = "nfvfrag-mhgat/1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model, path=None, extra=None):
    doc = {
        "format": FORMAT,
        "topology_hash": model.topology_hash,
        "n_nodes": model.n_nodes,
        "edges": [list(e) for e in model.edges],
        "hyper": model.hyper,
        "flags": model.flags,
        "params": {
            k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for k, v in sorted(model.params.items())
        },
    }
    doc["scaling"] = {k: [float(x) for x in v] for k, v in sorted(model.scaling.items())}
    if extra:
        doc["extra"] = extra
    text = json.dumps(doc, sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_checkpoint(source, net=None):
    """Rebuild a model.  With ``net`` given, refuse a checkpoint trained on a
    different topology."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source if isinstance(source, str) and source.lstrip().startswith("{") \
            else Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable checkpoint: {exc}") from None
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"unknown checkpoint format {doc.get('format')!r}")
    if net is not None and doc["topology_hash"] != net.structure_hash():
        raise CheckpointError(
            f"checkpoint topology {doc['topology_hash'][:12]} does not match "
            f"network {net.name!r} ({net.structure_hash()[:12]})")
    hyper = dict(doc["hyper"])
    model = MhgatModel(doc["n_nodes"], [tuple(e) for e in doc["edges"]],
                       topology_hash=doc["topology_hash"], **hyper, **doc["flags"])
    expected = model.expected_shapes()
    if set(doc["params"]) != set(expected):
        raise CheckpointError("checkpoint parameter names do not match the architecture")
    params = {}
    for name, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise CheckpointError(f"{name}: shape {shape} != expected {expected[name]}")
        data = np.asarray(entry["data"], dtype=float)
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: {data.size} values for shape {shape}")
        params[name] = data.reshape(shape)
    model.params = params
    scaling = doc.get("scaling")
    if scaling is not None:
        for k, ref in model.scaling.items():
            vals = np.asarray(scaling.get(k, ()), dtype=float)
            if vals.shape != ref.shape:
                raise CheckpointError(f"scaling {k}: shape {vals.shape} != expected {ref.shape}")
            model.scaling[k] = vals
    return model
