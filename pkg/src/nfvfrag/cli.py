"""``nfvfrag`` command line: simulate, gen-dataset, train, eval, sweep,
analyze-frag, bench-runtime and rerun.

Every run writes ``manifest.json`` next to its outputs.  Outputs listed under
``outputs`` are pure functions of the manifest; files under ``timing`` hold
wall-clock measurements and are not expected to reproduce.  Set
``NFVFRAG_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .report import emit_report, write_csv, write_json

log = logging.getLogger("nfvfrag")

MANIFEST = "manifest.json"
LOCK = ".nfvfrag.lock"


class CliError(Exception):
    """Usage or input problem; reported as an error document with exit 2."""

    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# -- option tables --------------------------------------------------------------
# (flag, dest, type, default, help); defaults are materialized into manifests.

def _floats(s):
    return [float(x) for x in str(s).split(",") if x != ""]


def _ints(s):
    return [int(x) for x in str(s).split(",") if x != ""]


def _strs(s):
    return [x for x in str(s).split(",") if x != ""]


SIM_OPTIONS = [
    ("--topology", "topology", str, "nsfnet", "bundled name (nsfnet, usbackbone) or topology JSON path"),
    ("--lambda", "arrival_rate", float, 10.0, "mean SFC arrivals per slot"),
    ("--rho", "rho", float, 0.5, "overload threshold"),
    ("--gamma", "gamma", float, 0.9, "objective weight of fragmentation vs loss"),
    ("--q", "q", float, 0.5, "ring weight ratio beta_k = q^k"),
    ("--K", "K", int, 2, "receptive-field limit"),
    ("--zeta", "zeta", int, 5, "migration attempts per overloaded node"),
    ("--bw", "bw", float, 1.0, "migration bandwidth (MBps)"),
    ("--horizon", "horizon", int, 1000, "slots per run"),
    ("--warmup", "warmup", int, 100, "initial slots excluded from summaries"),
    ("--max-hops", "max_hops", int, 6, "path-table hop cap"),
    ("--paths-per-pair", "paths_per_pair", int, 64, "path-table cap per node pair"),
    ("--cpu-scale", "cpu_scale", float, 1.0, "node CPU capacity multiplier"),
    ("--mem-scale", "mem_scale", float, 1.0, "node memory capacity multiplier"),
    ("--bw-scale", "bw_scale", float, 1.0, "link bandwidth capacity multiplier"),
    ("--demand-mode", "demand_mode", str, "synthetic", "synthetic | trace"),
    ("--trace-files", "trace_files", _strs, [], "comma-separated resource-usage trace files"),
    ("--sfc-topology", "sfc_topology", str, "linear", "linear | dag"),
]

SUBCOMMANDS = {
    "simulate": {
        "help": "run one simulation and log per-slot metrics",
        "options": SIM_OPTIONS + [
            ("--policy", "policy", str, "greedy", "greedy | oracle | mhgat | none"),
            ("--model", "model", str, None, "checkpoint for --policy mhgat"),
        ],
    },
    "gen-dataset": {
        "help": "generate oracle-labeled training records",
        "options": SIM_OPTIONS + [
            ("--target", "target", int, 5000, "unique records to collect"),
            ("--max-runs", "max_runs", int, 50, "simulation runs before giving up"),
        ],
    },
    "train": {
        "help": "train an MHGAT model on a dataset",
        "options": [
            ("--dataset", "dataset", str, None, "dataset JSONL from gen-dataset (required)"),
            ("--variant", "variant", str, "full", "full | no_gat | no_residual | no_multihop"),
            ("--epochs", "epochs", int, 50, "maximum epochs"),
            ("--batch-size", "batch_size", int, 32, "mini-batch size"),
            ("--lr", "lr", float, 1e-3, "Adam learning rate"),
            ("--patience", "patience", int, 5, "early-stopping patience (epochs)"),
            ("--val-ratio", "val_ratio", float, 0.2, "held-out fraction"),
        ],
    },
    "eval": {
        "help": "score a checkpoint on a dataset and/or against baselines in simulation",
        "options": SIM_OPTIONS + [
            ("--model", "model", str, None, "checkpoint to evaluate (required)"),
            ("--dataset", "dataset", str, None, "dataset JSONL for MSE"),
            ("--lambdas", "lambdas", _floats, [], "arrival rates for paired policy runs"),
            ("--seeds", "seeds", _ints, [], "paired seeds for policy runs"),
            ("--policies", "policies", _strs, ["greedy", "oracle", "mhgat"], "policies to compare"),
        ],
    },
    "sweep": {
        "help": "cross-product of parameter values, seeds and policies",
        "options": SIM_OPTIONS + [
            ("--parameter", "parameter", str, "lambda", "lambda | cpu-scale | mem-scale | bw-scale"),
            ("--values", "values", _floats, [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], "parameter values"),
            ("--seeds", "seeds", _ints, [0, 1, 2], "seeds"),
            ("--policies", "policies", _strs, ["greedy", "oracle"], "policies"),
            ("--model", "model", str, None, "checkpoint when policies include mhgat"),
        ],
    },
    "analyze-frag": {
        "help": "correlate load metrics with the overload ratio over an arrival-rate sweep",
        "options": SIM_OPTIONS + [
            ("--values", "values", _floats, [1, 2, 3, 4, 5, 6, 7, 8, 9, 10], "arrival rates"),
            ("--seeds", "seeds", _ints, [0, 1, 2], "seeds"),
            ("--policy", "policy", str, "none", "migration policy during the sweep"),
        ],
    },
    "bench-runtime": {
        "help": "median decision time per policy on complete graphs",
        "options": [
            ("--nodes", "nodes", _ints, [4, 6, 8, 10, 12], "complete-graph sizes"),
            ("--trials", "trials", int, 20, "timed decisions per size and policy"),
            ("--policies", "policies", _strs, ["greedy", "oracle", "mhgat"], "policies"),
        ],
    },
}

INPUT_KEYS = ("dataset", "model", "trace_files")


def _defaults(sub):
    d = {dest: default for _, dest, _, default, _ in SUBCOMMANDS[sub]["options"]}
    d["seed"] = 0
    return d


def build_parser():
    p = _Parser(prog="nfvfrag", description=__doc__.split("\n\n")[0],
                epilog="Environment: NFVFRAG_LOG sets log verbosity (default WARNING).")
    p.add_argument("--version", action="version", version=f"nfvfrag {__version__}")
    subs = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, spec in SUBCOMMANDS.items():
        sp = subs.add_parser(name, help=spec["help"], description=spec["help"])
        _global_flags(sp)
        for flag, dest, typ, default, text in spec["options"]:
            shown = ",".join(map(str, default)) if isinstance(default, list) else default
            sp.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS,
                            help=f"{text} (default: {shown})")
    rr = subs.add_parser("rerun", help="re-execute a run from its manifest")
    rr.add_argument("--manifest", required=True, help="manifest.json of a previous run")
    rr.add_argument("--out-dir", required=True, help="fresh output directory")
    return p


def _global_flags(sp):
    sp.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="top-level seed (default: 0)")
    sp.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS,
                    help="output directory (default: runs/<command>)")
    sp.add_argument("--config", default=argparse.SUPPRESS,
                    help="JSON/YAML file of option overrides (default: none)")


def _load_config_file(path):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {path}")
    text = p.read_text()
    if p.suffix in (".yaml", ".yml"):
        import yaml
        doc = yaml.safe_load(text) or {}
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise CliError(f"{path}: config must be a mapping")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(sub, ns):
    """Defaults, then config-file values, then explicit flags."""
    params = _defaults(sub)
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "out_dir")}
    if "config" in vars(ns):
        overrides = _load_config_file(ns.config)
        unknown = set(overrides) - set(params)
        if unknown:
            raise CliError(f"unknown config keys for {sub}: {sorted(unknown)}")
        params.update(overrides)
    params.update(given)
    return params


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hashes(params):
    out = {}
    for key in INPUT_KEYS:
        val = params.get(key)
        for path in (val if isinstance(val, list) else [val]):
            if path is None:
                continue
            if not Path(path).is_file():
                raise CliError(f"missing input file: {path}")
            out[str(path)] = _sha256(path)
    topo = params.get("topology")
    if topo and Path(topo).is_file():
        out[str(topo)] = _sha256(topo)
    return out


class RunDir:
    """Exclusive ownership of an output directory via a lock file."""

    def __init__(self, path):
        self.path = Path(path)

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        self.lock = self.path / LOCK
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(f"output directory {self.path} is locked by another run "
                           f"(remove {self.lock} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.lock.unlink(missing_ok=True)
        return False


# -- shared helpers ---------------------------------------------------------------

def sim_config(params, **over):
    from .simulator import SimConfig
    from .workload import WorkloadConfig

    wl = WorkloadConfig(arrival_rate=params["arrival_rate"], demand_mode=params["demand_mode"],
                        trace_files=tuple(params["trace_files"]), topology=params["sfc_topology"])
    kw = {k: params[k] for k in ("topology", "rho", "gamma", "q", "K", "zeta", "bw", "horizon",
                                 "warmup", "max_hops", "paths_per_pair", "cpu_scale",
                                 "mem_scale", "bw_scale")}
    kw.update(seed=params["seed"], workload=wl)
    kw.update(over)
    try:
        return SimConfig(**kw)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc)) from None


def _load_model(path, net):
    from .mhgat.checkpoint import CheckpointError, load_checkpoint
    try:
        return load_checkpoint(path, net=net)
    except CheckpointError as exc:
        raise CliError(str(exc)) from None


# -- subcommands ------------------------------------------------------------------
# Each returns (deterministic outputs, timing outputs) as lists of file names.

def cmd_simulate(params, out):
    from .simulator import SLOT_FIELDS, run_simulation

    if params["policy"] == "mhgat" and not params["model"]:
        raise CliError("--policy mhgat requires --model")
    cfg = sim_config(params, policy=params["policy"], model=params["model"])
    net = cfg.network()
    model = _load_model(params["model"], net) if params["policy"] == "mhgat" else None
    logbook = run_simulation(cfg, model=model, net=net)
    write_csv(logbook.slots, out / "metrics.csv", SLOT_FIELDS)
    summary = logbook.summary()
    summary["warmup"] = cfg.warmup
    write_json(summary, out / "summary.json")
    emit_report(logbook, "plot-series", out)
    write_csv([{"t": s["t"], "migration_ms": ms} for s, ms in zip(logbook.slots, logbook.runtime_ms)],
              out / "timing.csv", ["t", "migration_ms"])
    return ["metrics.csv", "summary.json", "series/frag_vs_slot.csv", "series/loss_vs_slot.csv"], \
        ["timing.csv"]


def cmd_gen_dataset(params, out):
    from .mhgat.training import write_dataset
    from .simulator import generate_dataset

    if params["target"] < 1:
        raise CliError("--target must be >= 1")
    cfg = sim_config(params, policy="oracle")
    records, info = generate_dataset(cfg, params["target"], max_runs=params["max_runs"],
                                     progress=lambda n: n % 500 == 0 and log.info("%d records", n))
    write_dataset(records, out / "dataset.jsonl")
    write_json(info, out / "dataset_info.json")
    return ["dataset.jsonl", "dataset_info.json"], []


def _read_dataset(path):
    from .mhgat.training import read_dataset
    if not path:
        raise CliError("--dataset is required")
    recs = read_dataset(path)
    if not recs:
        raise CliError(f"{path}: empty dataset")
    return recs


def _network_for_records(records):
    from .topology import load_topology
    topo = records[0].topology
    for name in ("nsfnet", "usbackbone"):
        net = load_topology(name)
        if net.structure_hash() == topo:
            return net
    return None


def cmd_train(params, out):
    from .mhgat import ABLATIONS, MhgatModel
    from .mhgat.checkpoint import save_checkpoint
    from .mhgat.training import TrainConfig, train

    if params["variant"] not in ABLATIONS:
        raise CliError(f"unknown variant {params['variant']!r}; choose from {sorted(ABLATIONS)}")
    records = _read_dataset(params["dataset"])
    if len({r.topology for r in records}) != 1:
        raise CliError("dataset mixes topologies")
    net = _network_for_records(records)
    if net is None:
        raise CliError("dataset topology is not a bundled network; cannot infer its graph")
    model = MhgatModel.for_network(net, seed=params["seed"], **ABLATIONS[params["variant"]])
    cfg = TrainConfig(epochs=params["epochs"], batch_size=params["batch_size"], lr=params["lr"],
                      patience=params["patience"], val_ratio=params["val_ratio"], seed=params["seed"])
    res = train(model, records, cfg, log=lambda e, tr, va: log.info("epoch %d train %.5f val %.5f", e, tr, va))
    save_checkpoint(res.model, out / "model.ckpt", extra={"variant": params["variant"],
                                                          "best_epoch": res.best_epoch})
    write_csv([{"epoch": e, "train_mse": tr, "val_mse": va} for e, tr, va in res.curve],
              out / "curve.csv", ["epoch", "train_mse", "val_mse"])
    write_json({"variant": params["variant"], "best_epoch": res.best_epoch, "best_val_mse": res.best_val,
                "epochs_run": len(res.curve), "records": len(records)}, out / "train_summary.json")
    write_csv([{"epoch": e, "seconds": w} for (e, _, _), w in zip(res.curve, res.wall)],
              out / "timing.csv", ["epoch", "seconds"])
    return ["model.ckpt", "curve.csv", "train_summary.json"], ["timing.csv"]


def cmd_eval(params, out):
    from .mhgat.training import mse, stack_records
    from .simulator import run_simulation

    if not params["model"]:
        raise CliError("--model is required")
    base = sim_config(params)
    net = base.network()
    model = _load_model(params["model"], net)
    doc = {"model": params["model"]}
    outputs = []
    if params["dataset"]:
        records = _read_dataset(params["dataset"])
        if any(r.topology != model.topology_hash for r in records):
            raise CliError("dataset topology does not match the checkpoint")
        x, edge, y = stack_records(records, model)
        doc["dataset_mse"] = mse(model, x, edge, y)
        doc["records"] = len(records)
    if params["lambdas"] and params["seeds"]:
        rows, timing = [], []
        for lam in params["lambdas"]:
            for seed in params["seeds"]:
                for pol in params["policies"]:
                    cfg = replace(base, seed=seed, policy=pol,
                                  workload=replace(base.workload, arrival_rate=lam))
                    logbook = run_simulation(cfg, model=model if pol == "mhgat" else None, net=net)
                    s = logbook.summary()
                    post = [sl["frag"] for sl in logbook.measured()]
                    rows.append({"lambda": lam, "seed": seed, "policy": pol,
                                 "overload_ratio": s["overload_ratio"], "total_loss": s["total_loss"],
                                 "mean_frag": float(np.mean(post)), "acceptance_ratio": s["acceptance_ratio"],
                                 "migrations": s["migrations"]})
                    timing.append({"lambda": lam, "seed": seed, "policy": pol,
                                   "total_ms": float(np.sum(logbook.runtime_ms))})
        write_csv(rows, out / "policies.csv")
        write_csv(timing, out / "timing.csv")
        outputs.append("policies.csv")
    elif "dataset_mse" not in doc:
        raise CliError("eval needs --dataset and/or both --lambdas and --seeds")
    write_json(doc, out / "eval.json")
    return ["eval.json"] + outputs, ["timing.csv"] if "policies.csv" in outputs else []


def cmd_sweep(params, out):
    from .simulator import SWEEP_PARAMETERS, sweep

    if params["parameter"] not in SWEEP_PARAMETERS:
        raise CliError(f"--parameter must be one of {SWEEP_PARAMETERS}")
    if not params["values"] or not params["seeds"]:
        raise CliError("sweep needs at least one value and one seed")
    base = sim_config(params)
    model = None
    if "mhgat" in params["policies"]:
        if not params["model"]:
            raise CliError("policy mhgat requires --model")
        model = _load_model(params["model"], base.network())
    result = sweep(base, params["parameter"], params["values"], params["seeds"],
                   policies=tuple(params["policies"]), model=model)
    files = emit_report(result, "csv", out) + emit_report(result, "plot-series", out)
    return [str(f.relative_to(out)) for f in files], []


def frag_points(base, values, seeds, policy):
    """(lambda, seed) rows of mean load metrics and the overload ratio."""
    from .fragmentation import METRIC_NAMES
    from .simulator import sweep

    res = sweep(base, "lambda", values, seeds, policies=(policy,))
    pts = {}
    for r in res.rows:
        pts.setdefault((r["value"], r["seed"]), {})[r["metric"]] = r["result"]
    rows = []
    for (lam, seed), m in sorted(pts.items()):
        row = {"lambda": lam, "seed": seed, "overload_ratio": m["overload_ratio"]}
        row.update({name: m[f"mean_{name}"] for name in METRIC_NAMES})
        rows.append(row)
    return rows


def correlation_table(rows, methods=("pearson", "spearman", "kendall", "distance")):
    from .fragmentation import METRIC_NAMES, CorrelationUndefined, correlate

    y = np.array([r["overload_ratio"] for r in rows])
    table = []
    for name in METRIC_NAMES:
        x = np.array([r[name] for r in rows])
        for method in methods:
            try:
                value = float(correlate(x, y, method))
            except CorrelationUndefined:
                value = float("nan")
            table.append({"metric": name, "method": method, "value": value})
    return table


def cmd_analyze_frag(params, out):
    if not params["values"] or not params["seeds"]:
        raise CliError("analyze-frag needs at least one value and one seed")
    base = sim_config(params)
    rows = frag_points(base, params["values"], params["seeds"], params["policy"])
    write_csv(rows, out / "frag_points.csv")
    table = correlation_table(rows)
    write_csv(table, out / "correlation.csv")
    files = emit_report(table, "plot-series", out, kind="correlation")
    return ["frag_points.csv", "correlation.csv"] + [str(f.relative_to(out)) for f in files], []


def cmd_bench_runtime(params, out):
    from .simulator import benchmark_runtime

    if any(n < 2 for n in params["nodes"]):
        raise CliError("node counts must be >= 2")
    rows = benchmark_runtime(params["nodes"], trials=params["trials"], seed=params["seed"],
                             policies=tuple(params["policies"]))
    write_csv(rows, out / "runtime.csv")
    emit_report(rows, "plot-series", out, kind="runtime")
    setup = [{k: r[k] for k in ("nodes", "links", "policy", "trials")} for r in rows]
    write_json({"cases": setup}, out / "bench_setup.json")
    return ["bench_setup.json"], ["runtime.csv", "series/runtime_vs_nodes.csv"]


COMMANDS = {
    "simulate": cmd_simulate,
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "analyze-frag": cmd_analyze_frag,
    "bench-runtime": cmd_bench_runtime,
}


def execute(command, params, out_dir):
    """Run ``command`` with fully resolved ``params`` into ``out_dir`` and
    write its manifest; returns the manifest document."""
    out = Path(out_dir)
    inputs = input_hashes(params)
    with RunDir(out):
        for stale in (MANIFEST, "error.json"):
            (out / stale).unlink(missing_ok=True)
        outputs, timing = COMMANDS[command](params, out)
        manifest = {
            "tool": "nfvfrag", "version": __version__, "subcommand": command,
            "seed": params["seed"], "config": params, "inputs": inputs,
            "outputs": {name: _sha256(out / name) for name in sorted(outputs)},
            "timing": sorted(timing),
        }
        write_json(manifest, out / MANIFEST)
    return manifest


def rerun(manifest_path, out_dir):
    doc = json.loads(Path(manifest_path).read_text())
    if doc.get("tool") != "nfvfrag" or doc.get("subcommand") not in COMMANDS:
        raise CliError(f"{manifest_path}: not an nfvfrag manifest")
    params = doc["config"]
    current = input_hashes(params)
    if current != doc["inputs"]:
        changed = sorted(k for k in doc["inputs"] if current.get(k) != doc["inputs"][k])
        raise CliError(f"inputs changed since the original run: {changed}")
    if Path(out_dir).resolve() == Path(manifest_path).resolve().parent:
        raise CliError("rerun needs a fresh --out-dir")
    return execute(doc["subcommand"], params, out_dir)


def _error_doc(exc, command):
    return {"error": getattr(exc, "kind", type(exc).__name__), "type": type(exc).__name__,
            "message": str(exc), "subcommand": command}


def main(argv=None):
    logging.basicConfig(level=os.environ.get("NFVFRAG_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    command, out_dir = None, None
    try:
        ns = build_parser().parse_args(argv)
        command = ns.command
        if command is None:
            raise CliError("missing subcommand; see --help")
        if command == "rerun":
            out_dir = ns.out_dir
            manifest = rerun(ns.manifest, ns.out_dir)
        else:
            params = resolve(command, ns)
            out_dir = getattr(ns, "out_dir", None) or str(Path("runs") / command)
            manifest = execute(command, params, out_dir)
        print(json.dumps({"status": "ok", "out_dir": str(out_dir),
                          "outputs": sorted(manifest["outputs"])}, sort_keys=True))
        return 0
    except CliError as exc:
        code, doc = 2, _error_doc(exc, command)
    except Exception as exc:  # top-level boundary: any failure becomes an error document
        log.debug("%s", traceback.format_exc())
        code, doc = 1, _error_doc(exc, command)
    text = json.dumps(doc, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None and Path(out_dir).is_dir():
        (Path(out_dir) / "error.json").write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
