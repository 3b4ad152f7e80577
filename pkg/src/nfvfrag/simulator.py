"""Slot-by-slot lifecycle driver, labeled dataset generation, parameter
sweeps and the runtime benchmark."""

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .fragmentation import METRIC_NAMES, load_metric_suite, model_for
from .migration import (DEFAULT_BW, DEFAULT_ZETA, GreedyPolicy, MhgatPolicy, MigrationFailed,
                        OraclePolicy, make_policy, run_migration_round)
from .state import NetworkState
from .topology import PathTable, complete_graph, load_topology
from .workload import WorkloadConfig, WorkloadGenerator

log = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("lambda", "cpu-scale", "mem-scale", "bw-scale")


@dataclass
class SimConfig:
    topology: str = "nsfnet"
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    seed: int = 0
    rho: float = 0.5
    gamma: float = 0.9
    q: float = 0.5
    K: int = 2
    zeta: int = DEFAULT_ZETA
    horizon: int = 1000
    warmup: int = 100
    policy: str = "greedy"
    bw: float = DEFAULT_BW
    max_hops: int = 6
    paths_per_pair: int = 64
    cpu_scale: float = 1.0
    mem_scale: float = 1.0
    bw_scale: float = 1.0
    model: str = None  # checkpoint path for the mhgat policy

    def __post_init__(self):
        if isinstance(self.workload, dict):
            self.workload = WorkloadConfig.from_dict(self.workload)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError("warmup must lie in [0, horizon)")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.policy not in ("greedy", "oracle", "mhgat", "none"):
            raise ValueError(f"unknown policy {self.policy!r}")

    def to_dict(self):
        d = asdict(self)
        d["workload"] = self.workload.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "workload" in d and isinstance(d["workload"], dict):
            d["workload"] = WorkloadConfig.from_dict(d["workload"])
        return cls(**d)

    def network(self):
        net = load_topology(self.topology)
        if (self.cpu_scale, self.mem_scale, self.bw_scale) != (1.0, 1.0, 1.0):
            net = net.scaled(self.cpu_scale, self.mem_scale, self.bw_scale)
        return net


SLOT_FIELDS = ("t", "arrivals", "accepted", "rejected", "active_sfcs", "node_overload",
               "link_overload", "migrations", "reroutes", "failures", "frag", "loss") + METRIC_NAMES


@dataclass
class MetricsLog:
    config: dict
    slots: list = field(default_factory=list)  # dicts keyed by SLOT_FIELDS
    runtime_ms: list = field(default_factory=list)  # per slot migration-round wall time
    objective_acc: float = 0.0
    warmup: int = 0

    def measured(self):
        return [s for s in self.slots if s["t"] >= self.warmup]

    def summary(self):
        m = self.measured()
        arrivals = sum(s["arrivals"] for s in m)
        accepted = sum(s["accepted"] for s in m)
        over = sum(1 for s in m if s["node_overload"] or s["link_overload"])
        gamma = self.config.get("gamma", 0.9)
        frag = [s["frag"] for s in m]
        loss = [s["loss"] for s in m]
        out = {
            "slots": len(m),
            "acceptance_ratio": accepted / arrivals if arrivals else 1.0,
            "overload_ratio": over / len(m) if m else 0.0,
            "total_loss": float(sum(loss)),
            "mean_frag": float(np.mean(frag)) if m else float("nan"),
            "migrations": sum(s["migrations"] for s in m),
            "objective": gamma * float(sum(frag)) + (1 - gamma) * float(sum(loss)),
        }
        for name in METRIC_NAMES:
            out[f"mean_{name}"] = float(np.mean([s[name] for s in m])) if m else float("nan")
        return out


def _seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _load_model(config, net):
    from .mhgat.checkpoint import load_checkpoint
    if config.model is None:
        raise ValueError("policy 'mhgat' needs a model checkpoint")
    return load_checkpoint(config.model, net=net)


def run_simulation(config, model=None, net=None, table=None, policy=None, on_slot=None):
    """Run ``config.horizon`` slots: demand refresh, expiry, arrivals,
    overload detection, migration, re-detection, metrics."""
    net = net or config.network()
    table = table or PathTable(net, config.max_hops, config.paths_per_pair)
    state = NetworkState(net, table, rho=config.rho)
    wl_seed, = _seeds(config.seed, 1)
    gen = WorkloadGenerator(config.workload, seed=wl_seed)
    if policy is None and config.policy != "none":
        if config.policy == "mhgat" and model is None:
            model = _load_model(config, net)
        policy = make_policy(config.policy, model=model, K=config.K, q=config.q)
    fmodel = model_for(net, config.K)
    logbook = MetricsLog(config.to_dict(), warmup=config.warmup)
    for t in range(config.horizon):
        state.advance(t)
        state.release_expired(t)
        arrivals = gen.arrivals(t)
        accepted = sum(state.deploy_sfc(s).accepted for s in arrivals)
        overloads = state.detect_overloads()
        loss, migrations, reroutes, failures, ms = 0.0, 0, 0, 0, 0.0
        if overloads and policy is not None:
            t0 = time.perf_counter()
            out = run_migration_round(state, policy, zeta=config.zeta, bw=config.bw,
                                      K=config.K, q=config.q, overloads=overloads)
            ms = (time.perf_counter() - t0) * 1000.0
            loss = out.total_loss
            migrations = sum(a.kind == "vnf" for a in out.actions)
            reroutes = sum(a.kind == "link" for a in out.actions)
            failures = len(out.failures)
            post = state.detect_overloads()
        else:
            post = overloads
        row = {
            "t": t, "arrivals": len(arrivals), "accepted": int(accepted),
            "rejected": len(arrivals) - int(accepted), "active_sfcs": len(state.sfcs),
            "node_overload": bool(post.nodes), "link_overload": bool(post.links),
            "migrations": migrations, "reroutes": reroutes, "failures": failures,
            "frag": float(fmodel.max_level(state.node_util, state.link_util, config.q)),
            "loss": float(loss),
        }
        row.update(load_metric_suite(state, net, config.K, config.q))
        logbook.slots.append(row)
        logbook.runtime_ms.append(ms)
        if t >= config.warmup:
            logbook.objective_acc += config.gamma * row["frag"] + (1 - config.gamma) * row["loss"]
        if on_slot is not None:
            on_slot(state, row)
    logbook.final_state = state
    return logbook


def generate_dataset(config, target, max_runs=50, progress=None):
    """Oracle-labeled records from overload events of runs that use the
    oracle to resolve each overload and continue.

    Returns (records, info); ``info["complete"]`` is False when ``max_runs``
    runs did not reach ``target`` unique records.
    """
    from .mhgat.features import build_edge_features, build_node_features
    from .mhgat.training import DatasetRecord

    if target < 1:
        raise ValueError("target must be >= 1")
    net = config.network()
    table = PathTable(net, config.max_hops, config.paths_per_pair)
    topo = net.structure_hash()
    records, seen = [], set()
    state_box = {}

    class Done(Exception):
        pass

    def record(state, key, res):
        rec = DatasetRecord(
            build_node_features(state, net, key), build_edge_features(state, net, key),
            res.labels.copy(), topo,
            {"run": state_box["run"], "slot": state.t, "vnf": list(key),
             "source": state.placement[key]},
        )
        d = rec.digest()
        if d in seen:
            return
        seen.add(d)
        records.append(rec)
        if progress is not None:
            progress(len(records))
        if len(records) >= target:
            raise Done

    runs = 0
    for run, seed in enumerate(_seeds(config.seed, max_runs)):
        state_box["run"] = run
        runs += 1
        cfg = replace(config, seed=seed, policy="oracle", warmup=0)
        policy = OraclePolicy(config.K, config.q, recorder=record)
        try:
            run_simulation(cfg, net=net, table=table, policy=policy)
        except Done:
            break
    complete = len(records) >= target
    if not complete:
        log.warning("dataset generation stopped at %d/%d records after %d runs",
                    len(records), target, runs)
    return records, {"complete": complete, "runs": runs, "records": len(records)}


def apply_parameter(config, parameter, value):
    if parameter == "lambda":
        return replace(config, workload=replace(config.workload, arrival_rate=float(value)))
    if parameter == "cpu-scale":
        return replace(config, cpu_scale=float(value))
    if parameter == "mem-scale":
        return replace(config, mem_scale=float(value))
    if parameter == "bw-scale":
        return replace(config, bw_scale=float(value))
    raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


SWEEP_METRICS = ("acceptance_ratio", "overload_ratio", "total_loss", "mean_frag") + tuple(
    f"mean_{m}" for m in METRIC_NAMES)


@dataclass
class SweepResult:
    parameter: str
    rows: list  # tidy: parameter, value, seed, policy, metric, value

    def cells(self):
        """Per (value, policy, metric): mean and sample deviation over seeds."""
        groups = {}
        for r in self.rows:
            groups.setdefault((r["value"], r["policy"], r["metric"]), []).append(r["result"])
        out = []
        for (value, policy, metric), xs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            out.append({"parameter": self.parameter, "value": value, "policy": policy,
                        "metric": metric, "mean": float(np.mean(xs)),
                        "std": float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0, "n": len(xs)})
        return out

    def series(self, metric, policy):
        return [(c["value"], c["mean"]) for c in self.cells()
                if c["metric"] == metric and c["policy"] == policy]


def sweep(template, parameter, values, seeds, policies=("greedy",), model=None):
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    rows = []
    for value in values:
        base = apply_parameter(template, parameter, value)
        net = base.network()
        table = PathTable(net, base.max_hops, base.paths_per_pair)
        for seed in seeds:
            for pol in policies:
                cfg = replace(base, seed=int(seed), policy=pol)
                summary = run_simulation(cfg, model=model, net=net, table=table).summary()
                for metric in SWEEP_METRICS:
                    rows.append({"parameter": parameter, "value": value, "seed": int(seed),
                                 "policy": pol, "metric": metric, "result": summary[metric]})
    return SweepResult(parameter, rows)


def overloaded_scenario(net, seed=0, load=0.3, table=None, rho=0.5):
    """A state with background load around ``load`` of capacity and node 0
    pushed past the threshold by one extra single-VNF SFC."""
    from .workload import SfcRequest, Vnf

    table = table or PathTable(net, max_hops=2)
    state = NetworkState(net, table, rho=rho)
    wl = WorkloadConfig(chain_length=(2, 3), cpu_level=(0.5, 2.0), mem_level=(1.0, 4.0),
                        bw_level=(0.01, 0.05))
    gen = WorkloadGenerator(wl, seed=seed)
    target = load * net.node_capacity.sum(axis=0)
    misses = 0
    while misses < 50 and not np.all(state.node_util.sum(axis=0) >= target):
        # admission starts refusing well before an unreachable target
        misses = 0 if state.deploy_sfc(gen.generate(0)).accepted else misses + 1
    cap = state.node_cap[0]
    extra = np.maximum(rho * cap - state.node_util[0], 0.0) + 0.05 * cap
    hot = SfcRequest(gen.next_id, 0, 100, 50.0,
                     [Vnf(gen.next_id, 0, np.tile(extra, (101, 1)), 1.0, 0)], [])
    state.sfcs[hot.id] = hot
    v = hot.vnfs[0]
    state.vnfs[v.key] = v
    state.vnf_demand[v.key] = extra
    state._place(v.key, 0)
    return state


def benchmark_runtime(node_counts, trials=20, seed=0, policies=("greedy", "oracle", "mhgat")):
    """Median wall time (ms) of one migration decision on complete graphs."""
    from .mhgat.model import MhgatModel

    rows = []
    for n in node_counts:
        if n < 2:
            raise ValueError("node counts must be >= 2")
        net = complete_graph(n)
        state = overloaded_scenario(net, seed=seed)
        node = 0
        j = int(np.argmax(state.node_util[node] / state.node_cap[node]))
        for name in policies:
            if name == "mhgat":
                pol = MhgatPolicy(MhgatModel.for_network(net, seed=seed))
            elif name == "oracle":
                pol = OraclePolicy()
            else:
                pol = GreedyPolicy()
            times = []
            for _ in range(trials):
                t0 = time.perf_counter()
                key = pol.select(state, node, j, set())
                try:
                    pol.destination(state, key, j)
                except MigrationFailed:
                    pass
                times.append((time.perf_counter() - t0) * 1000.0)
            rows.append({"nodes": n, "links": net.n_links, "policy": name, "trials": trials,
                         "median_ms": float(np.median(times))})
    return rows
