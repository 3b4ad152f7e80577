from dataclasses import replace

import numpy as np
import pytest

from nfvfrag.migration import run_migration_round, make_policy
from nfvfrag.simulator import (SWEEP_METRICS, SimConfig, apply_parameter, benchmark_runtime,
                               generate_dataset, overloaded_scenario, run_simulation, sweep)
from nfvfrag.topology import complete_graph, load_topology
from nfvfrag.workload import WorkloadConfig


def small(**kw):
    base = dict(horizon=60, warmup=10, workload=WorkloadConfig(arrival_rate=6.0))
    base.update(kw)
    return SimConfig(**base)


def test_same_seed_same_run():
    a = run_simulation(small(seed=3))
    b = run_simulation(small(seed=3))
    assert a.slots == b.slots
    c = run_simulation(small(seed=4))
    assert a.slots != c.slots


def test_light_load_never_overloads():
    log = run_simulation(small(workload=WorkloadConfig(arrival_rate=0.3)))
    s = log.summary()
    assert s["overload_ratio"] == 0.0 and s["acceptance_ratio"] == 1.0
    assert s["total_loss"] == 0.0 and s["migrations"] == 0


def test_objective_reconstructs_from_slots():
    cfg = small(workload=WorkloadConfig(arrival_rate=10.0), gamma=0.7)
    log = run_simulation(cfg)
    m = log.measured()
    assert len(m) == 50 and m[0]["t"] == 10
    want = sum(0.7 * r["frag"] + 0.3 * r["loss"] for r in m)
    assert log.summary()["objective"] == pytest.approx(want)
    assert log.objective_acc == pytest.approx(want)
    assert log.summary()["migrations"] > 0


def test_every_slot_stays_consistent():
    def check(state, row):
        state.check_consistency()
        total = sum((state.vnf_demand[k] for k in state.placement), np.zeros(2))
        assert np.allclose(state.node_util.sum(axis=0), total)
        assert row["accepted"] + row["rejected"] == row["arrivals"]
    run_simulation(small(workload=WorkloadConfig(arrival_rate=10.0), policy="oracle", horizon=30),
                   on_slot=check)


def test_no_policy_leaves_overloads_in_place():
    cfg = small(workload=WorkloadConfig(arrival_rate=10.0))
    none = run_simulation(replace(cfg, policy="none")).summary()
    greedy = run_simulation(cfg).summary()
    assert none["migrations"] == 0 and none["total_loss"] == 0.0
    assert none["overload_ratio"] >= greedy["overload_ratio"]


def test_config_validation_and_round_trip():
    for kw in (dict(horizon=0), dict(warmup=60), dict(gamma=2.0), dict(rho=0.0), dict(policy="x")):
        with pytest.raises(ValueError):
            small(**kw)
    cfg = small(cpu_scale=2.0)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    assert np.allclose(cfg.network().node_capacity[:, 0], 64.0)
    with pytest.raises(ValueError):
        run_simulation(small(policy="mhgat"))


def test_dataset_records():
    cfg = small(workload=WorkloadConfig(arrival_rate=10.0), horizon=80)
    recs, info = generate_dataset(cfg, target=25)
    assert info["complete"] and info["records"] == 25 == len(recs)
    net = load_topology("nsfnet")
    assert len({r.digest() for r in recs}) == 25
    for r in recs:
        assert r.x.shape == (14, 4) and r.edge.shape == (44, 2) and r.labels.shape == (14,)
        assert np.all((r.labels > 0) & (r.labels <= 1))
        assert r.topology == net.structure_hash()
        src = r.meta["source"]
        assert r.labels[src] < 1.0  # unchanged network, never the sentinel
    again, _ = generate_dataset(cfg, target=25)
    assert [r.digest() for r in again] == [r.digest() for r in recs]
    assert [r.labels.tolist() for r in again] == [r.labels.tolist() for r in recs]


def test_dataset_incomplete_is_flagged():
    cfg = small(workload=WorkloadConfig(arrival_rate=0.3), horizon=20)
    recs, info = generate_dataset(cfg, target=5, max_runs=2)
    assert not info["complete"] and info["runs"] == 2 and len(recs) == info["records"]
    with pytest.raises(ValueError):
        generate_dataset(cfg, target=0)


def test_sweep_rows_and_cells():
    cfg = small(horizon=25, warmup=5)
    res = sweep(cfg, "lambda", [2.0, 6.0], seeds=[0, 1], policies=("greedy", "none"))
    assert len(res.rows) == 2 * 2 * 2 * len(SWEEP_METRICS)
    cells = res.cells()
    assert len(cells) == 2 * 2 * len(SWEEP_METRICS)
    c = next(c for c in cells if c["value"] == 6.0 and c["policy"] == "greedy"
             and c["metric"] == "acceptance_ratio")
    xs = [r["result"] for r in res.rows if r["value"] == 6.0 and r["policy"] == "greedy"
          and r["metric"] == "acceptance_ratio"]
    assert c["mean"] == pytest.approx(np.mean(xs)) and c["std"] == pytest.approx(np.std(xs, ddof=1))
    assert [v for v, _ in res.series("mean_frag", "none")] == [2.0, 6.0]
    with pytest.raises(ValueError):
        sweep(cfg, "rho", [0.5], [0])


def test_unit_scale_reproduces_base_cell():
    cfg = small(horizon=25, warmup=5)
    base = run_simulation(cfg).summary()
    scaled = run_simulation(apply_parameter(cfg, "cpu-scale", 1.0)).summary()
    assert base == scaled
    assert apply_parameter(cfg, "lambda", 3).workload.arrival_rate == 3.0
    with pytest.raises(ValueError):
        apply_parameter(cfg, "gamma", 1)


def test_overloaded_scenario_has_hot_node():
    net = complete_graph(6)
    state = overloaded_scenario(net, seed=1)
    over = state.detect_overloads()
    assert 0 in over.nodes
    state.check_consistency()
    out = run_migration_round(state, make_policy("greedy"))
    assert 0 not in state.detect_overloads().nodes and out.actions


def test_benchmark_rows():
    rows = benchmark_runtime([4, 5], trials=2, policies=("greedy", "oracle"))
    assert [(r["nodes"], r["policy"]) for r in rows] == [(4, "greedy"), (4, "oracle"),
                                                         (5, "greedy"), (5, "oracle")]
    assert all(r["median_ms"] >= 0 and r["links"] == r["nodes"] * (r["nodes"] - 1) // 2 for r in rows)
    with pytest.raises(ValueError):
        benchmark_runtime([1])
