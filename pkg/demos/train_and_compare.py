"""Small end-to-end loop: label a dataset with the oracle, train the
attention model on it, then run the three policies on the same seed.

Sizes are kept small so this finishes in a few minutes; the CLI
(`nfvfrag gen-dataset`, `nfvfrag train`, `nfvfrag eval`) runs the
full-size version.

    python demos/train_and_compare.py
"""

from dataclasses import replace

from nfvfrag.mhgat import MhgatModel, TrainConfig, train
from nfvfrag.simulator import SimConfig, generate_dataset, run_simulation
from nfvfrag.workload import WorkloadConfig

base = SimConfig(horizon=300, warmup=50, workload=WorkloadConfig(arrival_rate=10.0))
records, info = generate_dataset(base, target=600)
print(f"dataset: {info['records']} records from {info['runs']} run(s)")

net = base.network()
model = MhgatModel.for_network(net, seed=0)
result = train(model, records, TrainConfig(epochs=15),
               log=lambda e, tr, va: print(f"  epoch {e:2d}  train {tr:.4f}  val {va:.4f}"))
print(f"best validation MSE {result.best_val:.4f} (epoch {result.best_epoch})")

print("\npolicy     overload  loss(MB)   mean level")
for policy in ("greedy", "oracle", "mhgat"):
    cfg = replace(base, policy=policy, seed=1)
    s = run_simulation(cfg, model=result.model).summary()
    print(f"{policy:9s}  {s['overload_ratio']:.3f}    {s['total_loss']:9.1f}  {s['mean_frag']:.5f}")
