import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfvfrag.cli import LOCK, build_parser, main
from nfvfrag.report import ReportError, emit_report, read_csv, write_csv
from nfvfrag.simulator import SimConfig, SweepResult, run_simulation
from nfvfrag.workload import WorkloadConfig

FAST = ["--horizon", "20", "--warmup", "2"]


def run(argv):
    return main([str(a) for a in argv])


def files(d):
    return sorted(str(p.relative_to(d)) for p in d.rglob("*") if p.is_file())


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    assert main(["gen-dataset", "--out-dir", str(ds), "--target", "12", "--horizon", "60", "--warmup", "0",
                 "--lambda", "10"]) == 0
    tr = root / "tr"
    assert main(["train", "--out-dir", str(tr), "--dataset", str(ds / "dataset.jsonl"),
                 "--epochs", "2"]) == 0
    return ds / "dataset.jsonl", tr / "model.ckpt", root


def test_simulate_writes_outputs_and_manifest(tmp_path, capsys):
    out = tmp_path / "sim"
    assert run(["simulate", "--out-dir", out, "--lambda", "6", *FAST]) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok"
    assert files(out) == ["manifest.json", "metrics.csv", "series/frag_vs_slot.csv",
                          "series/loss_vs_slot.csv", "summary.json", "timing.csv"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 0
    assert man["config"]["arrival_rate"] == 6.0 and man["config"]["horizon"] == 20
    assert set(man["outputs"]) == {"metrics.csv", "summary.json", "series/frag_vs_slot.csv",
                                   "series/loss_vs_slot.csv"}
    assert man["timing"] == ["timing.csv"]
    rows = read_csv(out / "metrics.csv")
    assert [r["t"] for r in rows] == list(range(20))
    assert json.loads((out / "summary.json").read_text())["slots"] == 18


@pytest.mark.parametrize("argv", [
    ["simulate", *FAST],
    ["sweep", "--values", "2,4", "--seeds", "0", *FAST],
    ["analyze-frag", "--values", "2,4,6", "--seeds", "0,1", *FAST],
    ["bench-runtime", "--nodes", "4", "--trials", "2", "--policies", "greedy,oracle"],
])
def test_rerun_is_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run([argv[0], "--out-dir", a, *argv[1:]]) == 0
    assert run(["rerun", "--manifest", a / "manifest.json", "--out-dir", b]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma == mb
    for name in ma["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_train_and_eval_rerun(trained, tmp_path):
    dataset, ckpt, root = trained
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["train", "--out-dir", a, "--dataset", dataset, "--epochs", "2"]) == 0
    assert (a / "model.ckpt").read_bytes() == ckpt.read_bytes()
    assert run(["rerun", "--manifest", a / "manifest.json", "--out-dir", b]) == 0
    assert (b / "model.ckpt").read_bytes() == ckpt.read_bytes()
    assert files(a) == ["curve.csv", "manifest.json", "model.ckpt", "timing.csv", "train_summary.json"]
    e = tmp_path / "e"
    assert run(["eval", "--out-dir", e, "--model", ckpt, "--dataset", dataset,
                "--lambdas", "8", "--seeds", "0", *FAST]) == 0
    doc = json.loads((e / "eval.json").read_text())
    assert doc["records"] == 12 and doc["dataset_mse"] >= 0
    pol = read_csv(e / "policies.csv")
    assert [r["policy"] for r in pol] == ["greedy", "oracle", "mhgat"]
    assert run(["rerun", "--manifest", e / "manifest.json", "--out-dir", tmp_path / "e2"]) == 0
    for name in ("eval.json", "policies.csv"):
        assert (e / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()


def test_gen_dataset_rerun(trained, tmp_path):
    dataset, _, root = trained
    out = tmp_path / "d2"
    assert run(["rerun", "--manifest", root / "ds" / "manifest.json", "--out-dir", out]) == 0
    assert (out / "dataset.jsonl").read_bytes() == dataset.read_bytes()


def test_rerun_detects_changed_inputs(trained, tmp_path, capsys):
    dataset, _, root = trained
    copy = tmp_path / "d.jsonl"
    copy.write_bytes(dataset.read_bytes())
    a = tmp_path / "a"
    assert run(["train", "--out-dir", a, "--dataset", copy, "--epochs", "1"]) == 0
    copy.write_text(copy.read_text().splitlines()[0] + "\n")
    capsys.readouterr()
    assert run(["rerun", "--manifest", a / "manifest.json", "--out-dir", tmp_path / "b"]) == 2
    assert "inputs changed" in json.loads(capsys.readouterr().err)["message"]
    assert run(["rerun", "--manifest", a / "manifest.json", "--out-dir", a]) == 2


def test_eval_refuses_other_topology(trained, tmp_path, capsys):
    _, ckpt, _ = trained
    out = tmp_path / "e"
    assert run(["eval", "--out-dir", out, "--model", ckpt, "--topology", "usbackbone",
                "--lambdas", "5", "--seeds", "0", *FAST]) == 2
    err = json.loads(capsys.readouterr().err)
    assert "does not match" in err["message"]
    assert json.loads((out / "error.json").read_text()) == err


def test_usage_errors(tmp_path, capsys):
    assert run(["simulate", "--out-dir", tmp_path, "--bogus", "1"]) == 2
    assert json.loads(capsys.readouterr().err)["subcommand"] is None
    assert run(["simulate", "--out-dir", tmp_path, "--lambda", "abc"]) == 2
    capsys.readouterr()
    assert run(["simulate", "--out-dir", tmp_path, "--policy", "mhgat", *FAST]) == 2
    assert "--model" in json.loads(capsys.readouterr().err)["message"]
    assert run(["train", "--out-dir", tmp_path / "t"]) == 2
    assert run(["simulate", "--out-dir", tmp_path / "w", "--warmup", "50", "--horizon", "10"]) == 2
    assert run([]) == 2


def test_lock_refuses_concurrent_use(tmp_path, capsys):
    out = tmp_path / "busy"
    out.mkdir()
    (out / LOCK).write_text("123")
    assert run(["simulate", "--out-dir", out, *FAST]) == 2
    assert "locked" in json.loads(capsys.readouterr().err)["message"]
    (out / LOCK).unlink()
    assert run(["simulate", "--out-dir", out, *FAST]) == 0
    assert not (out / LOCK).exists() and not (out / "error.json").exists()


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["simulate", "--help"])
    text = capsys.readouterr().out
    assert "(default: 10.0)" in text and "(default: nsfnet)" in text and "--seed" in text
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    for sub in ("simulate", "gen-dataset", "train", "eval", "sweep", "analyze-frag", "bench-runtime"):
        assert sub in text


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("lambda: 2\narrival_rate: 3\nhorizon: 20\nwarmup: 2\n")
    out = tmp_path / "o"
    # unknown key "lambda" is refused; flag names use their destination
    assert run(["simulate", "--out-dir", out, "--config", cfg]) == 2
    cfg.write_text("arrival-rate: 3\nhorizon: 20\nwarmup: 2\nrho: 0.6\n")
    assert run(["simulate", "--out-dir", out, "--config", cfg, "--rho", "0.7"]) == 0
    man = json.loads((out / "manifest.json").read_text())["config"]
    assert (man["arrival_rate"], man["horizon"], man["rho"]) == (3, 20, 0.7)


def test_emit_report_series(tmp_path):
    log = run_simulation(SimConfig(horizon=8, warmup=1, workload=WorkloadConfig(arrival_rate=4)))
    paths = emit_report(log, "plot-series", tmp_path)
    assert sorted(p.name for p in paths) == ["frag_vs_slot.csv", "loss_vs_slot.csv"]
    rows = read_csv(tmp_path / "series" / "frag_vs_slot.csv")
    # measured slots only: warmup is excluded
    assert set(rows[0]) == {"figure", "series", "x", "y"} and [r["x"] for r in rows] == list(range(1, 8))
    res = SweepResult("lambda", [{"parameter": "lambda", "value": v, "seed": 0, "policy": "greedy",
                                  "metric": m, "result": v / 10}
                                 for v in (1.0, 2.0) for m in ("acceptance_ratio", "overload_ratio",
                                                               "total_loss", "mean_frag")])
    names = sorted(p.name for p in emit_report(res, "plot-series", tmp_path / "s"))
    assert names == ["acceptance_vs_lambda.csv", "frag_vs_lambda.csv", "loss_vs_lambda.csv",
                     "overload_vs_lambda.csv"]
    with pytest.raises(ReportError):
        emit_report(SweepResult("lambda", []), "csv", tmp_path)
    with pytest.raises(ReportError):
        emit_report([], "plot-series", tmp_path, kind="runtime")
    with pytest.raises(ReportError):
        emit_report(log, "png", tmp_path)


cells = st.one_of(st.integers(-10**6, 10**6), st.booleans(),
                  st.floats(allow_nan=False, allow_infinity=False),
                  st.text(alphabet="abcxyz_-", min_size=1).filter(lambda s: s not in ("True", "False")))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.fixed_dictionaries({"a": cells, "b": cells}), min_size=1, max_size=5))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    write_csv(rows, path)
    back = read_csv(path)
    assert len(back) == len(rows)
    for r, b in zip(rows, back):
        for k in r:
            want = r[k]
            if isinstance(want, float) and want == int(want) and not isinstance(want, bool):
                # repr keeps the ".0", so the float survives as a float
                assert b[k] == want and isinstance(b[k], float)
            else:
                assert b[k] == want
