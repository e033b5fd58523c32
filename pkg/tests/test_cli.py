"""End-to-end command-line tests: gen-data, train, eval, trace, graph-stats."""

import csv
import json
import os

import pytest

from dfgn.cli import main

TINY_CFG = {
    "d1": 8, "d2": 8, "epochs": 1, "lr": 3e-3,
    "selector_dim": 8, "selector_epochs": 1,
    "dropout_lstm": 0.0, "dropout_gat": 0.0,
}


def write_cfg(tmp_path, **overrides):
    cfg = dict(TINY_CFG)
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def gen(tmp_path, name="data", seed=3, n=6):
    out = tmp_path / name
    rc = main([
        "gen-data", "--seed", str(seed), "--out", str(out),
        "--n-examples", str(n), "--n-entities", "16", "--n-relations", "3",
        "--paragraphs", "4",
    ])
    assert rc == 0
    return out


def test_gen_data_writes_dataset_and_manifest(tmp_path):
    out = gen(tmp_path)
    data = json.loads((out / "dataset.json").read_text())
    assert len(data) == 6
    gaz = json.loads((out / "gazetteer.json").read_text())
    assert all(isinstance(s, list) for s in gaz)
    run = json.loads((out / "run.json").read_text())
    assert run["command"] == "gen-data" and run["seed"] == 3
    assert "config" in run and "version" in run


def test_gen_data_byte_identical_for_same_seed(tmp_path):
    a = gen(tmp_path, "a", seed=7)
    b = gen(tmp_path, "b", seed=7)
    assert (a / "dataset.json").read_bytes() == (b / "dataset.json").read_bytes()
    c = gen(tmp_path, "c", seed=8)
    assert (a / "dataset.json").read_bytes() != (c / "dataset.json").read_bytes()


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("DFGN_SEED", "7")
    out = tmp_path / "env"
    assert main(["gen-data", "--out", str(out), "--n-examples", "2",
                 "--n-entities", "16", "--n-relations", "3", "--paragraphs", "4"]) == 0
    assert json.loads((out / "run.json").read_text())["seed"] == 7


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    data = gen(tmp_path, "train", seed=3, n=8)
    dev = gen(tmp_path, "dev", seed=4, n=4)
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    rc = main([
        "train", "--data", str(data / "dataset.json"),
        "--dev", str(dev / "dataset.json"),
        "--gazetteer", str(data / "gazetteer.json"),
        "--config", cfg, "--seed", "0", "--out", str(out),
    ])
    assert rc == 0
    return tmp_path, out, data, dev


def test_train_outputs(trained):
    _, out, _, _ = trained
    assert (out / "checkpoint.json").exists()
    with open(out / "metrics.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1  # one epoch
    assert {"epoch", "train_loss", "answer_em", "sup_f1"} <= set(rows[0])
    with open(out / "selection.csv") as f:
        sel = list(csv.DictReader(f))
    assert {"example_id", "paragraph_idx", "score", "kept", "is_gold"} <= set(sel[0])
    manifest = json.loads((out / "run.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config"]["d2"] == 8


def test_eval_report(trained, tmp_path):
    _, out, _, dev = trained
    report = tmp_path / "report.csv"
    rc = main(["eval", "--data", str(dev / "dataset.json"),
               "--ckpt", str(out / "checkpoint.json"), "--report", str(report)])
    assert rc == 0
    with open(report) as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    assert header[:2] == ["example_id", "prediction"]
    assert body[-1][0] == "ALL"
    assert len(body) == 4 + 1


def test_trace_outputs(trained, tmp_path):
    _, out, _, dev = trained
    trace_dir = tmp_path / "trace"
    rc = main(["trace", "--ckpt", str(out / "checkpoint.json"),
               "--data", str(dev / "dataset.json"),
               "--k", "1,2,5", "--out", str(trace_dir), "--svg"])
    assert rc == 0
    traces = json.loads((trace_dir / "traces.json").read_text())
    assert len(traces) == 4
    assert all("paths" in t and "example_id" in t for t in traces)
    for t in traces:
        for p in t["paths"]:
            assert len(p["nodes"]) == 3  # hops + 1 entities per chain
            assert p["score"] >= 0.0
    with open(trace_dir / "esp.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["k"]) for r in rows] == [1, 2, 5]
    for r in rows:
        assert float(r["esp_em"]) <= float(r["esp_recall"]) + 1e-12
    svg = (trace_dir / "esp.svg").read_text()
    assert svg.startswith("<svg") and "rect" in svg


def test_graph_stats(trained, tmp_path):
    _, _, data, _ = trained
    out = tmp_path / "gs"
    rc = main(["graph-stats", "--data", str(data / "dataset.json"),
               "--gazetteer", str(data / "gazetteer.json"), "--out", str(out)])
    assert rc == 0
    with open(out / "graph_stats.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 8
    for r in rows:
        assert int(r["n_nodes"]) >= 0
        assert float(r["mean_degree"]) >= 0


def test_missing_file_is_runtime_error(tmp_path):
    assert main(["eval", "--data", "nope.json", "--ckpt", "nope.json",
                 "--report", str(tmp_path / "r.csv")]) == 1


def test_invalid_args_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["train"])  # missing required options
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_bad_config_is_runtime_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"etaa": 0.5}))
    out = tmp_path / "o"
    rc = main(["gen-data", "--out", str(out), "--config", str(bad),
               "--n-examples", "2", "--n-entities", "16",
               "--n-relations", "3", "--paragraphs", "4"])
    assert rc == 1
