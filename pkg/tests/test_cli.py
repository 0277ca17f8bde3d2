import csv
import json
import math
import subprocess
import sys

import jsonschema
import pytest

from ngram_oaxe import cli
from ngram_oaxe.metrics import REPORT_SCHEMA


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("gen", "--examples", 200, "--eval-examples", 40, "--seed", 3, "--out", out) == 0
    return out


def manifest(path):
    data = json.loads((path / "manifest.json").read_text())
    assert {"command", "config", "seed", "inputs", "outputs", "timestamp", "version"} <= set(data)
    return data


def test_gen_writes_corpus_and_manifest(corpus):
    m = manifest(corpus)
    assert m["command"] == "gen" and m["seed"] == 3
    assert len((corpus / "train.jsonl").read_text().splitlines()) == 200
    assert len((corpus / "eval.jsonl").read_text().splitlines()) == 40
    assert json.loads((corpus / "vocab.json").read_text())["src"][2] == "<sep>"


def test_gen_is_byte_deterministic(corpus, tmp_path):
    assert run("gen", "--examples", 200, "--eval-examples", 40, "--seed", 3, "--out", tmp_path) == 0
    for name in ("train.jsonl", "eval.jsonl", "vocab.json"):
        assert (tmp_path / name).read_bytes() == (corpus / name).read_bytes()


def test_gen_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_examples": 10, "n_eval": 4, "seed": 1}))
    assert run("gen", "--config", cfg, "--examples", 12, "--out", tmp_path / "o") == 0
    assert manifest(tmp_path / "o")["config"]["n_examples"] == 12
    assert manifest(tmp_path / "o")["config"]["n_eval"] == 4


def test_gen_invalid_modes(tmp_path, capsys):
    assert run("gen", "--phrases", 2, "--modes", 3, "--out", tmp_path) == 1
    assert "mode_count exceeds 2! = 2" in capsys.readouterr().err


def test_unknown_flag_is_exit_1(capsys):
    assert run("train", "--bogus") == 1


def test_train_rejects_bad_pi(corpus, tmp_path, capsys):
    assert run("train", "--train", corpus / "train.jsonl", "--pi", 1.5, "--out", tmp_path) == 1
    assert "margin" in capsys.readouterr().err


def test_train_missing_file(tmp_path):
    assert run("train", "--train", tmp_path / "none.jsonl", "--out", tmp_path) == 1


def test_train_malformed_corpus(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"src": [3]}\n')
    assert run("train", "--train", bad, "--out", tmp_path / "o") == 1
    assert "missing field" in capsys.readouterr().err


def _train(corpus, out, *extra):
    return run("train", "--train", corpus / "train.jsonl", "--steps", 30, "--pretrain", 10,
               "--out", out, *extra)


def test_train_outputs_and_determinism(corpus, tmp_path):
    assert _train(corpus, tmp_path / "a", "--seed", 7) == 0
    assert _train(corpus, tmp_path / "b", "--seed", 7) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()
    assert (a / "checkpoint.json").read_bytes() == (b / "checkpoint.json").read_bytes()
    rows = list(csv.DictReader((a / "history.csv").open()))
    assert len(rows) == 30 and set(rows[0]) == {"step", "loss", "keep_rate"}
    m = manifest(a)
    assert m["seed"] == 7 and m["config"]["steps"] == 30


def test_oaxe_flag_equals_unigram(corpus, tmp_path):
    assert _train(corpus, tmp_path / "o", "--loss", "oaxe") == 0
    assert _train(corpus, tmp_path / "n", "--loss", "ngram_oaxe", "--n", 1) == 0
    assert (tmp_path / "o/history.csv").read_bytes() == (tmp_path / "n/history.csv").read_bytes()
    assert _train(corpus, tmp_path / "x", "--loss", "oaxe", "--n", 2) == 1


def test_train_config_file(corpus, tmp_path):
    cfg = tmp_path / "t.json"
    cfg.write_text(json.dumps({"steps": 12, "pretrain_steps": 2, "lr": 0.01}))
    assert run("train", "--train", corpus / "train.jsonl", "--config", cfg, "--steps", 8,
               "--out", tmp_path / "o") == 0
    m = manifest(tmp_path / "o")["config"]
    assert m["steps"] == 8 and m["lr"] == 0.01
    cfg.write_text(json.dumps({"typo": 1}))
    assert run("train", "--train", corpus / "train.jsonl", "--config", cfg, "--out", tmp_path) == 1


def test_divergence_exit_2_with_partial_history(corpus, tmp_path, monkeypatch):
    import ngram_oaxe.model as model

    real = model.compute_loss
    calls = {"n": 0}

    def flaky(*a, **k):
        out = real(*a, **k)
        calls["n"] += 1
        if calls["n"] > 4:
            object.__setattr__(out, "value", math.inf)
        return out

    monkeypatch.setattr(model, "compute_loss", flaky)
    assert _train(corpus, tmp_path) == 2
    assert len((tmp_path / "history.csv").read_text().splitlines()) == 1 + 4
    assert manifest(tmp_path)["config"]["status"] == "diverged"
    assert not (tmp_path / "checkpoint.json").exists()


@pytest.fixture(scope="module")
def checkpoint(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert _train(corpus, out) == 0
    return out / "checkpoint.json"


@pytest.mark.parametrize("dedup", ["true", "false"])
def test_eval_report(corpus, checkpoint, tmp_path, dedup):
    assert run("eval", "--checkpoint", checkpoint, "--corpus", corpus / "eval.jsonl",
               "--dedup", dedup, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    assert report["n_examples"] == 40
    if dedup == "true":
        assert report["repetition_rate"] == 0.0
    assert manifest(tmp_path)["config"]["dedup"] is (dedup == "true")


def test_eval_bad_dedup_value(corpus, checkpoint, tmp_path):
    assert run("eval", "--checkpoint", checkpoint, "--corpus", corpus / "eval.jsonl",
               "--dedup", "maybe", "--out", tmp_path) == 1


def test_eval_vocab_mismatch(checkpoint, tmp_path, capsys):
    other = tmp_path / "other"
    assert run("gen", "--examples", 20, "--eval-examples", 5, "--out", other) == 0
    vocab = json.loads((other / "vocab.json").read_text())
    vocab["tgt"].append("extra")
    (other / "vocab.json").write_text(json.dumps(vocab))
    assert run("eval", "--checkpoint", checkpoint, "--corpus", other / "eval.jsonl",
               "--out", tmp_path / "e") == 1
    assert "vocabulary mismatch" in capsys.readouterr().err


def test_eval_out_of_range_ids(checkpoint, tmp_path, capsys):
    bad = tmp_path / "c.jsonl"
    bad.write_text(json.dumps({"src": [3, 2], "target": [99, 3], "refs": [[99, 3]],
                               "phrases": [[99, 3]]}) + "\n")
    assert run("eval", "--checkpoint", checkpoint, "--corpus", bad, "--out", tmp_path / "e") == 1
    assert "vocabulary mismatch" in capsys.readouterr().err


def test_verify_suites(tmp_path, capsys):
    assert run("verify", "--suite", "all", "--trials", 3, "--size", 5, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    for name in ("hungarian", "reduction", "oracle", "gradient", "truncation", "figure1"):
        assert name in out
    assert manifest(tmp_path)["config"]["results"]["figure1"] == {"passed": 2, "total": 2}


def test_verify_failure_serializes_counterexample(tmp_path, monkeypatch):
    from ngram_oaxe import verify

    def broken(**kw):
        res = verify.SuiteResult("hungarian")
        res.record(True)
        res.record(False, {"cost": [[1.0]], "note": "forced"})
        res.record(False, {"cost": [[2.0]]})
        return res

    monkeypatch.setitem(verify.SUITES, "hungarian", broken)
    assert run("verify", "--suite", "hungarian", "--out", tmp_path) == 2
    ce = json.loads((tmp_path / "counterexample.json").read_text())
    assert ce == {"suite": "hungarian", "cost": [[1.0]], "note": "forced"}


def test_verify_size_limit(tmp_path):
    assert run("verify", "--suite", "hungarian", "--size", 12, "--out", tmp_path) == 1


def test_bench_writes_csv(tmp_path):
    assert run("bench", "--reps", 1, "--backend", "python", "--out", tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "bench.csv").open()))
    assert len(rows) == 3 * 4 * 2
    assert {r["backend"] for r in rows} == {"python"}
    assert "hungarian_loglog_slope" in manifest(tmp_path)["config"]


def test_demo_figure1(tmp_path, capsys):
    assert run("demo-figure1", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert '("pizza this" | Pos:2,3)' in out and "truncated" in out
    data = json.loads((tmp_path / "figure1.json").read_text())
    assert len(data["selected"]) == 3


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ngram_oaxe.cli", "demo-figure1", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "this afternoon" in res.stdout
