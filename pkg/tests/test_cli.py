"""CLI contracts: exit codes, outputs, idempotency, and the pipeline."""

import json
import struct

import pytest

from jmsi.cli import build_parser, main, run_pipeline
from jmsi.sampler import make_synthetic_as2_bundles, write_as2_tsv


def run_cli(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Corpus, vocab, datasets, and a short pre-training run shared by tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.jsonl"
    vocab = root / "vocab.txt"
    assert run_cli(["synth-corpus", "--seed", "0", "--n-docs", "25",
                    "--topic-vocab-size", "12", "--out", str(corpus)]) == 0
    assert run_cli(["build-vocab", "--corpus", str(corpus), "--max-size", "160",
                    "--out", str(vocab)]) == 0
    for name, seed, n in (("train.tsv", 1, 10), ("dev.tsv", 2, 6), ("test.tsv", 3, 8)):
        bundles = make_synthetic_as2_bundles(seed=seed, n_queries=n, k=5,
                                             topic_vocab_size=12)
        write_as2_tsv([(b.query, list(b.candidates), list(b.gold), None) for b in bundles],
                      root / name)
    pre = root / "pre"
    assert run_cli([
        "pretrain", "--corpus", str(corpus), "--vocab", str(vocab),
        "--preset", "desk-scale", "--steps", "8", "--total-steps", "8",
        "--warmup-steps", "2", "--vocab-size", "160", "--batch-size", "4",
        "--out", str(pre),
    ]) == 0
    return root


class TestExitCodes:
    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as err:
            run_cli(["definitely-not-a-command"])
        assert err.value.code == 1

    def test_unknown_flag_exits_1(self):
        with pytest.raises(SystemExit) as err:
            run_cli(["cost-model", "--k", "5", "--bogus-flag"])
        assert err.value.code == 1

    def test_missing_data_exits_2(self, tmp_path):
        code = run_cli(["build-corpus", "--input", str(tmp_path / "absent.jsonl"),
                        "--out", str(tmp_path / "o.jsonl")])
        assert code == 2

    def test_bad_usage_exits_1(self, tmp_path):
        # k1=0 violates the sampler contract.
        corpus = tmp_path / "c.jsonl"
        run_cli(["synth-corpus", "--seed", "0", "--n-docs", "4", "--out", str(corpus)])
        code = run_cli(["sample", "--corpus", str(corpus), "--k1", "0", "--n", "1"])
        assert code == 1

    def test_help_exits_0(self, capsys):
        for argv in (["--help"], ["cost-model", "--help"], ["pretrain", "--help"]):
            with pytest.raises(SystemExit) as err:
                run_cli(argv)
            assert err.value.code == 0
        out = capsys.readouterr().out
        assert "--k" in out


class TestCostModel:
    def test_published_values_printed(self, capsys):
        assert run_cli(["cost-model", "--k", "5"]) == 0
        out = capsys.readouterr().out
        assert "1.8" in out and "0.6" in out

    def test_json_and_figure_output(self, tmp_path, capsys):
        out_dir = tmp_path / "cost"
        assert run_cli(["cost-model", "--k", "3", "--out", str(out_dir)]) == 0
        capsys.readouterr()
        payload = json.loads((out_dir / "cost_model.json").read_text())
        assert payload["quadratic_ratio"] == pytest.approx(16 / 12)
        assert (out_dir / "cost_model.png").exists()


class TestCountParams:
    def test_preset_value(self, capsys):
        assert run_cli(["count-params", "--preset", "roberta-base-shape"]) == 0
        assert capsys.readouterr().out.strip() == "124055040"

    def test_extended_preset(self, capsys):
        assert run_cli(["count-params", "--preset", "roberta-base-shape-6types"]) == 0
        assert capsys.readouterr().out.strip() == "124058880"

    def test_explicit_flags(self, capsys):
        assert run_cli(["count-params", "--vocab-size", "100", "--max-positions", "64",
                        "--type-vocab", "2", "--num-layers", "1", "--d-model", "8",
                        "--num-heads", "2", "--d-ff", "16"]) == 0
        assert capsys.readouterr().out.strip() == "1944"

    def test_missing_flags_usage_error(self, capsys):
        assert run_cli(["count-params", "--vocab-size", "100"]) == 1


class TestSample:
    def test_provenance_output(self, workspace, capsys):
        assert run_cli(["sample", "--corpus", str(workspace / "corpus.jsonl"),
                        "--k1", "1", "--k2", "2", "--k3", "2", "--n", "3",
                        "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("anchor (") == 3

    def test_shard_idempotent(self, workspace, tmp_path):
        args = ["sample", "--corpus", str(workspace / "corpus.jsonl"), "--n", "4",
                "--seed", "7"]
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run_cli(args + ["--out", str(a)]) == 0
        assert run_cli(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestTrainingCommands:
    def test_pretrain_outputs(self, workspace):
        pre = workspace / "pre"
        names = {p.name for p in pre.iterdir()}
        assert {"checkpoint-000000.jmsc", "checkpoint-final.jmsc", "metrics.jsonl",
                "pretrain_curves.png", "run_config.json"} <= names
        rows = [json.loads(line) for line in (pre / "metrics.jsonl").read_text().splitlines()]
        assert len(rows) == 8
        assert set(rows[0]) == {"step", "lr", "mlm_loss", "para_loss", "loss",
                                "para_accuracy"}
        raw = (pre / "checkpoint-final.jmsc").read_bytes()
        assert raw[:4] == b"JMSC"
        (version,) = struct.unpack_from("<I", raw, 4)
        assert version == 1

    def test_finetune_and_evaluate(self, workspace, tmp_path, capsys):
        ft = tmp_path / "ft"
        code = run_cli([
            "finetune", "--task", "as2", "--train", str(workspace / "train.tsv"),
            "--dev", str(workspace / "dev.tsv"), "--vocab", str(workspace / "vocab.txt"),
            "--init", str(workspace / "pre" / "checkpoint-final.jmsc"),
            "--preset", "desk-scale", "--vocab-size", "160", "--max-epochs", "2",
            "--patience", "1", "--total-steps", "20", "--warmup-steps", "2",
            "--batch-size", "4", "--out", str(ft),
        ])
        assert code == 0
        assert (ft / "checkpoint-best.jmsc").exists()
        assert (ft / "finetune_curves.png").exists()
        summary = json.loads((ft / "finetune_summary.json").read_text())
        assert 0.0 <= summary["best_metric"] <= 1.0
        capsys.readouterr()

        ev = tmp_path / "eval"
        code = run_cli([
            "evaluate", "--task", "as2", "--data", str(workspace / "test.tsv"),
            "--vocab", str(workspace / "vocab.txt"),
            "--checkpoint", str(ft / "checkpoint-best.jmsc"),
            "--slot-len", "12", "--k", "5", "--out", str(ev),
        ])
        assert code == 0
        report = json.loads((ev / "eval_report.json").read_text())
        assert set(report) == {"p_at_1", "map", "mrr", "n_queries"}
        assert (ev / "eval_metrics.png").exists()
        table = (ev / "eval_report.txt").read_text()
        assert "MAP" in table

    def test_rerank(self, workspace, tmp_path, capsys):
        from jmsi.sampler import build_bundles, read_as2_tsv
        bundles = build_bundles(read_as2_tsv(workspace / "test.tsv"), k=5)
        scores = tmp_path / "scores.tsv"
        with open(scores, "w") as fh:
            for b in bundles:
                for i in range(len(b.candidates)):
                    fh.write(f"{b.bundle_id}\t{i}\t{float(len(b.candidates) - i)}\n")
        out = tmp_path / "rr"
        code = run_cli([
            "rerank", "--data", str(workspace / "test.tsv"), "--scores", str(scores),
            "--vocab", str(workspace / "vocab.txt"),
            "--checkpoint", str(workspace / "pre" / "checkpoint-final.jmsc"),
            "--slot-len", "12", "--k", "3", "--out", str(out),
        ])
        assert code == 0
        capsys.readouterr()
        reranked = (out / "reranked.tsv").read_text().splitlines()
        assert len(reranked) == sum(len(b.candidates) for b in bundles)
        assert (out / "eval_report.json").exists()

    def test_verification_roundtrip(self, workspace, tmp_path, capsys):
        claims = tmp_path / "claims.jsonl"
        rows = [
            {"claim": "topic001 filler01", "evidences": ["topic001 filler02"],
             "label": "SUPPORTS"},
            {"claim": "topic002 filler01", "evidences": ["topic003 filler04", "filler05"],
             "label": "REFUTES"},
            {"claim": "topic004", "evidences": ["filler09"],
             "label": "NOT ENOUGH INFO"},
        ]
        claims.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        ft = tmp_path / "ftv"
        code = run_cli([
            "finetune", "--task", "verification", "--train", str(claims),
            "--dev", str(claims), "--vocab", str(workspace / "vocab.txt"),
            "--preset", "desk-scale", "--vocab-size", "160", "--num-classes", "3",
            "--finetune-head", "mean", "--early-stopping-metric", "dev-accuracy",
            "--max-epochs", "2", "--patience", "1", "--total-steps", "20",
            "--warmup-steps", "2", "--batch-size", "2", "--out", str(ft),
        ])
        assert code == 0
        capsys.readouterr()
        ev = tmp_path / "evv"
        code = run_cli([
            "evaluate", "--task", "verification", "--data", str(claims),
            "--vocab", str(workspace / "vocab.txt"),
            "--checkpoint", str(ft / "checkpoint-best.jmsc"), "--head", "mean",
            "--slot-len", "12", "--k", "5", "--out", str(ev),
        ])
        assert code == 0
        report = json.loads((ev / "eval_report.json").read_text())
        assert set(report) == {"label_accuracy", "n_queries"}


class TestPipeline:
    CONFIG = {
        "seed": 3,
        "preset": "desk-scale",
        "synth_corpus": {"n_docs": 20, "paras_per_doc": 3, "sents_per_para": 3,
                         "topic_vocab_size": 10},
        "build_vocab": {"max_size": 160},
        "pretrain": {"steps": 6},
        "finetune": {"synthetic": {"topic_vocab_size": 10, "train_queries": 6,
                                   "dev_queries": 4}},
        "evaluate": {"synthetic": {"topic_vocab_size": 10, "queries": 5}},
    }

    def _base_config(self):
        config = json.loads(json.dumps(self.CONFIG))
        config["run"] = None
        del config["run"]
        return config

    def test_all_stages(self, tmp_path, capsys):
        config = self._base_config()
        config["run"] = _small_run_dict()
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert run_cli(["pipeline", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
        capsys.readouterr()
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["stages"] == ["synth-corpus", "build-vocab", "pretrain",
                                     "finetune", "evaluate"]
        assert summary["seed"] == 3
        assert "p_at_1" in summary["evaluate"]
        assert (tmp_path / "out" / "pretrain" / "pretrain_curves.png").exists()
        assert (tmp_path / "out" / "evaluate" / "eval_metrics.png").exists()

    def test_missing_stages_skipped(self, tmp_path, capsys):
        config = self._base_config()
        config["run"] = _small_run_dict()
        del config["pretrain"]
        del config["finetune"]
        del config["evaluate"]
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        assert run_cli(["pipeline", "--config", str(path), "--out", str(tmp_path / "out")]) == 0
        capsys.readouterr()
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["stages"] == ["synth-corpus", "build-vocab"]

    def test_invalid_config_exits_1(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        assert run_cli(["pipeline", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def _small_run_dict():
    from jmsi.presets import desk_scale_run
    from jmsi.training import run_config_to_dict
    import dataclasses
    run = desk_scale_run(seed=3)
    run = dataclasses.replace(
        run,
        model=dataclasses.replace(run.model, vocab_size=160, num_layers=1, d_model=16,
                                  num_heads=2, d_ff=16),
        schedule=dataclasses.replace(run.schedule, warmup_steps=2, total_steps=10),
        batch_size=4, max_epochs=2, patience=1,
    )
    return run_config_to_dict(run)
