"""Command-line interface.

One subcommand per pipeline stage: corpus building and synthesis, vocabulary
building, example sampling, pre-training, fine-tuning, evaluation, cascade
re-ranking, the analytical cost model, parameter counting, and an end-to-end
pipeline driven by a JSON config. Machine-readable results go to --out;
figures are rendered next to them; a human summary goes to stdout.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import torch

from . import report
from .corpus import (
    corpus_stats,
    generate_synthetic_corpus,
    ingest_corpus,
    write_corpus,
)
from .errors import DataError, JmsiError, NumericError, UsageError
from .evaluation import (
    attach_external_scores,
    cascade_rerank,
    compute_ranking_metrics,
    eval_report_to_dict,
    evaluate_ranking,
    classify_bundles,
    format_eval_table,
    label_accuracy,
    latency_ratio,
    read_score_file,
    save_eval_report,
    write_score_file,
)
from .model import (
    HeadKind,
    Model,
    ModelConfig,
    count_parameters,
    init_model,
    load_checkpoint,
    transfer_matching_parameters,
)
from .packing import PackConfig
from .presets import MODEL_PRESETS, RUN_PRESETS, model_preset, run_preset
from .sampler import (
    SamplerConfig,
    VERIFICATION_LABELS,
    build_bundles,
    make_synthetic_as2_bundles,
    read_as2_tsv,
    read_verification_jsonl,
    sample_anchor_example,
    write_anchor_examples,
    write_as2_tsv,
)
from .training import (
    RunConfig,
    finetune,
    pretrain,
    run_config_from_dict,
    run_config_to_dict,
)
from .vocab import build_vocab, load_vocab, save_vocab

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Run-config flags: every field is overridable by a flag of the same name.

def _add_run_config_flags(parser: argparse.ArgumentParser) -> None:
    from .training import OptimizerConfig, ScheduleConfig

    groups = {
        "model": (ModelConfig, parser.add_argument_group("model config")),
        "pack": (PackConfig, parser.add_argument_group("pack config")),
        "sampler": (SamplerConfig, parser.add_argument_group("sampler config")),
        "optimizer": (OptimizerConfig, parser.add_argument_group("optimizer config")),
        "schedule": (ScheduleConfig, parser.add_argument_group("schedule config")),
    }
    for section, (cls, group) in groups.items():
        for f in dataclasses.fields(cls):
            flag = "--" + f.name.replace("_", "-")
            if f.type in ("int", int):
                group.add_argument(flag, type=int, dest=f"{section}.{f.name}")
            elif f.type in ("float", float):
                group.add_argument(flag, type=float, dest=f"{section}.{f.name}")
            elif f.type in ("bool", bool):
                group.add_argument(flag, type=_parse_bool, metavar="{true,false}",
                                   dest=f"{section}.{f.name}")
    top = parser.add_argument_group("run config")
    top.add_argument("--batch-size", type=int, dest="run.batch_size")
    top.add_argument("--pretrain-head", choices=[h.value for h in HeadKind],
                     dest="run.pretrain_head")
    top.add_argument("--finetune-head", choices=[h.value for h in HeadKind],
                     dest="run.finetune_head")
    top.add_argument("--early-stopping-metric", choices=["dev-map", "dev-accuracy"],
                     dest="run.early_stopping_metric")
    top.add_argument("--patience", type=int, dest="run.patience")
    top.add_argument("--max-epochs", type=int, dest="run.max_epochs")
    top.add_argument("--seed", type=int, dest="run.seed")
    top.add_argument("--mask-prob", type=float, dest="run.mask_prob")
    top.add_argument("--mlm-weight", type=float, dest="run.mlm_weight")
    top.add_argument("--para-weight", type=float, dest="run.para_weight")
    top.add_argument("--num-examples", type=int, dest="run.num_examples")
    top.add_argument("--checkpoint-every", type=int, dest="run.checkpoint_every")


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Layer config sources: preset or file first, then flag overrides."""
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"missing config file: {path}")
        try:
            base = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from exc
        config = run_config_to_dict(run_config_from_dict(base))
    else:
        config = run_config_to_dict(run_preset(getattr(args, "preset", None) or "desk-scale"))
    for key, value in vars(args).items():
        if value is None or "." not in key:
            continue
        section, field = key.split(".", 1)
        if section == "run":
            config[field] = value
        else:
            config[section][field] = value
    return run_config_from_dict(config)


def _load_bundles(task: str, path: str, k: int):
    if task == "as2":
        records = read_as2_tsv(path)
    elif task == "verification":
        records = read_verification_jsonl(path)
    else:
        raise UsageError(f"unknown task {task!r}")
    return build_bundles(records, k=k, overflow_policy="truncate")


def _load_model_for_inference(path: str) -> Model:
    model, _ = load_checkpoint(path)
    return model


# ---------------------------------------------------------------------------
# Commands

def cmd_build_corpus(args) -> int:
    corpus = ingest_corpus(args.input, args.format)
    write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {args.out}: {stats.num_documents} documents, "
          f"{stats.num_paragraphs} paragraphs, {stats.num_sentences} sentences, "
          f"{stats.num_eligible_anchors} eligible anchors")
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    corpus = generate_synthetic_corpus(
        seed=args.seed,
        n_docs=args.n_docs,
        paras_per_doc=args.paras_per_doc,
        sents_per_para=args.sents_per_para,
        topic_vocab_size=args.topic_vocab_size,
    )
    write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {args.out}: {stats.num_documents} documents, "
          f"{stats.num_sentences} sentences (seed {args.seed})")
    return EXIT_OK


def cmd_build_vocab(args) -> int:
    corpus = ingest_corpus(args.corpus, "jsonl-docs")
    vocab = build_vocab(corpus, max_size=args.max_size, min_freq=args.min_freq)
    save_vocab(vocab, args.out)
    print(f"wrote {args.out}: {vocab.size} tokens (5 reserved)")
    return EXIT_OK


def cmd_sample(args) -> int:
    corpus = ingest_corpus(args.corpus, "jsonl-docs")
    cfg = SamplerConfig(k1=args.k1, k2=args.k2, k3=args.k3,
                        shuffle_candidates=not args.no_shuffle)
    examples = [sample_anchor_example(corpus, cfg, seed=args.seed ^ i)
                for i in range(args.n)]
    if args.out:
        write_anchor_examples(examples, args.out)
        print(f"wrote {args.n} examples to {args.out}")
    for ex in examples:
        labels = "".join(str(l) for l in ex.labels)
        print(f"anchor ({ex.anchor.doc_id},{ex.anchor.para_id},{ex.anchor.sent_id}) "
              f"labels {labels}: {ex.anchor.text!r}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    run = _resolve_run_config(args)
    corpus = ingest_corpus(args.corpus, "jsonl-docs")
    vocab = load_vocab(args.vocab)
    out = Path(args.out)
    result = pretrain(run, corpus, vocab, out_dir=out, steps=args.steps)
    _write_json(run_config_to_dict(run), out / "run_config.json")
    if result.history:
        report.save_pretrain_figures(result.history, out)
        last = result.history[-1]
        print(f"pre-trained {last['step']} steps: loss {last['loss']:.4f} "
              f"(mlm {last['mlm_loss']:.4f}, para {last['para_loss']:.4f}, "
              f"accuracy {last['para_accuracy']:.3f})")
    else:
        print("pre-training ran 0 steps; wrote the initial checkpoint")
    print(f"checkpoints: {', '.join(p.name for p in result.checkpoint_paths)}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    run = _resolve_run_config(args)
    vocab = load_vocab(args.vocab)
    train_bundles = _load_bundles(args.task, args.train, run.pack.k)
    dev_bundles = _load_bundles(args.task, args.dev, run.pack.k)
    init = None
    if args.init:
        source, _ = load_checkpoint(args.init)
        init = init_model(run.model, run.seed)
        copied = transfer_matching_parameters(source, init)
        print(f"warm-started {len(copied)} parameter tensors from {args.init}")
    out = Path(args.out)
    result = finetune(run, train_bundles, dev_bundles, vocab, init=init, out_dir=out)
    _write_json(run_config_to_dict(run), out / "run_config.json")
    report.save_finetune_figures(result.history, run.early_stopping_metric, out)
    _write_json(
        {"best_metric": result.best_metric, "best_epoch": result.best_epoch,
         "epochs_run": len(result.history), "metric": run.early_stopping_metric},
        out / "finetune_summary.json",
    )
    print(f"best {run.early_stopping_metric} {result.best_metric:.4f} "
          f"at epoch {result.best_epoch} ({len(result.history)} epochs run)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    vocab = load_vocab(args.vocab)
    model = _load_model_for_inference(args.checkpoint)
    head = HeadKind(args.head)
    cfg = PackConfig(slot_len=args.slot_len, k=args.k)
    bundles = _load_bundles(args.task, args.data, cfg.k)
    out = Path(args.out)
    if args.task == "as2":
        eval_report = evaluate_ranking(model, head, bundles, cfg, vocab)
        save_eval_report(eval_report, out)
        report.save_eval_figure(eval_report, out)
        print(format_eval_table(eval_report))
    else:
        preds = classify_bundles(model, head, bundles, cfg, vocab)
        golds = [b.label for b in bundles]
        accuracy = label_accuracy([VERIFICATION_LABELS[i] for i in preds], golds)
        out.mkdir(parents=True, exist_ok=True)
        _write_json({"label_accuracy": accuracy, "n_queries": len(bundles)},
                    out / "eval_report.json")
        with open(out / "eval_report.txt", "w", encoding="utf-8") as fh:
            fh.write(f"queries  {len(bundles)}\nLA       {accuracy:.4f}\n")
        report.save_label_accuracy_figure(accuracy, len(bundles), out)
        print(f"queries {len(bundles)}  LA {accuracy:.4f}")
    return EXIT_OK


def cmd_rerank(args) -> int:
    vocab = load_vocab(args.vocab)
    model = _load_model_for_inference(args.checkpoint)
    head = HeadKind(args.head)
    cfg = PackConfig(slot_len=args.slot_len, k=args.k)
    bundles = build_bundles(read_as2_tsv(args.data), k=args.max_candidates,
                            overflow_policy="truncate")
    bundles = attach_external_scores(bundles, read_score_file(args.scores))
    out = Path(args.out)
    results = [cascade_rerank(model, head, b, k=cfg.k, cfg=cfg, vocab=vocab)
               for b in bundles]
    eval_report = compute_ranking_metrics(
        [(r, b.gold) for r, b in zip(results, bundles)]
    )
    out.mkdir(parents=True, exist_ok=True)
    write_score_file(results, out / "reranked.tsv")
    save_eval_report(eval_report, out)
    report.save_eval_figure(eval_report, out)
    print(format_eval_table(eval_report))
    return EXIT_OK


def cmd_cost_model(args) -> int:
    cost = latency_ratio(args.k)
    print(f"k={cost.k}: quadratic_ratio {cost.quadratic_ratio:g}, "
          f"linear_ratio {cost.linear_ratio:g}")
    if args.out:
        out = Path(args.out)
        _write_json(
            {"k": cost.k, "quadratic_ratio": cost.quadratic_ratio,
             "linear_ratio": cost.linear_ratio},
            out / "cost_model.json" if out.suffix == "" else out,
        )
        figure_dir = out if out.suffix == "" else out.parent
        report.save_cost_figure([latency_ratio(k) for k in range(1, max(9, args.k + 1))],
                                figure_dir)
    return EXIT_OK


def cmd_count_params(args) -> int:
    if args.preset:
        cfg = model_preset(args.preset)
    else:
        required = ["vocab_size", "max_positions", "type_vocab", "num_layers",
                    "d_model", "num_heads", "d_ff"]
        values = {name: getattr(args, f"model.{name}", None) for name in required}
        missing = [n for n, v in values.items() if v is None]
        if missing:
            raise UsageError(f"--preset or explicit model flags required; missing {missing}")
        cfg = ModelConfig(**values)
    total = count_parameters(Model(cfg), include_heads=args.include_heads)
    print(total)
    if args.out:
        _write_json({"config": dataclasses.asdict(cfg),
                     "include_heads": args.include_heads, "parameters": total},
                    Path(args.out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Pipeline

def run_pipeline(config: dict, out_dir: str | Path) -> dict:
    """Execute the configured stages in order: synth-corpus, build-vocab,
    pretrain, finetune, evaluate. Stages missing from the config are
    skipped; later stages consume the artifacts of earlier ones. Returns
    (and writes) a summary of every stage's outputs and the seeds used."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not isinstance(config, dict):
        raise UsageError("pipeline config must be a JSON object")

    run = run_config_from_dict(config["run"]) if "run" in config else run_preset(
        config.get("preset", "desk-scale"))
    if "seed" in config:
        run = dataclasses.replace(run, seed=int(config["seed"]))
    summary: dict = {"seed": run.seed, "stages": []}

    corpus = None
    if "synth_corpus" in config:
        spec = dict(config["synth_corpus"])
        spec.setdefault("seed", run.seed)
        corpus = generate_synthetic_corpus(**spec)
        write_corpus(corpus, out / "corpus.jsonl")
        stats = corpus_stats(corpus)
        summary["stages"].append("synth-corpus")
        summary["corpus"] = {
            "documents": stats.num_documents,
            "paragraphs": stats.num_paragraphs,
            "sentences": stats.num_sentences,
            "eligible_anchors": stats.num_eligible_anchors,
            "seed": spec["seed"],
        }

    vocab = None
    if "build_vocab" in config:
        if corpus is None:
            raise UsageError("build_vocab stage requires the synth_corpus stage")
        spec = config["build_vocab"]
        vocab = build_vocab(corpus, max_size=spec.get("max_size", run.model.vocab_size),
                            min_freq=spec.get("min_freq", 1))
        save_vocab(vocab, out / "vocab.txt")
        summary["stages"].append("build-vocab")
        summary["vocab"] = {"size": vocab.size}

    pretrained = None
    if "pretrain" in config:
        if corpus is None or vocab is None:
            raise UsageError("pretrain stage requires synth_corpus and build_vocab stages")
        spec = config["pretrain"]
        result = pretrain(run, corpus, vocab, out_dir=out / "pretrain",
                          steps=spec.get("steps"))
        pretrained = result.model
        if result.history:
            report.save_pretrain_figures(result.history, out / "pretrain")
        summary["stages"].append("pretrain")
        summary["pretrain"] = {
            "steps": len(result.history),
            "final": result.history[-1] if result.history else None,
            "pool_accuracy": result.pool_accuracy,
        }

    finetuned = None
    if "finetune" in config:
        if vocab is None:
            raise UsageError("finetune stage requires the build_vocab stage")
        spec = config["finetune"]
        train_bundles, dev_bundles = _pipeline_bundles(spec, run)
        write_as2_tsv(
            [(b.query, list(b.candidates), list(b.gold), None) for b in train_bundles],
            out / "finetune_train.tsv",
        )
        init = None
        if pretrained is not None:
            init = init_model(run.model, run.seed)
            transfer_matching_parameters(pretrained, init)
        result = finetune(run, train_bundles, dev_bundles, vocab, init=init,
                          out_dir=out / "finetune")
        finetuned = result.model
        report.save_finetune_figures(result.history, run.early_stopping_metric,
                                     out / "finetune")
        summary["stages"].append("finetune")
        summary["finetune"] = {
            "best_metric": result.best_metric,
            "best_epoch": result.best_epoch,
            "epochs_run": len(result.history),
            "metric": run.early_stopping_metric,
            "initialized_from_pretrain": pretrained is not None,
        }

    if "evaluate" in config:
        if vocab is None or finetuned is None:
            raise UsageError("evaluate stage requires build_vocab and finetune stages")
        spec = config["evaluate"]
        test_bundles = _pipeline_eval_bundles(spec, run)
        eval_report = evaluate_ranking(finetuned, HeadKind(run.finetune_head),
                                       test_bundles, run.pack, vocab)
        save_eval_report(eval_report, out / "evaluate")
        report.save_eval_figure(eval_report, out / "evaluate")
        summary["stages"].append("evaluate")
        summary["evaluate"] = eval_report_to_dict(eval_report)

    _write_json(summary, out / "summary.json")
    return summary


def _pipeline_bundles(spec: dict, run: RunConfig):
    if "train" in spec and "dev" in spec:
        train = _load_bundles(spec.get("task", "as2"), spec["train"], run.pack.k)
        dev = _load_bundles(spec.get("task", "as2"), spec["dev"], run.pack.k)
        return train, dev
    synth = spec.get("synthetic")
    if synth is None:
        raise UsageError("finetune stage needs train/dev paths or a 'synthetic' block")
    train = make_synthetic_as2_bundles(
        seed=synth.get("seed", run.seed + 1),
        n_queries=synth.get("train_queries", 40),
        k=run.pack.k,
        topic_vocab_size=synth["topic_vocab_size"],
    )
    dev = make_synthetic_as2_bundles(
        seed=synth.get("dev_seed", run.seed + 2),
        n_queries=synth.get("dev_queries", 30),
        k=run.pack.k,
        topic_vocab_size=synth["topic_vocab_size"],
    )
    return train, dev


def _pipeline_eval_bundles(spec: dict, run: RunConfig):
    if "data" in spec:
        return _load_bundles(spec.get("task", "as2"), spec["data"], run.pack.k)
    synth = spec.get("synthetic")
    if synth is None:
        raise UsageError("evaluate stage needs a data path or a 'synthetic' block")
    return make_synthetic_as2_bundles(
        seed=synth.get("seed", run.seed + 3),
        n_queries=synth.get("queries", 50),
        k=run.pack.k,
        topic_vocab_size=synth["topic_vocab_size"],
    )


def cmd_pipeline(args) -> int:
    path = Path(args.config)
    if not path.exists():
        raise DataError(f"missing config file: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid config: {exc}") from exc
    summary = run_pipeline(config, args.out)
    print(f"pipeline stages: {', '.join(summary['stages']) or '(none)'}")
    if "evaluate" in summary:
        metrics = summary["evaluate"]
        print(f"test P@1 {metrics['p_at_1']:.4f}  MAP {metrics['map']:.4f}  "
              f"MRR {metrics['mrr']:.4f}")
    print(f"summary: {Path(args.out) / 'summary.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="jmsi", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-corpus", help="ingest a document collection")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl-docs", "plaintext-dir"], default="jsonl-docs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("synth-corpus", help="generate a topic-planted synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-docs", type=int, required=True)
    p.add_argument("--paras-per-doc", type=int, default=3)
    p.add_argument("--sents-per-para", type=int, default=3)
    p.add_argument("--topic-vocab-size", type=int, default=40)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("build-vocab", help="build a word vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-size", type=int, default=256)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("sample", help="sample pre-training examples with provenance")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k1", type=int, default=1)
    p.add_argument("--k2", type=int, default=2)
    p.add_argument("--k3", type=int, default=2)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("pretrain", help="run the joint pre-training loop")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", help="run-config JSON file")
    p.add_argument("--preset", choices=sorted(RUN_PRESETS))
    p.add_argument("--steps", type=int, help="override the schedule's step count")
    p.add_argument("--out", required=True)
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune from a checkpoint or from scratch")
    p.add_argument("--task", choices=["as2", "verification"], required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--init", help="warm-start checkpoint")
    p.add_argument("--config")
    p.add_argument("--preset", choices=sorted(RUN_PRESETS))
    p.add_argument("--out", required=True)
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p.add_argument("--task", choices=["as2", "verification"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head", choices=[h.value for h in HeadKind], default="candidate")
    p.add_argument("--slot-len", type=int, default=64)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rerank", help="cascade re-ranking of externally scored candidates")
    p.add_argument("--data", required=True)
    p.add_argument("--scores", required=True, help="TSV bundle_id, candidate_index, score")
    p.add_argument("--vocab", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--head", choices=["candidate", "pair"], default="candidate")
    p.add_argument("--slot-len", type=int, default=64)
    p.add_argument("--k", type=int, default=5, help="re-rank the top-k external candidates")
    p.add_argument("--max-candidates", type=int, default=100,
                   help="candidates kept per query before the cascade")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("cost-model", help="analytical joint-vs-pairwise latency ratios")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost_model)

    p = sub.add_parser("count-params", help="exact parameter count for a model shape")
    p.add_argument("--preset", choices=sorted(MODEL_PRESETS))
    p.add_argument("--include-heads", action="store_true")
    p.add_argument("--out")
    group = p.add_argument_group("model config")
    for name in ("vocab-size", "max-positions", "type-vocab", "num-layers",
                 "d-model", "num-heads", "d-ff"):
        group.add_argument(f"--{name}", type=int, dest=f"model.{name.replace('-', '_')}")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("pipeline", help="run configured stages end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("JMSI_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"ignoring non-integer JMSI_THREADS={threads!r}", file=sys.stderr)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except JmsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
