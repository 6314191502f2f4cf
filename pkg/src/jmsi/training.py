"""Losses, triangular schedule, clipped Adam with decoupled decay, and the
pre-training / fine-tuning loops at configurable scale.

Pre-training combines masked-token prediction with the same-paragraph
candidate objective (unit-weighted sum by default). Fine-tuning reuses the
per-candidate heads for ranking tasks and the single-label heads for
verification, with early stopping on a dev metric.
"""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F

from .corpus import Corpus
from .errors import DataError, NumericError, UsageError
from .model import (
    HeadKind,
    Model,
    ModelConfig,
    MULTI_LABEL_HEADS,
    SINGLE_LABEL_HEADS,
    apply_head,
    compute_gradients,
    init_model,
    save_checkpoint,
)
from .packing import PackConfig, PackedInput, collate, pack_bundle, pack_example, with_masking
from .sampler import (
    AnchorExample,
    CandidateBundle,
    IGNORE_INDEX,
    SamplerConfig,
    VERIFICATION_LABELS,
    apply_mlm_masking,
    mix_seed,
    sample_anchor_example,
)
from .vocab import Vocab, encode


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise UsageError("betas must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise UsageError("clip_norm must be > 0")


@dataclass(frozen=True)
class ScheduleConfig:
    warmup_steps: int = 100
    total_steps: int = 1000
    peak_lr: float = 1e-4

    def __post_init__(self):
        if not 0 < self.warmup_steps <= self.total_steps:
            raise UsageError("need 0 < warmup_steps <= total_steps")


EARLY_STOPPING_METRICS = ("dev-map", "dev-accuracy")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    pack: PackConfig
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    batch_size: int = 8
    pretrain_head: HeadKind = HeadKind.CANDIDATE
    finetune_head: HeadKind = HeadKind.CANDIDATE
    early_stopping_metric: str = "dev-map"
    patience: int = 3
    max_epochs: int = 40
    seed: int = 0
    mask_prob: float = 0.15
    mlm_weight: float = 1.0
    para_weight: float = 1.0
    # Fixed pre-training pool size; 0 streams fresh examples every step.
    num_examples: int = 0
    # Extra checkpoint cadence in steps; first and last are always written.
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.early_stopping_metric not in EARLY_STOPPING_METRICS:
            raise UsageError(f"early_stopping_metric must be one of {EARLY_STOPPING_METRICS}")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise UsageError("mask_prob must be in [0, 1]")
        if HeadKind(self.pretrain_head) not in MULTI_LABEL_HEADS:
            raise UsageError("pretraining requires a per-candidate head (candidate or pair)")


def run_config_to_dict(run: RunConfig) -> dict:
    d = asdict(run)
    d["pretrain_head"] = HeadKind(run.pretrain_head).value
    d["finetune_head"] = HeadKind(run.finetune_head).value
    return d


def run_config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    try:
        d["model"] = ModelConfig(**d["model"])
        d["pack"] = PackConfig(**d["pack"])
        for key, cls in (("sampler", SamplerConfig), ("optimizer", OptimizerConfig),
                         ("schedule", ScheduleConfig)):
            if key in d:
                d[key] = cls(**d[key])
        for key in ("pretrain_head", "finetune_head"):
            if key in d:
                d[key] = HeadKind(d[key])
    except KeyError as exc:
        raise DataError(f"run config missing section {exc}") from exc
    except TypeError as exc:
        raise DataError(f"bad run config: {exc}") from exc
    return RunConfig(**d)


# ---------------------------------------------------------------------------
# Losses and schedule

def candidate_bce_loss(
    logits: torch.Tensor, labels: torch.Tensor, valid: torch.Tensor
) -> torch.Tensor:
    """Mean binary cross-entropy (with logits) over valid candidate slots.
    Returns 0 when no slot is valid."""
    if not torch.isfinite(logits).all():
        raise NumericError("non-finite candidate logits")
    if logits.shape != labels.shape or logits.shape != valid.shape:
        raise UsageError("logits, labels and valid mask must share a shape")
    valid = valid.bool()
    if not valid.any():
        return logits.sum() * 0.0
    targets = torch.where(valid, labels, torch.zeros_like(labels))
    per = F.binary_cross_entropy_with_logits(
        logits, targets.to(logits.dtype), reduction="none"
    )
    return per[valid].mean()


def mlm_loss(token_logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over positions whose label is not IGNORE_INDEX;
    0 when nothing is labeled."""
    if not torch.isfinite(token_logits).all():
        raise NumericError("non-finite token logits")
    vocab_size = token_logits.shape[-1]
    flat_logits = token_logits.reshape(-1, vocab_size)
    flat_labels = labels.reshape(-1)
    selected = flat_labels != IGNORE_INDEX
    if not selected.any():
        return token_logits.sum() * 0.0
    return F.cross_entropy(flat_logits[selected], flat_labels[selected])


def pretrain_loss(
    mlm: torch.Tensor, para: torch.Tensor,
    mlm_weight: float = 1.0, para_weight: float = 1.0,
) -> torch.Tensor:
    """Combined objective; both terms weighted 1.0 by default."""
    return mlm_weight * mlm + para_weight * para


def lr_at(sched: ScheduleConfig, step: int) -> float:
    """Triangular schedule: linear 0 to peak over the warmup, linear peak to
    0 over the remainder, 0 beyond total_steps."""
    if step < 0:
        raise UsageError(f"step must be >= 0, got {step}")
    if step <= sched.warmup_steps:
        return sched.peak_lr * step / sched.warmup_steps
    if step >= sched.total_steps:
        return 0.0
    span = sched.total_steps - sched.warmup_steps
    return sched.peak_lr * (1.0 - (step - sched.warmup_steps) / span)


# ---------------------------------------------------------------------------
# Optimizer

@dataclass
class AdamState:
    step: int
    m: dict[str, torch.Tensor]
    v: dict[str, torch.Tensor]


def init_adam_state(model: Model) -> AdamState:
    return AdamState(
        step=0,
        m={n: torch.zeros_like(p) for n, p in model.named_parameters()},
        v={n: torch.zeros_like(p) for n, p in model.named_parameters()},
    )


def optimizer_step(
    model: Model,
    grads: dict[str, torch.Tensor],
    state: AdamState,
    lr: float,
    cfg: OptimizerConfig,
) -> AdamState:
    """Clip gradients to global norm, apply Adam with bias correction, then
    decoupled weight decay (1-dim parameters - biases and norm gains - are
    exempt). Updates model parameters and the state in place."""
    sq = 0.0
    for g in grads.values():
        if not torch.isfinite(g).all():
            raise NumericError("non-finite gradient")
        sq += float((g.double() ** 2).sum())
    norm = math.sqrt(sq)
    scale = cfg.clip_norm / norm if norm > cfg.clip_norm else 1.0

    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = grads[name] * scale
            m = state.m[name]
            v = state.v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            update = (m / bc1) / ((v / bc2).sqrt() + cfg.eps)
            p.add_(update, alpha=-lr)
            if cfg.weight_decay and p.ndim >= 2:
                p.add_(p, alpha=-lr * cfg.weight_decay)
    return state


# ---------------------------------------------------------------------------
# Pre-training

@dataclass
class PretrainResult:
    model: Model
    history: list[dict]
    checkpoint_paths: list[Path]
    # Accuracy on the fixed example pool (clean inputs, eval mode); None when
    # streaming fresh examples.
    pool_accuracy: float | None


def _pack_anchor_example(ex: AnchorExample, pack: PackConfig, vocab: Vocab) -> PackedInput:
    slots = [encode(vocab, ex.anchor.text)] + [encode(vocab, c.text) for c in ex.candidates]
    return pack_example(slots, pack, labels=ex.labels)


def _para_logits(model: Model, head: HeadKind, batch) -> torch.Tensor:
    out = model.forward_batch(batch, train_mode=False)
    return apply_head(model, head, out).squeeze(-1)


def pool_para_accuracy(
    model: Model, head: HeadKind, examples: Sequence[AnchorExample],
    pack: PackConfig, vocab: Vocab, batch_size: int = 32,
) -> float:
    """Fraction of candidate slots classified correctly (logit > 0 means
    same-paragraph) over unmasked inputs in eval mode."""
    correct = 0
    count = 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            batch = collate([_pack_anchor_example(ex, pack, vocab) for ex in chunk])
            logits = _para_logits(model, head, batch)
            labels = torch.from_numpy(batch.labels)
            preds = (logits > 0).long()
            correct += int((preds == labels).sum())
            count += labels.numel()
    return correct / count


def pretrain(
    run: RunConfig,
    corpus: Corpus,
    vocab: Vocab,
    out_dir: str | Path | None = None,
    steps: int | None = None,
) -> PretrainResult:
    """Run the combined masking + same-paragraph objective.

    Per step: draw a batch of anchor examples (seeded run.seed XOR example
    index), pack, mask slot tokens, forward, combine the two losses on the
    configured per-candidate head, and take one optimizer step. Logs one
    metrics row per step; writes checkpoints at the configured cadence.

    ``steps`` overrides the step count (default: the schedule's total);
    0 produces only the initial checkpoint.
    """
    if run.model.num_classes != 1:
        raise UsageError("pre-training requires num_classes=1")
    if run.pack.k != run.sampler.k:
        raise UsageError(f"pack.k={run.pack.k} differs from sampler k={run.sampler.k}")
    n_steps = run.schedule.total_steps if steps is None else steps
    if n_steps < 0:
        raise UsageError(f"steps must be >= 0, got {steps}")

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    model = init_model(run.model, run.seed)
    state = init_adam_state(model)
    torch.manual_seed(mix_seed(run.seed, 1))  # dropout stream

    pool: list[AnchorExample] | None = None
    if run.num_examples:
        pool = [
            sample_anchor_example(corpus, run.sampler, run.seed ^ i)
            for i in range(run.num_examples)
        ]

    checkpoints: list[Path] = []

    def checkpoint(tag: str) -> None:
        if out_path is None:
            return
        path = out_path / f"checkpoint-{tag}.jmsc"
        save_checkpoint(path, model, state)
        checkpoints.append(path)

    checkpoint("000000")
    history: list[dict] = []
    metrics_fh = open(out_path / "metrics.jsonl", "w", encoding="utf-8") if out_path else None
    head = HeadKind(run.pretrain_head)
    try:
        for step in range(1, n_steps + 1):
            lr = lr_at(run.schedule, step)
            packed = []
            for j in range(run.batch_size):
                index = (step - 1) * run.batch_size + j
                if pool is not None:
                    example = pool[index % len(pool)]
                else:
                    example = sample_anchor_example(corpus, run.sampler, run.seed ^ index)
                row = _pack_anchor_example(example, run.pack, vocab)
                masked = apply_mlm_masking(
                    row.token_ids, vocab, run.mask_prob, mix_seed(run.seed, 2, index)
                )
                packed.append(with_masking(row, masked.input_ids, masked.mlm_labels))
            batch = collate(packed)

            out = model.forward_batch(batch, train_mode=True)
            logits = apply_head(model, head, out).squeeze(-1)
            labels = torch.from_numpy(batch.labels)
            valid = labels != IGNORE_INDEX
            para = candidate_bce_loss(logits, labels, valid)
            mlm = mlm_loss(out.token_logits, torch.from_numpy(batch.mlm_labels))
            loss = pretrain_loss(mlm, para, run.mlm_weight, run.para_weight)

            grads = compute_gradients(model, loss)
            state = optimizer_step(model, grads, state, lr, run.optimizer)

            with torch.no_grad():
                acc = float(((logits > 0).long() == labels)[valid].float().mean())
            entry = {
                "step": step,
                "lr": lr,
                "mlm_loss": float(mlm.detach()),
                "para_loss": float(para.detach()),
                "loss": float(loss.detach()),
                "para_accuracy": acc,
            }
            history.append(entry)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(entry) + "\n")
            if run.checkpoint_every and step % run.checkpoint_every == 0:
                checkpoint(f"{step:06d}")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()

    if n_steps > 0:
        checkpoint("final")
    pool_acc = (
        pool_para_accuracy(model, head, pool, run.pack, vocab) if pool is not None else None
    )
    return PretrainResult(model=model, history=history, checkpoint_paths=checkpoints,
                          pool_accuracy=pool_acc)


# ---------------------------------------------------------------------------
# Fine-tuning

@dataclass
class FinetuneResult:
    model: Model
    history: list[dict]
    best_metric: float
    best_epoch: int


def _bundle_task(bundles: Sequence[CandidateBundle]) -> str:
    kinds = {"ranking" if b.gold is not None else "verification" for b in bundles}
    if len(kinds) != 1:
        raise DataError("bundles mix ranking and verification records")
    return kinds.pop()


def finetune(
    run: RunConfig,
    train_bundles: Sequence[CandidateBundle],
    dev_bundles: Sequence[CandidateBundle],
    vocab: Vocab,
    init: Model | None = None,
    out_dir: str | Path | None = None,
) -> FinetuneResult:
    """Epoch loop with early stopping on the configured dev metric.

    Ranking bundles train per-candidate binary cross-entropy on a
    per-candidate head; verification bundles train 3-class cross-entropy on
    a single-label head. Keeps the best-dev checkpoint; stops once the count
    of consecutive non-improving epochs reaches ``patience``.
    """
    from . import evaluation  # local import; evaluation also uses packing/model

    if not train_bundles or not dev_bundles:
        raise DataError("need non-empty train and dev bundle sets")
    task = _bundle_task(list(train_bundles) + list(dev_bundles))
    head = HeadKind(run.finetune_head)
    if task == "ranking":
        if head not in MULTI_LABEL_HEADS or run.model.num_classes != 1:
            raise UsageError("ranking fine-tuning needs a per-candidate head and num_classes=1")
    else:
        if head not in SINGLE_LABEL_HEADS or run.model.num_classes != len(VERIFICATION_LABELS):
            raise UsageError(
                "verification fine-tuning needs a single-label head and "
                f"num_classes={len(VERIFICATION_LABELS)}"
            )

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    model = init if init is not None else init_model(run.model, run.seed)
    state = init_adam_state(model)
    torch.manual_seed(mix_seed(run.seed, 3))
    rng = random.Random(mix_seed(run.seed, 4))

    train_packed = [pack_bundle(b, run.pack, vocab) for b in train_bundles]
    if task == "verification":
        train_targets = [VERIFICATION_LABELS.index(b.label) for b in train_bundles]

    def dev_metric() -> float:
        if task == "ranking":
            report = evaluation.evaluate_ranking(
                model, head, dev_bundles, run.pack, vocab
            )
            return report.map if run.early_stopping_metric == "dev-map" else report.p_at_1
        preds = evaluation.classify_bundles(model, head, dev_bundles, run.pack, vocab)
        golds = [b.label for b in dev_bundles]
        return evaluation.label_accuracy([VERIFICATION_LABELS[i] for i in preds], golds)

    history: list[dict] = []
    best_metric = -math.inf
    best_epoch = 0
    best_params = copy.deepcopy(model.state_dict())
    bad_epochs = 0
    global_step = 0

    for epoch in range(1, run.max_epochs + 1):
        order = list(range(len(train_packed)))
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), run.batch_size):
            chunk = order[start : start + run.batch_size]
            batch = collate([train_packed[i] for i in chunk])
            global_step += 1
            out = model.forward_batch(batch, train_mode=True)
            logits = apply_head(model, head, out)
            if task == "ranking":
                labels = torch.from_numpy(batch.labels)
                valid = labels != IGNORE_INDEX
                loss = candidate_bce_loss(logits.squeeze(-1), labels, valid)
            else:
                targets = torch.tensor([train_targets[i] for i in chunk], dtype=torch.long)
                loss = F.cross_entropy(logits, targets)
            grads = compute_gradients(model, loss)
            state = optimizer_step(model, grads, state, lr_at(run.schedule, global_step),
                                   run.optimizer)
            epoch_losses.append(float(loss.detach()))

        metric = dev_metric()
        row = {
            "epoch": epoch,
            "train_loss": sum(epoch_losses) / len(epoch_losses),
            run.early_stopping_metric: metric,
        }
        history.append(row)
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= run.patience:
            break

    model.load_state_dict(best_params)
    if out_path is not None:
        save_checkpoint(out_path / "checkpoint-best.jmsc", model)
        with open(out_path / "finetune_history.jsonl", "w", encoding="utf-8") as fh:
            for row in history:
                fh.write(json.dumps(row) + "\n")
    return FinetuneResult(model=model, history=history, best_metric=best_metric,
                          best_epoch=best_epoch)
