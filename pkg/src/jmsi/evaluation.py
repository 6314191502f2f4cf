"""Ranking/classification metrics, significance testing, cascade re-ranking,
and the analytical inference-cost model.

Ranking metrics follow the usual definitions over the clean setting (queries
without any positive candidate are excluded): P@1 is the fraction of queries
whose top candidate is positive, AP averages precision at every positive
rank, RR is the reciprocal rank of the first positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .errors import DataError, UsageError
from .model import HeadKind, Model, MULTI_LABEL_HEADS, SINGLE_LABEL_HEADS, apply_head
from .packing import PackConfig, collate, pack_bundle
from .sampler import CandidateBundle
from .vocab import Vocab


@dataclass(frozen=True)
class RankingResult:
    """Candidate indices of one bundle ordered by descending score (ties keep
    ascending original index), with the scores aligned to that order."""

    bundle_id: int
    order: tuple[int, ...]
    scores: tuple[float, ...]


@dataclass(frozen=True)
class EvalReport:
    p_at_1: float
    map: float
    mrr: float
    n_queries: int
    label_accuracy: float | None = None


@dataclass(frozen=True)
class TTestResult:
    mean_difference: float
    t_statistic: float
    degrees_of_freedom: int
    significant_at_95: bool
    # All paired differences identical and zero: the statistic is undefined.
    degenerate: bool = False


@dataclass(frozen=True)
class CostReport:
    """Analytical inference-time ratios of one joint pass over k+1 slots
    versus k pairwise passes over 2 slots: attention cost is quadratic in
    length, embedding/feed-forward cost linear."""

    k: int
    quadratic_ratio: float
    linear_ratio: float


def _stable_desc_order(scores: Sequence[float]) -> list[int]:
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def score_bundles(
    model: Model,
    head: HeadKind,
    bundles: Sequence[CandidateBundle],
    cfg: PackConfig,
    vocab: Vocab,
    batch_size: int = 32,
) -> list[list[float]]:
    """Per-candidate scores for each bundle (padded slots dropped), computed
    with the model in eval mode."""
    head = HeadKind(head)
    if head not in MULTI_LABEL_HEADS:
        raise UsageError(f"ranking needs a per-candidate head, got {head.value}")
    out: list[list[float]] = []
    with torch.no_grad():
        for start in range(0, len(bundles), batch_size):
            chunk = bundles[start : start + batch_size]
            batch = collate([pack_bundle(b, cfg, vocab) for b in chunk])
            logits = apply_head(model, head, model.forward_batch(batch)).squeeze(-1)
            for row, bundle in zip(logits, chunk):
                out.append([float(x) for x in row[: len(bundle.candidates)]])
    return out


def rank_bundle(
    model: Model,
    head: HeadKind,
    bundle: CandidateBundle,
    cfg: PackConfig,
    vocab: Vocab,
) -> RankingResult:
    """Score one bundle and order its candidates by descending score with
    stable ties."""
    if not bundle.candidates:
        raise DataError(f"bundle {bundle.bundle_id} has no candidates")
    scores = score_bundles(model, head, [bundle], cfg, vocab)[0]
    order = _stable_desc_order(scores)
    return RankingResult(
        bundle_id=bundle.bundle_id,
        order=tuple(order),
        scores=tuple(scores[i] for i in order),
    )


def classify_bundles(
    model: Model,
    head: HeadKind,
    bundles: Sequence[CandidateBundle],
    cfg: PackConfig,
    vocab: Vocab,
    batch_size: int = 32,
) -> list[int]:
    """Predicted class index per bundle from a single-label head."""
    head = HeadKind(head)
    if head not in SINGLE_LABEL_HEADS:
        raise UsageError(f"classification needs a single-label head, got {head.value}")
    preds: list[int] = []
    with torch.no_grad():
        for start in range(0, len(bundles), batch_size):
            chunk = bundles[start : start + batch_size]
            batch = collate([pack_bundle(b, cfg, vocab) for b in chunk])
            logits = apply_head(model, head, model.forward_batch(batch))
            preds.extend(int(i) for i in logits.argmax(dim=-1))
    return preds


def compute_ranking_metrics(
    results: Sequence[tuple[RankingResult, Sequence[int]]],
) -> EvalReport:
    """Aggregate P@1 / MAP / MRR over (ranking, gold labels) pairs; queries
    with no positive candidate are excluded."""
    p1_sum = 0.0
    ap_sum = 0.0
    rr_sum = 0.0
    n = 0
    for result, gold in results:
        if sorted(result.order) != list(range(len(gold))):
            raise DataError(f"bundle {result.bundle_id}: order is not a permutation of gold labels")
        if not any(gold):
            continue
        n += 1
        ranked = [gold[i] for i in result.order]
        p1_sum += ranked[0]
        precisions = []
        hits = 0
        first_hit = None
        for rank, g in enumerate(ranked, start=1):
            if g:
                hits += 1
                precisions.append(hits / rank)
                if first_hit is None:
                    first_hit = rank
        ap_sum += sum(precisions) / len(precisions)
        rr_sum += 1.0 / first_hit
    if n == 0:
        raise DataError("no queries with at least one positive candidate")
    return EvalReport(p_at_1=p1_sum / n, map=ap_sum / n, mrr=rr_sum / n, n_queries=n)


def evaluate_ranking(
    model: Model,
    head: HeadKind,
    bundles: Sequence[CandidateBundle],
    cfg: PackConfig,
    vocab: Vocab,
    batch_size: int = 32,
) -> EvalReport:
    """Rank every bundle and aggregate the metrics."""
    scored = score_bundles(model, head, bundles, cfg, vocab, batch_size=batch_size)
    pairs = []
    for bundle, scores in zip(bundles, scored):
        if bundle.gold is None:
            raise DataError(f"bundle {bundle.bundle_id} has no gold labels")
        order = _stable_desc_order(scores)
        result = RankingResult(
            bundle_id=bundle.bundle_id,
            order=tuple(order),
            scores=tuple(scores[i] for i in order),
        )
        pairs.append((result, bundle.gold))
    return compute_ranking_metrics(pairs)


def label_accuracy(predictions: Sequence, golds: Sequence) -> float:
    """Exact-match fraction."""
    if len(predictions) != len(golds):
        raise DataError(f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds")
    if not predictions:
        raise DataError("empty prediction set")
    return sum(p == g for p, g in zip(predictions, golds)) / len(predictions)


# Two-sided 95% critical values of Student's t, indexed by degrees of
# freedom; beyond 30 the normal approximation 1.960 is used.
_T_CRITICAL_95 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571,
    6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228,
    11: 2.201, 12: 2.179, 13: 2.160, 14: 2.145, 15: 2.131,
    16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093, 20: 2.086,
    21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
    26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045, 30: 2.042,
}


def paired_t_test(runs_a: Sequence[float], runs_b: Sequence[float]) -> TTestResult:
    """Two-sided paired Student t-test at the 95% level.

    Identical samples yield a degenerate (not significant) result; constant
    nonzero differences yield an infinite statistic, which is significant.
    """
    if len(runs_a) != len(runs_b):
        raise DataError("paired samples must have equal length")
    n = len(runs_a)
    if n < 2:
        raise DataError(f"need at least 2 paired samples, got {n}")
    diffs = [a - b for a, b in zip(runs_a, runs_b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    dof = n - 1
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 0.0, dof, significant_at_95=False, degenerate=True)
        t = math.inf if mean > 0 else -math.inf
    else:
        t = mean / math.sqrt(var / n)
    critical = _T_CRITICAL_95.get(dof, 1.960)
    return TTestResult(mean, t, dof, significant_at_95=abs(t) > critical)


def cascade_rerank(
    model: Model,
    head: HeadKind,
    bundle: CandidateBundle,
    k: int,
    cfg: PackConfig,
    vocab: Vocab,
) -> RankingResult:
    """Re-rank only the top-k candidates by external score with the joint
    model; the remaining candidates follow in external order.

    The returned scores are positional (length-n descending), since joint
    logits and external scores are not on a common scale.
    """
    n = len(bundle.candidates)
    if n == 0:
        raise DataError(f"bundle {bundle.bundle_id} has no candidates")
    if bundle.external_scores is None or len(bundle.external_scores) != n:
        raise DataError(f"bundle {bundle.bundle_id} lacks aligned external scores")
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    external_order = _stable_desc_order(bundle.external_scores)
    top = external_order[:k]
    rest = external_order[k:]
    sub = CandidateBundle(
        bundle_id=bundle.bundle_id,
        query=bundle.query,
        candidates=tuple(bundle.candidates[i] for i in top),
        gold=tuple(bundle.gold[i] for i in top) if bundle.gold is not None else None,
        label=bundle.label,
    )
    sub_result = rank_bundle(model, head, sub, cfg, vocab)
    order = [top[j] for j in sub_result.order] + rest
    return RankingResult(
        bundle_id=bundle.bundle_id,
        order=tuple(order),
        scores=tuple(float(n - pos) for pos in range(n)),
    )


def latency_ratio(k: int) -> CostReport:
    """Inference-time ratios of the joint model to k pairwise passes."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    return CostReport(
        k=k,
        quadratic_ratio=(k + 1) ** 2 / (4 * k),
        linear_ratio=(k + 1) / (2 * k),
    )


# ---------------------------------------------------------------------------
# Score files and report output

def read_score_file(path: str | Path) -> dict[int, dict[int, float]]:
    """TSV rows ``bundle_id<TAB>candidate_index<TAB>score``."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing score file: {p}")
    scores: dict[int, dict[int, float]] = {}
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{p}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                bundle_id, index, score = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
            scores.setdefault(bundle_id, {})[index] = score
    return scores


def write_score_file(results: Sequence[RankingResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            for index, score in zip(result.order, result.scores):
                fh.write(f"{result.bundle_id}\t{index}\t{score:.6g}\n")


def attach_external_scores(
    bundles: Sequence[CandidateBundle], scores: dict[int, dict[int, float]]
) -> list[CandidateBundle]:
    """Return bundles with external per-candidate scores filled in."""
    out = []
    for bundle in bundles:
        per = scores.get(bundle.bundle_id)
        if per is None:
            raise DataError(f"no external scores for bundle {bundle.bundle_id}")
        try:
            row = tuple(per[i] for i in range(len(bundle.candidates)))
        except KeyError as exc:
            raise DataError(
                f"bundle {bundle.bundle_id}: missing external score for candidate {exc}"
            ) from exc
        out.append(
            CandidateBundle(
                bundle_id=bundle.bundle_id,
                query=bundle.query,
                candidates=bundle.candidates,
                gold=bundle.gold,
                label=bundle.label,
                external_scores=row,
            )
        )
    return out


def eval_report_to_dict(report: EvalReport) -> dict:
    d = {
        "p_at_1": report.p_at_1,
        "map": report.map,
        "mrr": report.mrr,
        "n_queries": report.n_queries,
    }
    if report.label_accuracy is not None:
        d["label_accuracy"] = report.label_accuracy
    return d


def format_eval_table(report: EvalReport) -> str:
    """Aligned two-column text table of the report."""
    rows = [("queries", str(report.n_queries)),
            ("P@1", f"{report.p_at_1:.4f}"),
            ("MAP", f"{report.map:.4f}"),
            ("MRR", f"{report.mrr:.4f}")]
    if report.label_accuracy is not None:
        rows.append(("LA", f"{report.label_accuracy:.4f}"))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def save_eval_report(report: EvalReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval_report.json", "w", encoding="utf-8") as fh:
        json.dump(eval_report_to_dict(report), fh, indent=2)
        fh.write("\n")
    with open(out / "eval_report.txt", "w", encoding="utf-8") as fh:
        fh.write(format_eval_table(report) + "\n")
