"""Pre-training example sampling, MLM masking, and fine-tuning bundles.

The pre-training task asks, for each of k candidate sentences, whether it
comes from the same paragraph as an anchor sentence. Candidates are drawn
from three pools: the anchor's paragraph (positives), other paragraphs of
the anchor's document (hard negatives), and other documents (easy
negatives).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, Sentence, filler_word, topic_word, NUM_FILLER_WORDS
from .errors import DataError, UsageError
from .vocab import NUM_RESERVED, MASK_ID, Vocab

# Sentinel for positions that carry no MLM target. Chosen to fit the u32
# on-disk record format.
IGNORE_INDEX = 0xFFFF_FFFF

VERIFICATION_LABELS = ("SUPPORTS", "REFUTES", "NOT ENOUGH INFO")

_MASK64 = 0xFFFF_FFFF_FFFF_FFFF


def mix_seed(*parts: int) -> int:
    """Deterministically mix integers into a 64-bit seed (splitmix-style)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK64)) * 0xBF58476D1CE4E5B9 & _MASK64
        h = (h ^ (h >> 31)) * 0x94D049BB133111EB & _MASK64
    return (h ^ (h >> 29)) & _MASK64


@dataclass(frozen=True)
class SamplerConfig:
    """Candidate pool sizes: k1 same-paragraph positives, k2 same-document
    hard negatives, k3 cross-document easy negatives."""

    k1: int = 1
    k2: int = 2
    k3: int = 2
    shuffle_candidates: bool = True

    def __post_init__(self):
        if self.k1 < 1:
            raise UsageError(f"k1 must be >= 1, got {self.k1}")
        if self.k2 < 0 or self.k3 < 0:
            raise UsageError("k2 and k3 must be >= 0")

    @property
    def k(self) -> int:
        return self.k1 + self.k2 + self.k3


@dataclass(frozen=True)
class AnchorExample:
    """An anchor sentence plus k candidates with same-paragraph labels."""

    anchor: Sentence
    candidates: tuple[Sentence, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.candidates) != len(self.labels):
            raise DataError("candidates and labels must have the same length")


@dataclass(frozen=True)
class MaskedSequence:
    """Token ids after masking plus aligned MLM targets (IGNORE_INDEX where
    no prediction is asked)."""

    input_ids: np.ndarray
    mlm_labels: np.ndarray


@dataclass(frozen=True)
class CandidateBundle:
    """A query (question or claim) with up to k candidate texts.

    Ranking bundles carry per-candidate binary ``gold`` labels; verification
    bundles carry a single class ``label``. Exactly one of the two is set.
    """

    bundle_id: int
    query: str
    candidates: tuple[str, ...]
    gold: tuple[int, ...] | None = None
    label: str | None = None
    # External per-candidate scores (e.g. from an upstream pairwise ranker);
    # only used by the cascade re-ranker.
    external_scores: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.gold is None) == (self.label is None):
            raise DataError("bundle must carry either per-candidate gold labels or one class label")
        if self.gold is not None and len(self.gold) != len(self.candidates):
            raise DataError("gold labels must align with candidates")
        if self.label is not None and self.label not in VERIFICATION_LABELS:
            raise DataError(f"unknown class label {self.label!r}")


def sample_anchor_example(corpus: Corpus, cfg: SamplerConfig, seed: int) -> AnchorExample:
    """Draw one pre-training example, deterministically for a given seed.

    The anchor is uniform over eligible sentences (paragraph large enough for
    k1 extra sentences, document with >= k2 sentences in other paragraphs,
    corpus with >= k3 sentences in other documents); each candidate pool is
    sampled uniformly without replacement.
    """
    rng = random.Random(seed)
    total = corpus.num_sentences

    spans: list[tuple[int, int, int]] = []  # (doc_id, para_id, n_sentences)
    eligible = 0
    for doc in corpus.documents:
        doc_count = corpus.doc_sentence_count(doc.doc_id)
        if total - doc_count < cfg.k3:
            continue
        for para in doc.paragraphs:
            n = len(para.sentences)
            if n >= cfg.k1 + 1 and doc_count - n >= cfg.k2:
                spans.append((doc.doc_id, para.para_id, n))
                eligible += n
    if eligible == 0:
        raise DataError(f"corpus too small for (k1,k2,k3)=({cfg.k1},{cfg.k2},{cfg.k3})")

    r = rng.randrange(eligible)
    for doc_id, para_id, n_para in spans:
        if r < n_para:
            break
        r -= n_para
    para_sents = corpus.sentences_in_paragraph(doc_id, para_id)
    anchor = para_sents[r]

    pos_idx = rng.sample(range(n_para - 1), cfg.k1)
    positives = [para_sents[i if i < r else i + 1] for i in pos_idx]

    doc_start = corpus.doc_offset(doc_id)
    doc_count = corpus.doc_sentence_count(doc_id)
    para_start = corpus.para_offset(doc_id, para_id)
    hard_idx = rng.sample(range(doc_count - n_para), cfg.k2)
    hard = [
        corpus.all_sentences[doc_start + i if doc_start + i < para_start else doc_start + i + n_para]
        for i in hard_idx
    ]

    easy_idx = rng.sample(range(total - doc_count), cfg.k3)
    easy = [
        corpus.all_sentences[i if i < doc_start else i + doc_count]
        for i in easy_idx
    ]

    candidates = positives + hard + easy
    if cfg.shuffle_candidates:
        rng.shuffle(candidates)
    labels = tuple(
        int(c.doc_id == anchor.doc_id and c.para_id == anchor.para_id) for c in candidates
    )
    return AnchorExample(anchor=anchor, candidates=tuple(candidates), labels=labels)


def apply_mlm_masking(
    ids: Sequence[int] | np.ndarray, vocab: Vocab, mask_prob: float, seed: int
) -> MaskedSequence:
    """BERT-style masking: select non-reserved positions with ``mask_prob``;
    of those, 80% become MASK, 10% a random non-reserved id, 10% stay. MLM
    labels hold the original id at every selected position."""
    ids = np.asarray(ids, dtype=np.int64)
    rng = np.random.default_rng(seed)
    out = ids.copy()
    labels = np.full_like(ids, IGNORE_INDEX)

    maskable = ids >= NUM_RESERVED
    selected = (rng.random(ids.shape) < mask_prob) & maskable
    branch = rng.random(ids.shape)
    if vocab.size > NUM_RESERVED:
        random_ids = rng.integers(NUM_RESERVED, vocab.size, size=ids.shape)
    else:
        random_ids = ids.copy()  # degenerate vocab: nothing to replace with

    labels[selected] = ids[selected]
    out[selected & (branch < 0.8)] = MASK_ID
    replace = selected & (branch >= 0.8) & (branch < 0.9)
    out[replace] = random_ids[replace]
    return MaskedSequence(input_ids=out, mlm_labels=labels)


# ---------------------------------------------------------------------------
# Fine-tuning datasets

BundleRecord = tuple[str, list[str], list[int] | None, str | None]


def read_as2_tsv(path: str | Path) -> list[BundleRecord]:
    """Read a ranking dataset: TSV rows ``question<TAB>candidate<TAB>label``
    with rows for one question contiguous."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing dataset: {p}")
    records: list[BundleRecord] = []
    current_query: str | None = None
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{p}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            query, candidate, label = parts
            if label not in ("0", "1"):
                raise DataError(f"{p}:{lineno}: label must be 0 or 1, got {label!r}")
            if query != current_query:
                records.append((query, [], [], None))
                current_query = query
            records[-1][1].append(candidate)
            records[-1][2].append(int(label))
    return records


def write_as2_tsv(records: Iterable[BundleRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query, candidates, gold, _ in records:
            for candidate, label in zip(candidates, gold):
                fh.write(f"{query}\t{candidate}\t{label}\n")


def read_verification_jsonl(path: str | Path) -> list[BundleRecord]:
    """Read a fact-verification dataset: JSONL records
    ``{"claim": str, "evidences": [str, ...], "label": <class>}``."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing dataset: {p}")
    records: list[BundleRecord] = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{p}:{lineno}: {exc}") from exc
            claim = rec.get("claim")
            evidences = rec.get("evidences")
            label = rec.get("label")
            if not isinstance(claim, str) or not isinstance(evidences, list):
                raise DataError(f"{p}:{lineno}: expected 'claim' string and 'evidences' list")
            if label not in VERIFICATION_LABELS:
                raise DataError(f"{p}:{lineno}: label must be one of {VERIFICATION_LABELS}, got {label!r}")
            if not all(isinstance(e, str) for e in evidences):
                raise DataError(f"{p}:{lineno}: evidences must be strings")
            records.append((claim, list(evidences), None, label))
    return records


def build_bundles(
    records: Iterable[BundleRecord], k: int, overflow_policy: str = "truncate"
) -> list[CandidateBundle]:
    """Group records into bundles of at most k candidates, in source order.

    ``truncate`` keeps the first k candidates of an oversized record;
    ``split`` emits multiple bundles sharing the query text. Records with
    zero candidates are dropped.
    """
    if overflow_policy not in ("truncate", "split"):
        raise UsageError(f"overflow_policy must be 'truncate' or 'split', got {overflow_policy!r}")
    bundles: list[CandidateBundle] = []
    for query, candidates, gold, label in records:
        if gold is not None and len(gold) != len(candidates):
            raise DataError(f"record {query!r}: gold labels do not align with candidates")
        if not candidates:
            continue
        if overflow_policy == "truncate":
            starts = [0]
        else:
            starts = list(range(0, len(candidates), k))
        for start in starts:
            chunk = tuple(candidates[start : start + k])
            bundles.append(
                CandidateBundle(
                    bundle_id=len(bundles),
                    query=query,
                    candidates=chunk,
                    gold=tuple(gold[start : start + k]) if gold is not None else None,
                    label=label,
                )
            )
    return bundles


# ---------------------------------------------------------------------------
# Anchor-example shards

def write_anchor_examples(examples: Iterable[AnchorExample], path: str | Path) -> None:
    """JSONL shard: sentence texts, provenance triples, and labels."""
    def sent_dict(s: Sentence) -> dict:
        return {"text": s.text, "doc_id": s.doc_id, "para_id": s.para_id, "sent_id": s.sent_id}

    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "anchor": sent_dict(ex.anchor),
                "candidates": [sent_dict(c) for c in ex.candidates],
                "labels": list(ex.labels),
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_anchor_examples(path: str | Path) -> list[AnchorExample]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing shard: {p}")

    def to_sent(d: dict) -> Sentence:
        return Sentence(text=d["text"], doc_id=d["doc_id"], para_id=d["para_id"], sent_id=d["sent_id"])

    examples = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                examples.append(
                    AnchorExample(
                        anchor=to_sent(rec["anchor"]),
                        candidates=tuple(to_sent(c) for c in rec["candidates"]),
                        labels=tuple(int(x) for x in rec["labels"]),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise DataError(f"{p}:{lineno}: malformed anchor example: {exc}") from exc
    return examples


# ---------------------------------------------------------------------------
# Synthetic fine-tuning task

def make_synthetic_as2_bundles(
    seed: int,
    n_queries: int,
    k: int,
    topic_vocab_size: int,
) -> list[CandidateBundle]:
    """Generate a ranking task over the synthetic-corpus vocabulary: the
    query names a topic word and exactly one candidate (the gold one)
    contains it; the other candidates carry different topics.

    Query texts get a unique ``q###`` suffix so that the contiguous-rows
    grouping of the TSV format cannot merge two queries that drew the same
    topic."""
    if k < 2:
        raise UsageError(f"k must be >= 2, got {k}")
    if topic_vocab_size < 2:
        raise UsageError("topic_vocab_size must be >= 2 to draw negatives")
    rng = random.Random(seed)
    fillers = [filler_word(i) for i in range(NUM_FILLER_WORDS)]

    def sentence_with(topic: str) -> str:
        n_fill = rng.randint(3, 6)
        words = [rng.choice(fillers) for _ in range(n_fill)]
        words.insert(rng.randint(0, n_fill), topic)
        return " ".join(words)

    bundles = []
    for q in range(n_queries):
        t = rng.randrange(topic_vocab_size)
        negatives = [i for i in range(topic_vocab_size) if i != t]
        candidates = [sentence_with(topic_word(t))]
        gold = [1]
        for _ in range(k - 1):
            candidates.append(sentence_with(topic_word(rng.choice(negatives))))
            gold.append(0)
        order = list(range(k))
        rng.shuffle(order)
        bundles.append(
            CandidateBundle(
                bundle_id=q,
                query=f"{topic_word(t)} q{q:03d}",
                candidates=tuple(candidates[i] for i in order),
                gold=tuple(gold[i] for i in order),
            )
        )
    return bundles
