"""Document/paragraph/sentence corpus loading, segmentation, and synthesis.

A corpus is a list of documents, each a list of paragraphs, each a list of
sentences, with dense 0-based ids at every level. This hierarchy is the
sampling universe for the same-paragraph pre-training task.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, UsageError

_TERMINALS = ".!?"
_MIN_SEGMENT_CHARS = 3


@dataclass(frozen=True)
class Sentence:
    """One sentence with its provenance triple (doc_id, para_id, sent_id)."""

    text: str
    doc_id: int
    para_id: int
    sent_id: int


@dataclass(frozen=True)
class Paragraph:
    para_id: int
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class Document:
    doc_id: int
    paragraphs: tuple[Paragraph, ...]


@dataclass(frozen=True)
class CorpusStats:
    num_documents: int
    num_paragraphs: int
    num_sentences: int
    # Sentences whose paragraph has >= 2 sentences and whose document has
    # >= 2 paragraphs; the natural anchor pool for (k1, k2) >= (1, 1).
    num_eligible_anchors: int


class Corpus:
    """Immutable document collection with dense ids and flat sentence index.

    Construct via :meth:`from_texts` (assigns dense ids) or pass pre-built
    documents, which are validated for density and non-emptiness.
    """

    def __init__(self, documents: Sequence[Document]):
        for d, doc in enumerate(documents):
            if doc.doc_id != d:
                raise DataError(f"document ids not dense: expected {d}, got {doc.doc_id}")
            if not doc.paragraphs:
                raise DataError(f"document {d} has no paragraphs")
            for p, para in enumerate(doc.paragraphs):
                if para.para_id != p:
                    raise DataError(f"paragraph ids not dense in document {d}")
                if not para.sentences:
                    raise DataError(f"paragraph {p} of document {d} has no sentences")
                for s, sent in enumerate(para.sentences):
                    if (sent.doc_id, sent.para_id, sent.sent_id) != (d, p, s):
                        raise DataError(f"sentence ids inconsistent at ({d}, {p}, {s})")
                    if not sent.text.strip():
                        raise DataError(f"empty sentence at ({d}, {p}, {s})")
        self.documents: tuple[Document, ...] = tuple(documents)
        self.all_sentences: tuple[Sentence, ...] = tuple(
            s for doc in self.documents for para in doc.paragraphs for s in para.sentences
        )
        self._doc_sentence_counts = [
            sum(len(p.sentences) for p in doc.paragraphs) for doc in self.documents
        ]
        # Start offset of each document/paragraph in the flat sentence index;
        # lets the sampler draw negatives without materializing pools.
        self._doc_offsets: list[int] = []
        self._para_offsets: dict[tuple[int, int], int] = {}
        offset = 0
        for doc in self.documents:
            self._doc_offsets.append(offset)
            for para in doc.paragraphs:
                self._para_offsets[(doc.doc_id, para.para_id)] = offset
                offset += len(para.sentences)

    @classmethod
    def from_texts(cls, docs: Iterable[Iterable[Iterable[str]]]) -> "Corpus":
        """Build a corpus from nested sentence texts, assigning dense ids."""
        documents = []
        for d, paras in enumerate(docs):
            paragraphs = []
            for p, sents in enumerate(paras):
                sentences = tuple(
                    Sentence(text=t, doc_id=d, para_id=p, sent_id=s)
                    for s, t in enumerate(sents)
                )
                paragraphs.append(Paragraph(para_id=p, sentences=sentences))
            documents.append(Document(doc_id=d, paragraphs=tuple(paragraphs)))
        return cls(documents)

    @property
    def num_documents(self) -> int:
        return len(self.documents)

    @property
    def num_paragraphs(self) -> int:
        return sum(len(d.paragraphs) for d in self.documents)

    @property
    def num_sentences(self) -> int:
        return len(self.all_sentences)

    def paragraphs_in_document(self, doc_id: int) -> tuple[Paragraph, ...]:
        return self.documents[doc_id].paragraphs

    def sentences_in_paragraph(self, doc_id: int, para_id: int) -> tuple[Sentence, ...]:
        return self.documents[doc_id].paragraphs[para_id].sentences

    def doc_sentence_count(self, doc_id: int) -> int:
        return self._doc_sentence_counts[doc_id]

    def doc_offset(self, doc_id: int) -> int:
        return self._doc_offsets[doc_id]

    def para_offset(self, doc_id: int, para_id: int) -> int:
        return self._para_offsets[(doc_id, para_id)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.documents == other.documents

    __hash__ = None  # mutable-looking container semantics; not hashable

    def __repr__(self) -> str:
        return (
            f"Corpus(documents={self.num_documents}, paragraphs={self.num_paragraphs}, "
            f"sentences={self.num_sentences})"
        )


def split_paragraph_into_sentences(text: str) -> list[str]:
    """Split text at '.', '!' or '?' followed by whitespace then an uppercase
    letter, or at end of text. Delimiters stay with the left segment; segments
    shorter than 3 characters are merged with a neighbour; never returns
    empty strings.
    """
    raw: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in _TERMINALS:
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j >= n or (j > i + 1 and text[j].isupper()):
                seg = text[start : i + 1].strip()
                if seg:
                    raw.append(seg)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        raw.append(tail)

    merged: list[str] = []
    carry = ""
    for seg in raw:
        if carry:
            seg = carry + " " + seg
            carry = ""
        if len(seg) < _MIN_SEGMENT_CHARS:
            if merged:
                merged[-1] = merged[-1] + " " + seg
            else:
                carry = seg  # no previous segment yet; attach to the next one
        else:
            merged.append(seg)
    if carry:
        if merged:
            merged[-1] = merged[-1] + " " + carry
        else:
            merged.append(carry)  # entire text shorter than the threshold
    return merged


def ingest_corpus(path: str | Path, format: str) -> Corpus:
    """Load a corpus from disk.

    ``jsonl-docs``: one document per line,
    ``{"doc_id": optional int, "paragraphs": [["sentence", ...], ...]}``.
    A present doc_id must match the record's position (ids are dense).

    ``plaintext-dir``: a directory of text files (or a single file), one
    document per file in sorted name order; paragraphs are blank-line
    separated; sentences come from :func:`split_paragraph_into_sentences`.
    """
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing path: {p}")
    if format == "jsonl-docs":
        docs = _read_jsonl_docs(p)
    elif format == "plaintext-dir":
        docs = _read_plaintext(p)
    else:
        raise UsageError(f"unknown corpus format: {format!r}")
    if not docs:
        raise DataError("empty corpus")
    return Corpus.from_texts(docs)


def _read_jsonl_docs(path: Path) -> list[list[list[str]]]:
    docs: list[list[list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed record at line {lineno}: {exc}") from exc
            if not isinstance(record, dict) or "paragraphs" not in record:
                raise DataError(f"malformed record at line {lineno}: expected object with 'paragraphs'")
            stated = record.get("doc_id")
            if stated is not None and stated != len(docs):
                raise DataError(
                    f"malformed record at line {lineno}: doc_id {stated} breaks dense "
                    f"ordering (expected {len(docs)})"
                )
            paragraphs = record["paragraphs"]
            if not isinstance(paragraphs, list) or not paragraphs:
                raise DataError(f"malformed record at line {lineno}: 'paragraphs' must be a non-empty list")
            doc: list[list[str]] = []
            for para in paragraphs:
                if not isinstance(para, list) or not para:
                    raise DataError(f"malformed record at line {lineno}: each paragraph must be a non-empty list")
                sents = []
                for sent in para:
                    if not isinstance(sent, str) or not sent.strip():
                        raise DataError(f"malformed record at line {lineno}: sentences must be non-empty strings")
                    sents.append(sent)
                doc.append(sents)
            docs.append(doc)
    return docs


def _read_plaintext(path: Path) -> list[list[list[str]]]:
    files = sorted(f for f in path.iterdir() if f.is_file()) if path.is_dir() else [path]
    docs = []
    for f in files:
        text = f.read_text(encoding="utf-8")
        doc = []
        for block in text.split("\n\n"):
            sentences = split_paragraph_into_sentences(block)
            if sentences:
                doc.append(sentences)
        if doc:
            docs.append(doc)
    return docs


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical jsonl-docs form: UTF-8, one line per document,
    keys in the order doc_id, paragraphs. ``ingest_corpus`` round-trips it.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            record = {
                "doc_id": doc.doc_id,
                "paragraphs": [[s.text for s in p.sentences] for p in doc.paragraphs],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def corpus_stats(corpus: Corpus) -> CorpusStats:
    eligible = 0
    for doc in corpus.documents:
        if len(doc.paragraphs) < 2:
            continue
        for para in doc.paragraphs:
            if len(para.sentences) >= 2:
                eligible += len(para.sentences)
    return CorpusStats(
        num_documents=corpus.num_documents,
        num_paragraphs=corpus.num_paragraphs,
        num_sentences=corpus.num_sentences,
        num_eligible_anchors=eligible,
    )


NUM_FILLER_WORDS = 64


def topic_word(i: int) -> str:
    return f"topic{i:03d}"


def filler_word(i: int) -> str:
    return f"filler{i:02d}"


def generate_synthetic_corpus(
    seed: int,
    n_docs: int,
    paras_per_doc: int,
    sents_per_para: int,
    topic_vocab_size: int,
) -> Corpus:
    """Generate a corpus in which every paragraph carries a latent topic word.

    Each sentence of a paragraph contains that paragraph's topic word plus
    random filler words, so same-paragraph membership is detectable from
    lexical overlap. Deterministic given the seed.
    """
    for name, value in [
        ("n_docs", n_docs),
        ("paras_per_doc", paras_per_doc),
        ("sents_per_para", sents_per_para),
        ("topic_vocab_size", topic_vocab_size),
    ]:
        if value < 1:
            raise UsageError(f"{name} must be >= 1, got {value}")
    rng = random.Random(seed)
    fillers = [filler_word(i) for i in range(NUM_FILLER_WORDS)]
    docs = []
    for _ in range(n_docs):
        doc = []
        for _ in range(paras_per_doc):
            topic = topic_word(rng.randrange(topic_vocab_size))
            para = []
            for _ in range(sents_per_para):
                n_fill = rng.randint(3, 6)
                words = [rng.choice(fillers) for _ in range(n_fill)]
                words.insert(rng.randint(0, n_fill), topic)
                para.append(" ".join(words))
            doc.append(para)
        docs.append(doc)
    return Corpus.from_texts(docs)
