"""Word-level vocabulary with the fixed reserved-id layout the packer needs.

Reserved ids are pinned so packed records are byte-stable across runs:
PAD=0, UNK=1, CLS=2, SEP=3, MASK=4. Encoding raw text never produces
PAD/CLS/SEP/MASK; those are inserted only by packing and masking.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .errors import DataError, UsageError

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
MASK_ID = 4
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
NUM_RESERVED = len(RESERVED_TOKENS)

# Lowercased word tokens: maximal runs of letters/digits; whitespace,
# punctuation and underscores delimit and are dropped.
_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocab":
        """Build a vocab from non-reserved tokens in id order (first id 5)."""
        id_to_token = RESERVED_TOKENS + tuple(tokens)
        token_to_id = {t: i + NUM_RESERVED for i, t in enumerate(tokens)}
        if len(token_to_id) != len(tokens):
            raise DataError("duplicate tokens in vocabulary")
        return cls(token_to_id=token_to_id, id_to_token=id_to_token)


def build_vocab(corpus: Corpus, max_size: int, min_freq: int = 1) -> Vocab:
    """Count lowercased word tokens over the corpus, rank by frequency then
    lexicographic order, and keep the top ``max_size - 5`` with frequency
    >= ``min_freq``.
    """
    if max_size < NUM_RESERVED + 1:
        raise UsageError(f"max_size must be >= {NUM_RESERVED + 1}, got {max_size}")
    counts: Counter[str] = Counter()
    for sentence in corpus.all_sentences:
        counts.update(tokenize(sentence.text))
    ranked = sorted(
        (t for t, c in counts.items() if c >= min_freq),
        key=lambda t: (-counts[t], t),
    )
    return Vocab.from_tokens(ranked[: max_size - NUM_RESERVED])


def encode(vocab: Vocab, text: str) -> list[int]:
    """Map text to token ids; out-of-vocabulary words become UNK. No special
    tokens are inserted."""
    return [vocab.token_to_id.get(t, UNK_ID) for t in tokenize(text)]


def decode(vocab: Vocab, ids: list[int]) -> str:
    """Space-join the tokens for ``ids``; reserved ids render as their
    bracketed names. Raises on out-of-range ids."""
    out = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise DataError(f"token id {i} out of range for vocab of size {vocab.size}")
        out.append(vocab.id_to_token[i])
    return " ".join(out)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    """One token per line; the first five lines are the reserved tokens."""
    with open(path, "w", encoding="utf-8") as fh:
        for token in vocab.id_to_token:
            fh.write(token + "\n")


def load_vocab(path: str | Path) -> Vocab:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing vocab file: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    if tuple(lines[:NUM_RESERVED]) != RESERVED_TOKENS:
        raise DataError(f"vocab file {p} does not start with the reserved tokens")
    return Vocab.from_tokens(lines[NUM_RESERVED:])
