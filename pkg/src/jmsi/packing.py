"""Flat joint-encoder input layout: k+1 fixed-length sentence slots.

Slot 0 holds the query/claim/anchor, slots 1..k the candidates. Every slot
is CLS + content (truncated to slot_len-2) + SEP + PAD, with one token-type
id per slot and running position ids over the whole input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, UsageError
from .sampler import CandidateBundle, IGNORE_INDEX
from .vocab import CLS_ID, PAD_ID, SEP_ID, Vocab, encode

SHARD_MAGIC = b"JMSI"
SHARD_VERSION = 1


@dataclass(frozen=True)
class PackConfig:
    """slot_len tokens per sentence slot, k candidate slots per input."""

    slot_len: int = 64
    k: int = 5

    def __post_init__(self):
        if self.slot_len < 2:
            raise UsageError(f"slot_len must be >= 2, got {self.slot_len}")
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")

    @property
    def total_len(self) -> int:
        return self.slot_len * (self.k + 1)

    @property
    def slot_starts(self) -> tuple[int, ...]:
        return tuple(i * self.slot_len for i in range(self.k + 1))


@dataclass(frozen=True, eq=False)
class PackedInput:
    """One packed example: int64 arrays of length cfg.total_len, plus
    per-candidate labels of length cfg.k (IGNORE_INDEX marks padded slots)."""

    cfg: PackConfig
    token_ids: np.ndarray
    type_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray
    mlm_labels: np.ndarray
    labels: np.ndarray

    @property
    def slot_starts(self) -> tuple[int, ...]:
        return self.cfg.slot_starts

    @property
    def valid_candidates(self) -> np.ndarray:
        return self.labels != IGNORE_INDEX


@dataclass(frozen=True, eq=False)
class PackedBatch:
    """Stacked PackedInput fields with a leading batch dimension."""

    cfg: PackConfig
    token_ids: np.ndarray
    type_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray
    mlm_labels: np.ndarray
    labels: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def slot_starts(self) -> tuple[int, ...]:
        return self.cfg.slot_starts


def pack_example(
    slot_token_ids: Sequence[Sequence[int]],
    cfg: PackConfig,
    labels: Sequence[int] | None = None,
) -> PackedInput:
    """Lay out k+1 token sequences into the flat slot format.

    ``labels`` are optional per-candidate targets (length k); padded or
    unlabeled slots carry IGNORE_INDEX.
    """
    if len(slot_token_ids) != cfg.k + 1:
        raise UsageError(f"expected {cfg.k + 1} slots, got {len(slot_token_ids)}")
    total = cfg.total_len
    token_ids = np.full(total, PAD_ID, dtype=np.int64)
    type_ids = np.zeros(total, dtype=np.int64)
    position_ids = np.arange(total, dtype=np.int64)
    attention_mask = np.zeros(total, dtype=np.int64)

    budget = cfg.slot_len - 2
    for i, content in enumerate(slot_token_ids):
        start = i * cfg.slot_len
        kept = list(content)[:budget]
        row = [CLS_ID] + kept + [SEP_ID]
        token_ids[start : start + len(row)] = row
        attention_mask[start : start + len(row)] = 1
        type_ids[start : start + cfg.slot_len] = i

    label_row = np.full(cfg.k, IGNORE_INDEX, dtype=np.int64)
    if labels is not None:
        if len(labels) > cfg.k:
            raise UsageError(f"got {len(labels)} labels for k={cfg.k}")
        label_row[: len(labels)] = labels

    return PackedInput(
        cfg=cfg,
        token_ids=token_ids,
        type_ids=type_ids,
        position_ids=position_ids,
        attention_mask=attention_mask,
        mlm_labels=np.full(total, IGNORE_INDEX, dtype=np.int64),
        labels=label_row,
    )


def pack_bundle(bundle: CandidateBundle, cfg: PackConfig, vocab: Vocab) -> PackedInput:
    """Encode and pack a fine-tuning bundle; missing candidate slots are
    packed empty (CLS+SEP only) and labeled IGNORE_INDEX."""
    if len(bundle.candidates) > cfg.k:
        raise UsageError(f"bundle has {len(bundle.candidates)} candidates but k={cfg.k}")
    slots = [encode(vocab, bundle.query)]
    for text in bundle.candidates:
        slots.append(encode(vocab, text))
    while len(slots) < cfg.k + 1:
        slots.append([])
    labels = list(bundle.gold) if bundle.gold is not None else [IGNORE_INDEX] * len(bundle.candidates)
    return pack_example(slots, cfg, labels=labels)


def with_masking(packed: PackedInput, input_ids: np.ndarray, mlm_labels: np.ndarray) -> PackedInput:
    """Return a copy of ``packed`` with masked token ids and MLM targets."""
    return replace(packed, token_ids=np.asarray(input_ids, dtype=np.int64),
                   mlm_labels=np.asarray(mlm_labels, dtype=np.int64))


def unpack_slot(packed: PackedInput, slot: int) -> list[int]:
    """Recover the content token ids of a slot (between its CLS and SEP)."""
    start = packed.slot_starts[slot]
    segment = packed.token_ids[start : start + packed.cfg.slot_len]
    sep_pos = np.nonzero(segment == SEP_ID)[0]
    end = int(sep_pos[0]) if len(sep_pos) else len(segment)
    return [int(t) for t in segment[1:end]]


def collate(examples: Sequence[PackedInput]) -> PackedBatch:
    """Order-preserving stack of identically configured packed inputs."""
    if not examples:
        raise UsageError("cannot collate an empty collection")
    cfg = examples[0].cfg
    for ex in examples[1:]:
        if ex.cfg != cfg:
            raise UsageError(f"mixed pack configs: {ex.cfg} vs {cfg}")
    return PackedBatch(
        cfg=cfg,
        token_ids=np.stack([e.token_ids for e in examples]),
        type_ids=np.stack([e.type_ids for e in examples]),
        position_ids=np.stack([e.position_ids for e in examples]),
        attention_mask=np.stack([e.attention_mask for e in examples]),
        mlm_labels=np.stack([e.mlm_labels for e in examples]),
        labels=np.stack([e.labels for e in examples]),
    )


_FIELDS = ("token_ids", "type_ids", "position_ids", "attention_mask", "mlm_labels", "labels")


def write_packed_shard(examples: Sequence[PackedInput], path: str | Path) -> None:
    """Binary shard: header (magic, version, slot_len, k, count) then per
    record the six u32 little-endian arrays in fixed field order."""
    if not examples:
        raise UsageError("cannot write an empty shard")
    cfg = examples[0].cfg
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC)
        fh.write(struct.pack("<IIIQ", SHARD_VERSION, cfg.slot_len, cfg.k, len(examples)))
        for ex in examples:
            if ex.cfg != cfg:
                raise UsageError("mixed pack configs in shard")
            for name in _FIELDS:
                arr = getattr(ex, name)
                fh.write(arr.astype("<u4").tobytes())


def read_packed_shard(path: str | Path) -> list[PackedInput]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing shard: {p}")
    data = p.read_bytes()
    if data[:4] != SHARD_MAGIC:
        raise DataError(f"{p}: bad magic, not a packed shard")
    version, slot_len, k, count = struct.unpack_from("<IIIQ", data, 4)
    if version != SHARD_VERSION:
        raise DataError(f"{p}: unsupported shard version {version}")
    cfg = PackConfig(slot_len=slot_len, k=k)
    total = cfg.total_len
    sizes = [total] * 5 + [k]
    offset = 4 + struct.calcsize("<IIIQ")
    record_bytes = sum(sizes) * 4
    if len(data) - offset != count * record_bytes:
        raise DataError(f"{p}: truncated shard")
    out = []
    for _ in range(count):
        arrays = {}
        for name, size in zip(_FIELDS, sizes):
            arr = np.frombuffer(data, dtype="<u4", count=size, offset=offset).astype(np.int64)
            arrays[name] = arr
            offset += size * 4
        out.append(PackedInput(cfg=cfg, **arrays))
    return out
