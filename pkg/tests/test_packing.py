"""Slot layout invariants, collation, and the binary shard format."""

import numpy as np
import pytest

from jmsi.errors import DataError, UsageError
from jmsi.corpus import Corpus
from jmsi.packing import (
    PackConfig,
    collate,
    pack_bundle,
    pack_example,
    read_packed_shard,
    unpack_slot,
    write_packed_shard,
)
from jmsi.sampler import CandidateBundle, IGNORE_INDEX
from jmsi.vocab import CLS_ID, PAD_ID, SEP_ID, build_vocab, decode, encode


class TestPackExample:
    def test_hand_layout(self):
        # slot_len=4, k=1, one content token per slot.
        cfg = PackConfig(slot_len=4, k=1)
        packed = pack_example([[7], [9]], cfg)
        assert packed.token_ids.tolist() == [CLS_ID, 7, SEP_ID, PAD_ID, CLS_ID, 9, SEP_ID, PAD_ID]
        assert packed.type_ids.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
        assert packed.position_ids.tolist() == list(range(8))
        assert packed.attention_mask.tolist() == [1, 1, 1, 0, 1, 1, 1, 0]
        assert packed.slot_starts == (0, 4)

    def test_truncation_keeps_budget(self):
        cfg = PackConfig(slot_len=64, k=1)
        packed = pack_example([list(range(5, 105)), [5]], cfg)
        content = unpack_slot(packed, 0)
        assert len(content) == 62
        assert content == list(range(5, 67))

    def test_default_config_total_length(self):
        assert PackConfig(slot_len=64, k=5).total_len == 384
        packed = pack_example([[5]] * 6, PackConfig(slot_len=64, k=5))
        assert len(packed.token_ids) == 384

    def test_wrong_slot_count(self):
        with pytest.raises(UsageError, match="slots"):
            pack_example([[5]], PackConfig(slot_len=4, k=1))

    def test_labels_carried_with_padding(self):
        cfg = PackConfig(slot_len=4, k=3)
        packed = pack_example([[5], [6], [7], []], cfg, labels=[1, 0])
        assert packed.labels.tolist() == [1, 0, IGNORE_INDEX]
        assert packed.valid_candidates.tolist() == [True, True, False]

    def test_invariants_random_cases(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            slot_len = int(rng.integers(2, 20))
            k = int(rng.integers(1, 7))
            cfg = PackConfig(slot_len=slot_len, k=k)
            slots = [
                list(rng.integers(5, 300, size=rng.integers(0, 2 * slot_len)))
                for _ in range(k + 1)
            ]
            packed = pack_example(slots, cfg)
            assert packed.position_ids.tolist() == list(range(cfg.total_len))
            for i in range(k + 1):
                start = i * slot_len
                assert packed.token_ids[start] == CLS_ID
                assert (packed.type_ids[start : start + slot_len] == i).all()
                assert unpack_slot(packed, i) == [int(t) for t in slots[i][: slot_len - 2]]
            assert np.array_equal(packed.attention_mask == 1, packed.token_ids != PAD_ID)
            # Mask is non-increasing inside each slot: content then padding.
            for i in range(k + 1):
                seg = packed.attention_mask[i * slot_len : (i + 1) * slot_len]
                assert (np.diff(seg) <= 0).all()

    def test_text_round_trip(self):
        corpus = Corpus.from_texts([[["alpha beta gamma delta"]]])
        vocab = build_vocab(corpus, max_size=32)
        cfg = PackConfig(slot_len=8, k=1)
        text = "beta gamma alpha"
        packed = pack_example([encode(vocab, text), encode(vocab, "delta")], cfg)
        assert decode(vocab, unpack_slot(packed, 0)) == text


class TestCollate:
    def test_identical_rows(self):
        cfg = PackConfig(slot_len=4, k=1)
        one = pack_example([[5], [6]], cfg)
        batch = collate([one, one, one])
        assert batch.batch_size == 3
        assert (batch.token_ids[0] == batch.token_ids[2]).all()

    def test_single_input_row_equal(self):
        cfg = PackConfig(slot_len=4, k=1)
        one = pack_example([[5], [6]], cfg)
        batch = collate([one])
        assert batch.batch_size == 1
        assert np.array_equal(batch.token_ids[0], one.token_ids)

    def test_mixed_configs_rejected(self):
        a = pack_example([[5], [6]], PackConfig(slot_len=4, k=1))
        b = pack_example([[5], [6]], PackConfig(slot_len=6, k=1))
        with pytest.raises(UsageError, match="mixed"):
            collate([a, b])

    def test_empty_rejected(self):
        with pytest.raises(UsageError):
            collate([])


class TestPackedShard:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        cfg = PackConfig(slot_len=6, k=2)
        examples = [
            pack_example(
                [list(rng.integers(5, 50, size=3)) for _ in range(3)],
                cfg,
                labels=[int(rng.integers(0, 2)), int(rng.integers(0, 2))],
            )
            for _ in range(4)
        ]
        path = tmp_path / "shard.bin"
        write_packed_shard(examples, path)
        back = read_packed_shard(path)
        assert len(back) == 4
        for a, b in zip(examples, back):
            for name in ("token_ids", "type_ids", "position_ids",
                         "attention_mask", "mlm_labels", "labels"):
                assert np.array_equal(getattr(a, name), getattr(b, name)), name

    def test_write_is_byte_stable(self, tmp_path):
        cfg = PackConfig(slot_len=4, k=1)
        examples = [pack_example([[5], [6]], cfg, labels=[1])]
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        write_packed_shard(examples, p1)
        write_packed_shard(read_packed_shard(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(DataError, match="magic"):
            read_packed_shard(path)

    def test_header_fields(self, tmp_path):
        cfg = PackConfig(slot_len=4, k=1)
        path = tmp_path / "shard.bin"
        write_packed_shard([pack_example([[5], [6]], cfg)], path)
        raw = path.read_bytes()
        assert raw[:4] == b"JMSI"
        import struct
        version, slot_len, k, count = struct.unpack_from("<IIIQ", raw, 4)
        assert (version, slot_len, k, count) == (1, 4, 1, 1)


class TestPackBundle:
    def test_padded_slots_ignored(self):
        corpus = Corpus.from_texts([[["alpha beta gamma"]]])
        vocab = build_vocab(corpus, max_size=32)
        bundle = CandidateBundle(bundle_id=0, query="alpha", candidates=("beta", "gamma"),
                                 gold=(1, 0))
        cfg = PackConfig(slot_len=4, k=5)
        packed = pack_bundle(bundle, cfg, vocab)
        assert packed.labels.tolist() == [1, 0] + [IGNORE_INDEX] * 3
        # Empty slots are still CLS+SEP so every slot has an embedding anchor.
        for i in range(3, 6):
            start = packed.slot_starts[i]
            assert packed.token_ids[start] == CLS_ID
            assert packed.token_ids[start + 1] == SEP_ID

    def test_too_many_candidates(self):
        corpus = Corpus.from_texts([[["alpha beta"]]])
        vocab = build_vocab(corpus, max_size=32)
        bundle = CandidateBundle(bundle_id=0, query="alpha", candidates=("b",) * 3,
                                 gold=(0,) * 3)
        with pytest.raises(UsageError):
            pack_bundle(bundle, PackConfig(slot_len=4, k=2), vocab)
