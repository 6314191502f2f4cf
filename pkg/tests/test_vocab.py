"""Vocabulary building, encoding, decoding, and the reserved-id contract."""

import pytest
from hypothesis import given, strategies as st

from jmsi.corpus import Corpus
from jmsi.errors import DataError, UsageError
from jmsi.vocab import (
    CLS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    UNK_ID,
    build_vocab,
    decode,
    encode,
    load_vocab,
    save_vocab,
)


@pytest.fixture
def tiny_corpus():
    return Corpus.from_texts([[["a a b"]]])


class TestBuildVocab:
    def test_frequency_then_lexicographic_ranking(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8, min_freq=1)
        assert vocab.token_to_id == {"a": 5, "b": 6}

    def test_min_freq_excludes_rare_tokens(self, tiny_corpus):
        # 'a' occurs twice, 'b' once; tokens below min_freq are excluded.
        vocab = build_vocab(tiny_corpus, max_size=8, min_freq=2)
        assert vocab.token_to_id == {"a": 5}
        assert build_vocab(tiny_corpus, max_size=8, min_freq=3).token_to_id == {}

    def test_capacity_forcing(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=6, min_freq=1)
        assert vocab.token_to_id == {"a": 5}

    def test_max_size_too_small(self, tiny_corpus):
        with pytest.raises(UsageError):
            build_vocab(tiny_corpus, max_size=5)

    def test_lexicographic_tie_break(self):
        corpus = Corpus.from_texts([[["zeta beta zeta beta alpha"]]])
        vocab = build_vocab(corpus, max_size=16)
        # beta/zeta tie on frequency 2; alphabetical order breaks the tie.
        assert vocab.token_to_id == {"beta": 5, "zeta": 6, "alpha": 7}

    def test_deterministic(self, tiny_corpus):
        a = build_vocab(tiny_corpus, max_size=8)
        b = build_vocab(tiny_corpus, max_size=8)
        assert a.token_to_id == b.token_to_id


class TestEncodeDecode:
    def test_encode_lookup(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        assert encode(vocab, "a b") == [5, 6]

    def test_oov_maps_to_unk(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        assert encode(vocab, "zzz") == [UNK_ID]

    def test_empty_text(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        assert encode(vocab, "") == []

    def test_decode_inverse(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        assert decode(vocab, [5, 6]) == "a b"

    def test_decode_reserved_rendering(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        assert decode(vocab, [MASK_ID]) == "[MASK]"
        assert decode(vocab, [PAD_ID, CLS_ID, SEP_ID]) == "[PAD] [CLS] [SEP]"

    def test_decode_out_of_range(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        with pytest.raises(DataError, match="out of range"):
            decode(vocab, [999])

    def test_round_trip_on_normalized_text(self, tiny_corpus):
        vocab = build_vocab(tiny_corpus, max_size=8)
        text = "a b a"
        assert decode(vocab, encode(vocab, text)) == text

    @given(st.text(max_size=60))
    def test_encode_never_emits_structural_ids(self, text):
        vocab = build_vocab(Corpus.from_texts([[["a a b"]]]), max_size=8)
        ids = encode(vocab, text)
        assert not {PAD_ID, CLS_ID, SEP_ID, MASK_ID} & set(ids)


class TestVocabFile:
    def test_save_load_round_trip(self, tiny_corpus, tmp_path):
        vocab = build_vocab(tiny_corpus, max_size=8)
        path = tmp_path / "vocab.txt"
        save_vocab(vocab, path)
        assert path.read_text() == "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\nb\n"
        loaded = load_vocab(path)
        assert loaded.token_to_id == vocab.token_to_id

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("a\nb\n")
        with pytest.raises(DataError):
            load_vocab(path)
