"""Anchor-example sampling, MLM masking, and bundle construction."""

import numpy as np
import pytest
from scipy import stats as scistats

from jmsi.corpus import Corpus, generate_synthetic_corpus
from jmsi.errors import DataError, UsageError
from jmsi.sampler import (
    IGNORE_INDEX,
    SamplerConfig,
    apply_mlm_masking,
    build_bundles,
    make_synthetic_as2_bundles,
    read_anchor_examples,
    read_as2_tsv,
    read_verification_jsonl,
    sample_anchor_example,
    write_anchor_examples,
    write_as2_tsv,
)
from jmsi.vocab import PAD_ID, MASK_ID, NUM_RESERVED, build_vocab, encode


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(seed=5, n_docs=4, paras_per_doc=3,
                                     sents_per_para=3, topic_vocab_size=12)


class TestSamplerConfig:
    def test_k_is_sum(self):
        assert SamplerConfig(k1=1, k2=2, k3=2).k == 5

    def test_k1_required(self):
        with pytest.raises(UsageError):
            SamplerConfig(k1=0)


class TestAnchorSampling:
    def test_provenance_structure(self, corpus):
        cfg = SamplerConfig(k1=1, k2=2, k3=2)
        ex = sample_anchor_example(corpus, cfg, seed=0)
        assert sum(ex.labels) == 1
        same_para = same_doc = other_doc = 0
        for cand, label in zip(ex.candidates, ex.labels):
            assert (cand.doc_id, cand.para_id, cand.sent_id) != (
                ex.anchor.doc_id, ex.anchor.para_id, ex.anchor.sent_id)
            if cand.doc_id == ex.anchor.doc_id and cand.para_id == ex.anchor.para_id:
                same_para += 1
                assert label == 1
            elif cand.doc_id == ex.anchor.doc_id:
                same_doc += 1
                assert label == 0
            else:
                other_doc += 1
                assert label == 0
        assert (same_para, same_doc, other_doc) == (1, 2, 2)

    def test_deterministic(self, corpus):
        cfg = SamplerConfig()
        assert sample_anchor_example(corpus, cfg, seed=42) == sample_anchor_example(
            corpus, cfg, seed=42
        )

    def test_distinct_seeds_distinct_examples(self, corpus):
        cfg = SamplerConfig()
        examples = {sample_anchor_example(corpus, cfg, seed=s) for s in range(20)}
        assert len(examples) >= 16

    def test_single_document_has_no_easy_pool(self):
        corpus = Corpus.from_texts([[["a b", "c d"], ["e f", "g h"], ["i j", "k l"]]])
        with pytest.raises(DataError, match="corpus too small"):
            sample_anchor_example(corpus, SamplerConfig(k1=1, k2=2, k3=2), seed=0)

    def test_no_shuffle_keeps_pool_order(self, corpus):
        cfg = SamplerConfig(k1=1, k2=2, k3=2, shuffle_candidates=False)
        ex = sample_anchor_example(corpus, cfg, seed=9)
        assert ex.labels[0] == 1 and sum(ex.labels) == 1
        assert ex.candidates[1].doc_id == ex.anchor.doc_id
        assert ex.candidates[2].doc_id == ex.anchor.doc_id
        assert ex.candidates[3].doc_id != ex.anchor.doc_id
        assert ex.candidates[4].doc_id != ex.anchor.doc_id

    def test_anchor_uniformity_chi_square(self):
        corpus = Corpus.from_texts(
            [[["a a", "b b"], ["c c", "d d"]], [["e e", "f f"], ["g g", "h h"]]]
        )
        cfg = SamplerConfig(k1=1, k2=1, k3=1)
        n_draws = 4000
        counts = {}
        for s in range(n_draws):
            ex = sample_anchor_example(corpus, cfg, seed=s)
            key = (ex.anchor.doc_id, ex.anchor.para_id, ex.anchor.sent_id)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 8
        observed = np.array(list(counts.values()))
        chi2 = float(((observed - n_draws / 8) ** 2 / (n_draws / 8)).sum())
        # p > 0.001 i.e. statistic below the 0.999 quantile at dof 7
        assert chi2 < scistats.chi2.ppf(0.999, df=7)


@pytest.fixture(scope="module")
def vocab(corpus):
    return build_vocab(corpus, max_size=128)


class TestMlmMasking:
    def test_zero_rate_is_identity(self, vocab):
        ids = list(range(5, 25))
        masked = apply_mlm_masking(ids, vocab, mask_prob=0.0, seed=0)
        assert np.array_equal(masked.input_ids, np.array(ids))
        assert (masked.mlm_labels == IGNORE_INDEX).all()

    def test_all_pad_untouched(self, vocab):
        ids = [PAD_ID] * 32
        masked = apply_mlm_masking(ids, vocab, mask_prob=1.0, seed=0)
        assert np.array_equal(masked.input_ids, np.array(ids))
        assert (masked.mlm_labels == IGNORE_INDEX).all()

    def test_reserved_never_masked_and_labels_track_selection(self, vocab):
        rng = np.random.default_rng(0)
        ids = rng.integers(0, vocab.size, size=2000)
        masked = apply_mlm_masking(ids, vocab, mask_prob=0.3, seed=1)
        reserved = ids < NUM_RESERVED
        assert np.array_equal(masked.input_ids[reserved], ids[reserved])
        assert (masked.mlm_labels[reserved] == IGNORE_INDEX).all()
        selected = masked.mlm_labels != IGNORE_INDEX
        # Labels hold the original ids exactly at selected positions.
        assert np.array_equal(masked.mlm_labels[selected], ids[selected])
        # Any changed position must be a selected one.
        changed = masked.input_ids != ids
        assert not (changed & ~selected).any()

    def test_selection_and_branch_fractions(self, vocab):
        rng = np.random.default_rng(3)
        ids = rng.integers(NUM_RESERVED, vocab.size, size=120_000)
        masked = apply_mlm_masking(ids, vocab, mask_prob=0.15, seed=1)
        selected = masked.mlm_labels != IGNORE_INDEX
        frac = selected.mean()
        assert abs(frac - 0.15) < 0.01
        mask_share = (masked.input_ids[selected] == MASK_ID).mean()
        assert abs(mask_share - 0.80) < 0.02

    def test_deterministic(self, vocab):
        ids = list(range(5, 105))
        a = apply_mlm_masking(ids, vocab, 0.15, seed=7)
        b = apply_mlm_masking(ids, vocab, 0.15, seed=7)
        assert np.array_equal(a.input_ids, b.input_ids)
        assert np.array_equal(a.mlm_labels, b.mlm_labels)


class TestBundles:
    def test_truncate_policy(self):
        records = [("q", [f"c{i}" for i in range(7)], [0] * 7, None)]
        bundles = build_bundles(records, k=5, overflow_policy="truncate")
        assert len(bundles) == 1
        assert len(bundles[0].candidates) == 5

    def test_split_policy(self):
        records = [("q", [f"c{i}" for i in range(7)], [0] * 7, None)]
        bundles = build_bundles(records, k=5, overflow_policy="split")
        assert [len(b.candidates) for b in bundles] == [5, 2]
        assert bundles[0].query == bundles[1].query == "q"
        assert bundles[0].bundle_id != bundles[1].bundle_id

    def test_gold_passthrough(self):
        bundles = build_bundles([("q", ["a", "b", "c"], [0, 1, 0], None)], k=5)
        assert bundles[0].gold == (0, 1, 0)

    def test_empty_record_dropped(self):
        assert build_bundles([("q", [], [], None)], k=5) == []

    def test_bad_policy(self):
        with pytest.raises(UsageError):
            build_bundles([], k=5, overflow_policy="wrap")


class TestDatasetFiles:
    def test_as2_tsv_round_trip(self, tmp_path):
        records = [
            ("who did it", ["he did", "she did"], [0, 1], None),
            ("when was it", ["in 1990", "never", "today"], [1, 0, 0], None),
        ]
        path = tmp_path / "data.tsv"
        write_as2_tsv(records, path)
        back = read_as2_tsv(path)
        assert [(q, c, g) for q, c, g, _ in back] == [(q, c, g) for q, c, g, _ in records]

    def test_as2_bad_label_reports_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("q\tcand\t1\nq\tcand\t2\n")
        with pytest.raises(DataError, match=":2"):
            read_as2_tsv(path)

    def test_as2_wrong_columns(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("q only one field\n")
        with pytest.raises(DataError, match="3 tab-separated"):
            read_as2_tsv(path)

    def test_verification_jsonl(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        path.write_text(
            '{"claim": "sky is blue", "evidences": ["blue sky seen"], "label": "SUPPORTS"}\n'
            '{"claim": "sky is green", "evidences": ["blue sky seen", "not green"], '
            '"label": "REFUTES"}\n'
        )
        records = read_verification_jsonl(path)
        assert len(records) == 2
        assert records[0][3] == "SUPPORTS"
        bundles = build_bundles(records, k=5)
        assert bundles[0].label == "SUPPORTS"
        assert bundles[1].candidates == ("blue sky seen", "not green")

    def test_verification_bad_label(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        path.write_text('{"claim": "c", "evidences": ["e"], "label": "MAYBE"}\n')
        with pytest.raises(DataError, match="label"):
            read_verification_jsonl(path)

    def test_anchor_shard_round_trip(self, tmp_path):
        corpus = generate_synthetic_corpus(seed=5, n_docs=4, paras_per_doc=3,
                                           sents_per_para=3, topic_vocab_size=12)
        cfg = SamplerConfig()
        examples = [sample_anchor_example(corpus, cfg, seed=s) for s in range(5)]
        path = tmp_path / "shard.jsonl"
        write_anchor_examples(examples, path)
        assert read_anchor_examples(path) == examples


class TestSyntheticAs2:
    def test_one_gold_containing_topic(self):
        bundles = make_synthetic_as2_bundles(seed=0, n_queries=20, k=5, topic_vocab_size=10)
        assert len(bundles) == 20
        assert len({b.query for b in bundles}) == 20
        for b in bundles:
            assert sum(b.gold) == 1
            topic = b.query.split()[0]
            gold_text = b.candidates[b.gold.index(1)]
            assert topic in gold_text.split()
            for text, g in zip(b.candidates, b.gold):
                if not g:
                    assert topic not in text.split()

    def test_deterministic(self):
        a = make_synthetic_as2_bundles(seed=4, n_queries=5, k=5, topic_vocab_size=6)
        b = make_synthetic_as2_bundles(seed=4, n_queries=5, k=5, topic_vocab_size=6)
        assert a == b
