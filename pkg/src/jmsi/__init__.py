"""Joint multi-sentence inference at desk scale.

A library and CLI for pre-training a small joint transformer encoder with a
same-paragraph candidate objective plus masked-token prediction, fine-tuning
it for answer-sentence ranking and fact verification, and evaluating with
the standard ranking metrics and an analytical cost model.
"""

from .corpus import (
    Corpus,
    CorpusStats,
    Document,
    Paragraph,
    Sentence,
    corpus_stats,
    generate_synthetic_corpus,
    ingest_corpus,
    split_paragraph_into_sentences,
    write_corpus,
)
from .errors import DataError, JmsiError, NumericError, UsageError
from .evaluation import (
    CostReport,
    EvalReport,
    RankingResult,
    TTestResult,
    cascade_rerank,
    compute_ranking_metrics,
    evaluate_ranking,
    label_accuracy,
    latency_ratio,
    paired_t_test,
    rank_bundle,
)
from .model import (
    ForwardOutput,
    HeadKind,
    Model,
    ModelConfig,
    apply_head,
    compute_gradients,
    count_parameters,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .packing import (
    PackConfig,
    PackedBatch,
    PackedInput,
    collate,
    pack_bundle,
    pack_example,
    read_packed_shard,
    unpack_slot,
    write_packed_shard,
)
from .sampler import (
    AnchorExample,
    CandidateBundle,
    IGNORE_INDEX,
    MaskedSequence,
    SamplerConfig,
    apply_mlm_masking,
    build_bundles,
    make_synthetic_as2_bundles,
    read_as2_tsv,
    read_verification_jsonl,
    sample_anchor_example,
)
from .training import (
    AdamState,
    OptimizerConfig,
    RunConfig,
    ScheduleConfig,
    candidate_bce_loss,
    finetune,
    lr_at,
    mlm_loss,
    optimizer_step,
    pretrain,
    pretrain_loss,
)
from .vocab import Vocab, build_vocab, decode, encode, load_vocab, save_vocab

__version__ = "0.1.0"
