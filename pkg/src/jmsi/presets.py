"""Named configuration presets.

``paper-scale`` mirrors the published full-scale training recipe in
executable form (it runs, but is not expected to finish on a workstation);
``desk-scale`` is sized to train in minutes on a CPU. The shape presets are
for parameter counting only.
"""

from __future__ import annotations

from .errors import UsageError
from .model import HeadKind, ModelConfig
from .packing import PackConfig
from .sampler import SamplerConfig
from .training import OptimizerConfig, RunConfig, ScheduleConfig

# 12-layer, 768-wide encoder shape with a single token-type row; counting its
# non-head parameters gives 124,055,040.
ROBERTA_BASE_SHAPE = ModelConfig(
    vocab_size=50265,
    max_positions=514,
    type_vocab=1,
    num_layers=12,
    d_model=768,
    num_heads=12,
    d_ff=3072,
)

# Same shape with the token-type table extended to k+1 = 6 slots.
ROBERTA_BASE_SHAPE_6TYPES = ModelConfig(
    vocab_size=50265,
    max_positions=514,
    type_vocab=6,
    num_layers=12,
    d_model=768,
    num_heads=12,
    d_ff=3072,
)

MODEL_PRESETS = {
    "roberta-base-shape": ROBERTA_BASE_SHAPE,
    "roberta-base-shape-6types": ROBERTA_BASE_SHAPE_6TYPES,
}


def paper_scale_run(seed: int = 0) -> RunConfig:
    """The full-scale recipe: 100k steps at batch 4096, peak 5e-5 with 10k
    warmup, slot length 64, k=5, candidate pools (1, 2, 2)."""
    return RunConfig(
        model=ModelConfig(
            vocab_size=50265,
            max_positions=514,
            type_vocab=6,
            num_layers=12,
            d_model=768,
            num_heads=12,
            d_ff=3072,
            dropout=0.1,
        ),
        pack=PackConfig(slot_len=64, k=5),
        sampler=SamplerConfig(k1=1, k2=2, k3=2),
        optimizer=OptimizerConfig(beta1=0.9, beta2=0.999, eps=1e-8,
                                  weight_decay=0.01, clip_norm=1.0),
        schedule=ScheduleConfig(warmup_steps=10_000, total_steps=100_000, peak_lr=5e-5),
        batch_size=4096,
        pretrain_head=HeadKind.CANDIDATE,
        finetune_head=HeadKind.CANDIDATE,
        seed=seed,
    )


def desk_scale_run(seed: int = 0) -> RunConfig:
    """A small configuration that pre-trains on a synthetic corpus in a few
    minutes of CPU time."""
    return RunConfig(
        model=ModelConfig(
            vocab_size=256,
            max_positions=96,
            type_vocab=6,
            num_layers=2,
            d_model=64,
            num_heads=4,
            d_ff=128,
            dropout=0.1,
        ),
        pack=PackConfig(slot_len=12, k=5),
        sampler=SamplerConfig(k1=1, k2=2, k3=2),
        schedule=ScheduleConfig(warmup_steps=100, total_steps=1500, peak_lr=1e-3),
        batch_size=16,
        pretrain_head=HeadKind.CANDIDATE,
        finetune_head=HeadKind.CANDIDATE,
        patience=5,
        max_epochs=12,
        seed=seed,
    )


RUN_PRESETS = {
    "paper-scale": paper_scale_run,
    "desk-scale": desk_scale_run,
}


def model_preset(name: str) -> ModelConfig:
    try:
        return MODEL_PRESETS[name]
    except KeyError:
        raise UsageError(
            f"unknown model preset {name!r}; available: {sorted(MODEL_PRESETS)}"
        ) from None


def run_preset(name: str, seed: int = 0) -> RunConfig:
    try:
        return RUN_PRESETS[name](seed=seed)
    except KeyError:
        raise UsageError(
            f"unknown run preset {name!r}; available: {sorted(RUN_PRESETS)}"
        ) from None
