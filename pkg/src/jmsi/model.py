"""Joint multi-slot transformer encoder with four prediction heads.

A post-layer-norm encoder over summed token/position/type embeddings. The
final hidden state at each slot's CLS position is that sentence's embedding;
heads score a single label (from the query slot or the mean of all slots) or
one label per candidate (from each candidate embedding alone, or from its
concatenation with the query embedding). The MLM output projection is
weight-tied to the token embedding.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import DataError, NumericError, UsageError
from .packing import PackedBatch

CHECKPOINT_MAGIC = b"JMSC"
CHECKPOINT_VERSION = 1

_INIT_STD = 0.02
_NORM_EPS = 1e-12


class HeadKind(str, Enum):
    """The four prediction heads.

    QUERY and MEAN emit one label per input (from the query-slot embedding,
    or the mean over all slot embeddings). CANDIDATE and PAIR emit one label
    per candidate slot (from its own embedding, or from the concatenation
    [query embedding, candidate embedding], which doubles the weight count).
    """

    QUERY = "query"
    MEAN = "mean"
    CANDIDATE = "candidate"
    PAIR = "pair"


SINGLE_LABEL_HEADS = (HeadKind.QUERY, HeadKind.MEAN)
MULTI_LABEL_HEADS = (HeadKind.CANDIDATE, HeadKind.PAIR)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_positions: int
    type_vocab: int
    num_layers: int
    d_model: int
    num_heads: int
    d_ff: int
    dropout: float = 0.1
    num_classes: int = 1

    def __post_init__(self):
        for name in ("vocab_size", "max_positions", "type_vocab", "num_layers",
                     "d_model", "num_heads", "d_ff", "num_classes"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.d_model % self.num_heads != 0:
            raise UsageError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise UsageError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class ForwardOutput:
    """Per-slot sentence embeddings (batch, k+1, d_model), MLM logits
    (batch, total_len, vocab), and final hidden states."""

    sentence_embeddings: torch.Tensor
    token_logits: torch.Tensor
    hidden: torch.Tensor


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out_proj = nn.Linear(d, d)
        self.attn_norm = nn.LayerNorm(d, eps=_NORM_EPS)
        self.ff_in = nn.Linear(d, cfg.d_ff)
        self.ff_out = nn.Linear(cfg.d_ff, d)
        self.ffn_norm = nn.LayerNorm(d, eps=_NORM_EPS)
        self.num_heads = cfg.num_heads
        self.p_drop = cfg.dropout

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor, train_mode: bool) -> torch.Tensor:
        bsz, seq, d = x.shape
        heads = self.num_heads
        d_head = d // heads

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(bsz, seq, heads, d_head).transpose(1, 2)

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        scores = q @ k.transpose(-2, -1) / math.sqrt(d_head)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        probs = F.dropout(scores.softmax(dim=-1), self.p_drop, training=train_mode)
        ctx = (probs @ v).transpose(1, 2).reshape(bsz, seq, d)
        x = self.attn_norm(x + F.dropout(self.out_proj(ctx), self.p_drop, training=train_mode))
        ff = self.ff_out(F.gelu(self.ff_in(x)))
        x = self.ffn_norm(x + F.dropout(ff, self.p_drop, training=train_mode))
        return x


class Model(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.token_embedding = nn.Embedding(cfg.vocab_size, d)
        self.position_embedding = nn.Embedding(cfg.max_positions, d)
        self.type_embedding = nn.Embedding(cfg.type_vocab, d)
        self.embedding_norm = nn.LayerNorm(d, eps=_NORM_EPS)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        # Output projection for MLM shares the token embedding weight.
        self.mlm_bias = nn.Parameter(torch.zeros(cfg.vocab_size))
        num_classes = cfg.num_classes
        self.head_query = nn.Linear(d, num_classes)
        self.head_mean = nn.Linear(d, num_classes)
        self.head_candidate = nn.Linear(d, num_classes)
        self.head_pair = nn.Linear(2 * d, num_classes)

    def forward_batch(self, batch: PackedBatch, train_mode: bool = False) -> ForwardOutput:
        """Encode a packed batch. Mask-0 positions neither attend as keys nor
        contribute their token embedding, so their token ids cannot influence
        any output."""
        cfg = self.cfg
        if batch.cfg.total_len > cfg.max_positions:
            raise DataError(
                f"input length {batch.cfg.total_len} exceeds max_positions {cfg.max_positions}"
            )
        if batch.cfg.k + 1 > cfg.type_vocab:
            raise DataError(f"{batch.cfg.k + 1} slots exceed type_vocab {cfg.type_vocab}")
        if int(batch.token_ids.max()) >= cfg.vocab_size or int(batch.token_ids.min()) < 0:
            raise DataError("token id out of range")

        device = self.token_embedding.weight.device
        dtype = self.token_embedding.weight.dtype
        ids = torch.from_numpy(batch.token_ids).to(device)
        types = torch.from_numpy(batch.type_ids).to(device)
        positions = torch.from_numpy(batch.position_ids).to(device)
        mask = torch.from_numpy(batch.attention_mask).to(device).bool()

        emb = (
            self.token_embedding(ids) * mask.unsqueeze(-1).to(dtype)
            + self.position_embedding(positions)
            + self.type_embedding(types)
        )
        x = F.dropout(self.embedding_norm(emb), self.cfg.dropout, training=train_mode)
        for layer in self.layers:
            x = layer(x, mask, train_mode)

        token_logits = x @ self.token_embedding.weight.t() + self.mlm_bias
        starts = torch.tensor(batch.slot_starts, dtype=torch.long, device=device)
        return ForwardOutput(
            sentence_embeddings=x[:, starts, :],
            token_logits=token_logits,
            hidden=x,
        )


def init_model(cfg: ModelConfig, seed: int) -> Model:
    """Build a model with truncated-normal weights (std 0.02, cut at 2 std),
    zero biases, and unit norm gains; deterministic for a given seed."""
    torch.manual_seed(seed)
    model = Model(cfg)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                nn.init.trunc_normal_(module.weight, std=_INIT_STD,
                                      a=-2 * _INIT_STD, b=2 * _INIT_STD)
                if isinstance(module, nn.Linear):
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
        nn.init.zeros_(model.mlm_bias)
    return model


def apply_head(model: Model, kind: HeadKind, out: ForwardOutput) -> torch.Tensor:
    """Project slot embeddings to head logits: (batch, num_classes) for
    single-label heads, (batch, k, num_classes) for per-candidate heads."""
    embeddings = out.sentence_embeddings
    kind = HeadKind(kind)
    if kind is HeadKind.QUERY:
        return model.head_query(embeddings[:, 0])
    if kind is HeadKind.MEAN:
        return model.head_mean(embeddings.mean(dim=1))
    if kind is HeadKind.CANDIDATE:
        return model.head_candidate(embeddings[:, 1:])
    query = embeddings[:, :1].expand(-1, embeddings.shape[1] - 1, -1)
    return model.head_pair(torch.cat([query, embeddings[:, 1:]], dim=-1))


def _is_head_param(name: str) -> bool:
    return name == "mlm_bias" or name.startswith("head_")


def count_parameters(model: Model, include_heads: bool = False) -> int:
    """Count trainable parameters. Without heads: embeddings, embedding norm,
    and encoder layers only (the tied MLM projection adds just its bias, also
    excluded). With heads: adds the MLM bias and the four head layers."""
    return sum(
        p.numel()
        for name, p in model.named_parameters()
        if include_heads or not _is_head_param(name)
    )


def compute_gradients(model: Model, loss: torch.Tensor) -> dict[str, torch.Tensor]:
    """Backpropagate ``loss`` and return one gradient per trainable
    parameter; parameters off the loss path get zeros."""
    if loss.numel() != 1:
        raise UsageError("loss must be a scalar")
    if not torch.isfinite(loss).all():
        raise NumericError(f"non-finite loss: {float(loss.detach())}")
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = {
        name: (torch.zeros_like(p) if p.grad is None else p.grad.detach().clone())
        for name, p in model.named_parameters()
    }
    model.zero_grad(set_to_none=True)
    return grads


def transfer_matching_parameters(src: Model, dst: Model) -> list[str]:
    """Copy every parameter whose name and shape match; returns the copied
    names. Used to warm-start fine-tuning from a pre-trained checkpoint whose
    head shapes may differ."""
    src_params = dict(src.named_parameters())
    copied = []
    with torch.no_grad():
        for name, p in dst.named_parameters():
            other = src_params.get(name)
            if other is not None and other.shape == p.shape:
                p.copy_(other.to(p.dtype))
                copied.append(name)
    return copied


# ---------------------------------------------------------------------------
# Checkpoint container

def _write_array(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(arr.astype("<f4").tobytes())


def _read_array(buf: io.BytesIO) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", buf.read(2))
    name = buf.read(name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", buf.read(1))
    shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(buf.read(count * 4), dtype="<f4").reshape(shape)
    return name, arr


def save_checkpoint(path: str | Path, model: Model, optimizer_state=None) -> None:
    """Write the named-array checkpoint container (32-bit values, stable
    parameter names), optionally with Adam moments."""
    cfg_json = json.dumps(asdict(model.cfg)).encode("utf-8")
    params = list(model.named_parameters())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg_json)))
        fh.write(cfg_json)
        fh.write(struct.pack("<I", len(params)))
        for name, p in params:
            _write_array(fh, name, p.detach().cpu().numpy())
        if optimizer_state is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", optimizer_state.step))
            for name, _ in params:
                _write_array(fh, f"m.{name}", optimizer_state.m[name].cpu().numpy())
                _write_array(fh, f"v.{name}", optimizer_state.v[name].cpu().numpy())


def load_checkpoint(path: str | Path):
    """Read a checkpoint; returns (model, optimizer_state_dict | None) where
    the state dict holds {"step": int, "m": {...}, "v": {...}} tensors."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing checkpoint: {p}")
    raw = p.read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{p}: bad magic, not a checkpoint")
    buf = io.BytesIO(raw[4:])
    version, cfg_len = struct.unpack("<II", buf.read(8))
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{p}: unsupported checkpoint version {version}")
    cfg = ModelConfig(**json.loads(buf.read(cfg_len).decode("utf-8")))
    model = Model(cfg)
    (n_params,) = struct.unpack("<I", buf.read(4))
    arrays = dict(_read_array(buf) for _ in range(n_params))
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name not in arrays:
                raise DataError(f"{p}: checkpoint missing parameter {name}")
            if tuple(arrays[name].shape) != tuple(param.shape):
                raise DataError(f"{p}: shape mismatch for {name}")
            param.copy_(torch.from_numpy(arrays[name].copy()))
    (has_opt,) = struct.unpack("<B", buf.read(1))
    opt_state = None
    if has_opt:
        (step,) = struct.unpack("<Q", buf.read(8))
        moments = {}
        for _ in range(2 * n_params):
            name, arr = _read_array(buf)
            moments[name] = torch.from_numpy(arr.copy())
        opt_state = {
            "step": step,
            "m": {n: moments[f"m.{n}"] for n in arrays},
            "v": {n: moments[f"v.{n}"] for n in arrays},
        }
    return model, opt_state
