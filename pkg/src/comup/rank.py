"""Dual-encoder contrastive ranking of candidate updated comments.

The ranker encodes the code-change and comment-change edit-token
sequences with bidirectional cross-attention, per-branch 2-layer
transformer encoders, masked max-pooling and a linear projection into a
shared space; cosine similarity between the two projections is the
ranking score. Training minimizes a listwise contrastive loss over
groups of one positive and N negatives. Random, LLM self-judging, and
RankNet baselines live here as well.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import (
    ComupError,
    ConfigurationError,
    ContractError,
    NumericDegeneracyError,
    ParseError,
)
from .flatten import embed_edit_tokens, flatten_sample
from .llm import CompletionRequest, complete
from .prompt import build_self_rank_prompt
from .tokenize import embed_tokens, subword_tokenize

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class RankerConfig:
    embed_dim: int          # provider.dimension + 4
    d_model: int = 768
    attention_heads: int = 4
    encoder_layers: int = 2
    ffn_dim: int = 1024
    proj_dim: int = 256
    dropout: float = 0.1
    lambda_: float = 0.07
    learning_rate: float = 1e-4
    batch_groups: int = 8
    max_seq_len: int = 512
    seed: int = 42
    checkpoint_every: int = 5000
    epochs: int = 10

    def __post_init__(self):
        if self.lambda_ <= 0:
            raise ConfigurationError("lambda_ must be positive")
        if self.d_model % self.attention_heads != 0:
            raise ConfigurationError("d_model must be divisible by attention_heads")
        if self.encoder_layers < 1:
            raise ConfigurationError("encoder_layers must be >= 1")


@dataclass(frozen=True)
class RankScore:
    value: float

    def __post_init__(self):
        if not -1.0 - 1e-6 <= self.value <= 1.0 + 1e-6:
            raise ValueError("cosine score out of range")


class _Branch(nn.Module):
    """One encoder branch: input projection, cross-attention consumer,
    transformer encoder, masked max-pool, projection."""

    def __init__(self, cfg: RankerConfig):
        super().__init__()
        self.in_proj = nn.Linear(cfg.embed_dim, cfg.d_model)
        self.cross = nn.MultiheadAttention(
            cfg.d_model, cfg.attention_heads, dropout=0.0, batch_first=True
        )
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.attention_heads,
            dim_feedforward=cfg.ffn_dim,
            dropout=cfg.dropout,
            activation="gelu",
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.encoder_layers)
        self.out_proj = nn.Linear(cfg.d_model, cfg.proj_dim)


class DualEncoderRanker(nn.Module):
    """Two unshared branches over the code-change (A) and comment-change
    (B) sequences, tied together by bidirectional cross-attention."""

    def __init__(self, config: RankerConfig):
        super().__init__()
        self.config = config
        self.branch_a = _Branch(config)
        self.branch_b = _Branch(config)

    def forward(self, a, b, a_pad=None, b_pad=None):
        """a: (batch, la, embed_dim); b: (batch, lb, embed_dim);
        pad masks are bool with True at padded positions. Returns
        (z_a, z_b), each (batch, proj_dim)."""
        a_in = self.branch_a.in_proj(a)
        b_in = self.branch_b.in_proj(b)
        c_a, _ = self.branch_a.cross(a_in, b_in, b_in, key_padding_mask=b_pad)
        c_b, _ = self.branch_b.cross(b_in, a_in, a_in, key_padding_mask=a_pad)
        a_res = a_in + c_a
        b_res = b_in + c_b
        h_a = self.branch_a.encoder(a_res, src_key_padding_mask=a_pad)
        h_b = self.branch_b.encoder(b_res, src_key_padding_mask=b_pad)
        v_a = _masked_max_pool(h_a, a_pad)
        v_b = _masked_max_pool(h_b, b_pad)
        return self.branch_a.out_proj(v_a), self.branch_b.out_proj(v_b)


def _masked_max_pool(h, pad):
    # padded positions must never win the max
    if pad is not None:
        h = h.masked_fill(pad.unsqueeze(-1), float("-inf"))
    return h.max(dim=1).values


def _pair_tensors(pair, provider, dtype=torch.float32):
    a = torch.as_tensor(embed_edit_tokens(pair.code_change, provider), dtype=dtype)
    b = torch.as_tensor(embed_edit_tokens(pair.comment_change, provider), dtype=dtype)
    return a, b


def _batch_pairs(embeds, dtype=torch.float32):
    """Pad a list of (a, b) tensor pairs into batched tensors + masks."""
    la = max(a.shape[0] for a, _ in embeds)
    lb = max(b.shape[0] for _, b in embeds)
    n = len(embeds)
    dim = embeds[0][0].shape[1]
    a_batch = torch.zeros((n, la, dim), dtype=dtype)
    b_batch = torch.zeros((n, lb, dim), dtype=dtype)
    a_pad = torch.ones((n, la), dtype=torch.bool)
    b_pad = torch.ones((n, lb), dtype=torch.bool)
    for i, (a, b) in enumerate(embeds):
        a_batch[i, : a.shape[0]] = a
        a_pad[i, : a.shape[0]] = False
        b_batch[i, : b.shape[0]] = b
        b_pad[i, : b.shape[0]] = False
    return a_batch, b_batch, a_pad, b_pad


def encode_pair(pair, model: DualEncoderRanker, provider) -> tuple[np.ndarray, np.ndarray]:
    """Project one flattened pair into the shared space (inference mode)."""
    model.eval()
    with torch.no_grad():
        a, b = _pair_tensors(pair, provider)
        z_a, z_b = model(a.unsqueeze(0), b.unsqueeze(0))
    return z_a[0].numpy(), z_b[0].numpy()


def score(pair, model: DualEncoderRanker, provider) -> RankScore:
    """Cosine similarity of the two branch projections."""
    z_a, z_b = encode_pair(pair, model, provider)
    na, nb = float(np.linalg.norm(z_a)), float(np.linalg.norm(z_b))
    if na == 0.0 or nb == 0.0:
        raise NumericDegeneracyError("zero-norm projection vector")
    value = float(np.dot(z_a, z_b) / (na * nb))
    return RankScore(value=max(-1.0, min(1.0, value)))


def listwise_loss(positive_score: float, negative_scores, lambda_: float) -> float:
    """-log(s0 / (s0 + sum s_i)) with s_i = exp(sim_i / lambda), computed
    with a max-shift for numerical stability."""
    negatives = list(negative_scores)
    if not negatives:
        raise ContractError("listwise loss needs at least one negative")
    if lambda_ <= 0:
        raise ContractError("lambda must be positive")
    logits = [positive_score / lambda_] + [s / lambda_ for s in negatives]
    shift = max(logits)
    lse = shift + math.log(sum(math.exp(x - shift) for x in logits))
    return lse - logits[0]


def _group_scores(model, group, provider, dtype=torch.float32):
    """Cosine scores for [positive] + negatives of one group, as a tensor
    with gradient flow."""
    pairs = [flatten_sample(group.context_sample, group.positive, provider,
                            max_len=model.config.max_seq_len)]
    for neg in group.negatives:
        pairs.append(flatten_sample(group.context_sample, neg.text, provider,
                                    max_len=model.config.max_seq_len))
    embeds = [_pair_tensors(p, provider, dtype=dtype) for p in pairs]
    a, b, a_pad, b_pad = _batch_pairs(embeds, dtype=dtype)
    z_a, z_b = model(a, b, a_pad, b_pad)
    return nn.functional.cosine_similarity(z_a, z_b, dim=1)


def group_loss(model, group, provider, dtype=torch.float32):
    """Differentiable listwise loss of one group."""
    sims = _group_scores(model, group, provider, dtype=dtype)
    logits = sims / model.config.lambda_
    return torch.logsumexp(logits, dim=0) - logits[0]


class TrainingError(ComupError):
    """Training aborted (non-finite loss or similar)."""


@dataclass
class CheckpointRecord:
    instances: int
    step: int
    train_loss: float
    val_loss: float


def _validation_loss(model, val_groups, provider) -> float:
    model.eval()
    with torch.no_grad():
        losses = [float(group_loss(model, g, provider)) for g in val_groups]
    return sum(losses) / len(losses) if losses else float("nan")


def train(groups, val_groups, config: RankerConfig, provider,
          log_path=None) -> tuple[DualEncoderRanker, list[CheckpointRecord]]:
    """Train the ranker; returns the checkpoint with the lowest mean
    validation loss. Fully deterministic given config.seed."""
    if not groups:
        raise ContractError("no training groups")
    torch.manual_seed(config.seed)
    model = DualEncoderRanker(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)

    history: list[CheckpointRecord] = []
    best_state = None
    best_val = float("inf")
    instances = 0
    step = 0
    next_checkpoint = config.checkpoint_every
    recent_losses: list[float] = []

    def checkpoint():
        nonlocal best_state, best_val
        val_loss = _validation_loss(model, val_groups, provider)
        train_loss = (sum(recent_losses) / len(recent_losses)
                      if recent_losses else float("nan"))
        rec = CheckpointRecord(instances=instances, step=step,
                               train_loss=train_loss, val_loss=val_loss)
        history.append(rec)
        recent_losses.clear()
        log.info("checkpoint @%d instances: train %.4f val %.4f",
                 instances, train_loss, val_loss)
        if not math.isnan(val_loss) and val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
        model.train()

    model.train()
    order = list(range(len(groups)))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        batch: list[int] = []
        for idx in order:
            batch.append(idx)
            if len(batch) < config.batch_groups and idx != order[-1]:
                continue
            optimizer.zero_grad()
            losses = []
            for gi in batch:
                loss = group_loss(model, groups[gi], provider)
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at step {step}, group {groups[gi].id!r}"
                    )
                losses.append(loss)
            total = torch.stack(losses).mean()
            total.backward()
            optimizer.step()
            step += 1
            instances += len(batch)
            recent_losses.append(float(total.detach()))
            batch = []
            if instances >= next_checkpoint:
                checkpoint()
                next_checkpoint += config.checkpoint_every
    if not history or history[-1].instances < instances:
        checkpoint()

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for rec in history:
                fh.write(json.dumps(asdict(rec)) + "\n")
    return model, history


# --- checkpoint persistence -------------------------------------------------

_CKPT_MAGIC = b"COMUPCKPT"


def save_checkpoint(model: DualEncoderRanker, provider, path) -> None:
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "provider": provider.identity,
    }
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name, tensor in model.state_dict().items():
            arr = tensor.detach().cpu().numpy().astype("<f4")
            meta = {"name": name, "shape": list(arr.shape)}
            fh.write(json.dumps(meta, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(arr.tobytes())


def load_checkpoint(path, provider) -> DualEncoderRanker:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        header = json.loads(fh.readline().decode("utf-8"))
        if header["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ConfigurationError(
                f"{path}: unsupported checkpoint format {header['format_version']}"
            )
        if header["provider"] != provider.identity:
            raise ConfigurationError(
                f"{path}: checkpoint built with provider {header['provider']}, "
                f"got {provider.identity}"
            )
        config = RankerConfig(**header["config"])
        state = {}
        while True:
            meta_line = fh.readline()
            if not meta_line.strip():
                break
            meta = json.loads(meta_line.decode("utf-8"))
            count = int(np.prod(meta["shape"])) if meta["shape"] else 1
            raw = fh.read(4 * count)
            arr = np.frombuffer(raw, dtype="<f4").reshape(meta["shape"])
            state[meta["name"]] = torch.as_tensor(arr.copy())
    model = DualEncoderRanker(config)
    model.load_state_dict(state)
    model.eval()
    return model


# --- candidate ranking ------------------------------------------------------

def rank_candidates(sample, candidates, model: DualEncoderRanker, provider):
    """Candidates sorted by descending score; ties keep input order.
    Returns a list of (candidate, score-value)."""
    if not candidates:
        raise ContractError("no candidates to rank")
    scored = []
    for cand in candidates:
        text = cand.text if hasattr(cand, "text") else cand
        pair = flatten_sample(sample, text, provider,
                              max_len=model.config.max_seq_len)
        scored.append((cand, score(pair, model, provider).value))
    return sorted(scored, key=lambda cs: -cs[1])


# --- baselines --------------------------------------------------------------

def random_rank(candidates, seed: int):
    """Uniform permutation from a seeded generator."""
    order = list(candidates)
    random.Random(seed).shuffle(order)
    return order


def self_rank(sample, candidates, backend, model_id: str,
              temperature: float = 0.0):
    """Ask the generating LLM to order its own candidates; the structured
    "top-1".."top-k" reply must be a permutation of the expert indices."""
    if len(candidates) < 2:
        raise ContractError("self-ranking needs at least 2 candidates")
    prompt = build_self_rank_prompt(sample, candidates)
    raw = complete(
        CompletionRequest(model_id=model_id, prompt=prompt,
                          temperature=temperature),
        backend,
    )
    return [candidates[i - 1] for i in parse_self_rank_reply(raw, len(candidates))]


def parse_self_rank_reply(raw: str, k: int) -> list[int]:
    """Parse a judge reply into a permutation of 1..k (expert numbers)."""
    text = raw.strip()
    if text.startswith("```"):
        text = text.strip("`").lstrip("json").strip()
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise ParseError(f"reply is not valid JSON: {exc}", raw=raw) from exc
    if not isinstance(obj, dict):
        raise ParseError("reply is not a JSON object", raw=raw)
    order = []
    for rank in range(1, k + 1):
        key = f"top-{rank}"
        if key not in obj:
            raise ParseError(f"reply missing key {key!r}", raw=raw)
        name = str(obj[key]).strip()
        if not name.lower().startswith("expert"):
            raise ParseError(f"{key!r} names unknown expert {name!r}", raw=raw)
        try:
            idx = int(name.split()[-1].lstrip("_"))
        except ValueError as exc:
            raise ParseError(f"{key!r} names unknown expert {name!r}", raw=raw) from exc
        if not 1 <= idx <= k:
            raise ParseError(f"{key!r} expert index {idx} out of range", raw=raw)
        order.append(idx)
    if len(set(order)) != k:
        raise ParseError("reply is not a permutation of experts", raw=raw)
    return order


# --- RankNet baseline -------------------------------------------------------

@dataclass
class RankNetConfig:
    embed_dim: int            # provider.dimension
    hidden_dim: int = 256
    learning_rate: float = 1e-4
    seed: int = 42
    epochs: int = 10
    max_seq_len: int = 1024


class RankNetScorer(nn.Module):
    """Two fully-connected layers applied rowwise, max-pooling over rows,
    sigmoid on the pooled logit."""

    def __init__(self, config: RankNetConfig):
        super().__init__()
        self.config = config
        self.fc1 = nn.Linear(config.embed_dim, config.hidden_dim)
        self.fc2 = nn.Linear(config.hidden_dim, 1)

    def logit(self, rows):
        h = torch.relu(self.fc1(rows))
        return self.fc2(h).squeeze(-1).max(dim=-1).values

    def forward(self, rows):
        return torch.sigmoid(self.logit(rows))


def _ranknet_input(sample, candidate_text: str, provider,
                   max_seq_len: int) -> torch.Tensor:
    # content tokens only: the sequence sentinels are identical across all
    # candidates and would dominate the max-pool without carrying signal
    parts = []
    for text in (sample.old_code, sample.new_code, sample.old_comment,
                 candidate_text):
        seq = subword_tokenize(text, provider)
        rows = embed_tokens(seq, provider)[1:-1]
        if rows.shape[0]:
            parts.append(rows)
    rows = np.concatenate(parts, axis=0)[:max_seq_len]
    return torch.as_tensor(rows, dtype=torch.float32)


def ranknet_score(sample, candidate, model: RankNetScorer, provider) -> float:
    text = candidate.text if hasattr(candidate, "text") else candidate
    model.eval()
    with torch.no_grad():
        rows = _ranknet_input(sample, text, provider, model.config.max_seq_len)
        return float(model(rows))


def ranknet_train(groups, config: RankNetConfig, provider) -> RankNetScorer:
    """Pairwise probabilistic ranking loss over (positive, negative)
    pairs within each group."""
    if not groups:
        raise ContractError("no training groups")
    torch.manual_seed(config.seed)
    model = RankNetScorer(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    bce = nn.BCEWithLogitsLoss()
    rng = random.Random(config.seed)

    order = list(range(len(groups)))
    model.train()
    for epoch in range(config.epochs):
        rng.shuffle(order)
        for gi in order:
            group = groups[gi]
            sample = group.context_sample
            pos_rows = _ranknet_input(sample, group.positive, provider,
                                      config.max_seq_len)
            pos_logit = model.logit(pos_rows)
            losses = []
            for neg in group.negatives:
                neg_rows = _ranknet_input(sample, neg.text, provider,
                                          config.max_seq_len)
                diff = pos_logit - model.logit(neg_rows)
                losses.append(bce(diff, torch.ones(())))
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss on group {group.id!r}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()
    return model
