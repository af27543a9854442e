"""Sentence-strategy classifiers: recurrent-convolutional encoder and baselines.

Three architectures share the same feature concatenation:

* ``RcnnNet``   - bidirectional LSTM states concatenated with word embeddings,
  linearly transformed with tanh, then max-pooled over time.
* ``BlstmAttentionNet`` - bidirectional LSTM pooled by additive self-attention.
* ``CnnNet``    - multi-width convolutions with max-over-time pooling.

Each produces 11 class logits from the pooled sentence vector plus the enabled
sentence-level features (turn-position embedding, sentiment triple, projected
character vector) and an optional context representation of the previous
persuadee utterance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import ConfigError, NumericError
from .features import CHAR_DIM, FeatureBundle, Vocabulary

CONTEXT_MODES = ("none", "rnn", "cnn", "mean", "tfidf")
ARCHITECTURES = ("rcnn", "blstm", "cnn")
N_CLASSES = 11


@dataclass
class RcnnConfig:
    """Dimensions and switches shared by all three architectures."""

    word_dim: int = 300
    lstm_hidden: int = 200  # per direction
    latent_dim: int = 300  # after the tanh transformation
    turn_buckets: int = 10
    turn_embed_dim: int = 10
    char_dim: int = CHAR_DIM
    char_proj_dim: int = 50
    sentiment_dim: int = 3
    n_classes: int = N_CLASSES
    context_mode: str = "none"
    context_filters: int = 100
    context_kernel: int = 3
    tfidf_dim: int = 100
    attention_dim: int = 150
    cnn_filter_widths: tuple[int, ...] = (3, 4, 5)
    cnn_feature_maps: int = 100
    dropout_p: float = 0.5
    use_turn: bool = False
    use_sentiment: bool = False
    use_char: bool = False

    def validate(self) -> None:
        dims = (
            self.word_dim,
            self.lstm_hidden,
            self.latent_dim,
            self.turn_buckets,
            self.turn_embed_dim,
            self.char_dim,
            self.char_proj_dim,
            self.sentiment_dim,
            self.context_filters,
            self.context_kernel,
            self.tfidf_dim,
            self.attention_dim,
            self.cnn_feature_maps,
            *self.cnn_filter_widths,
        )
        if any(d <= 0 for d in dims):
            raise ConfigError(f"all dimensions must be positive: {self}")
        if self.n_classes != N_CLASSES:
            raise ConfigError(f"n_classes must be {N_CLASSES}, got {self.n_classes}")
        if self.context_mode not in CONTEXT_MODES:
            raise ConfigError(
                f"unknown context mode {self.context_mode!r}; expected one of {CONTEXT_MODES}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @classmethod
    def all_features(cls, context_mode: str = "rnn", **overrides) -> "RcnnConfig":
        return cls(
            context_mode=context_mode,
            use_turn=True,
            use_sentiment=True,
            use_char=True,
            **overrides,
        )


class Batch(NamedTuple):
    ids: torch.Tensor  # (B, T) int64, 0-padded
    lengths: torch.Tensor  # (B,) int64
    ctx_ids: torch.Tensor  # (B, Tc) int64, 0-padded
    ctx_lengths: torch.Tensor  # (B,) int64
    turn: torch.Tensor  # (B,) int64
    sentiment: torch.Tensor  # (B, 3)
    char: torch.Tensor  # (B, char_dim)


def collate(bundles: Sequence[FeatureBundle], config: RcnnConfig, dtype=torch.float32) -> Batch:
    """Pad a list of bundles into one batch of tensors."""
    if not bundles:
        raise ValueError("empty batch")
    for b in bundles:
        if len(b.char_vector) != config.char_dim:
            raise ConfigError(
                f"character vector has {len(b.char_vector)} values, expected {config.char_dim}"
            )
        if len(b.sentiment) != config.sentiment_dim:
            raise ConfigError(f"sentiment triple has {len(b.sentiment)} values")
    n = len(bundles)
    t_max = max(len(b.token_ids) for b in bundles)
    tc_max = max(1, max(len(b.context_ids) for b in bundles))
    ids = torch.zeros((n, t_max), dtype=torch.int64)
    ctx_ids = torch.zeros((n, tc_max), dtype=torch.int64)
    for i, b in enumerate(bundles):
        ids[i, : len(b.token_ids)] = torch.from_numpy(np.asarray(b.token_ids))
        if len(b.context_ids):
            ctx_ids[i, : len(b.context_ids)] = torch.from_numpy(np.asarray(b.context_ids))
    return Batch(
        ids=ids,
        lengths=torch.tensor([len(b.token_ids) for b in bundles], dtype=torch.int64),
        ctx_ids=ctx_ids,
        ctx_lengths=torch.tensor([len(b.context_ids) for b in bundles], dtype=torch.int64),
        turn=torch.tensor([b.turn_position_index for b in bundles], dtype=torch.int64),
        sentiment=torch.stack([torch.as_tensor(b.sentiment, dtype=dtype) for b in bundles]),
        char=torch.stack([torch.as_tensor(b.char_vector, dtype=dtype) for b in bundles]),
    )


def _length_mask(lengths: torch.Tensor, t_max: int) -> torch.Tensor:
    """(B, T) bool mask, True at valid positions."""
    return torch.arange(t_max, device=lengths.device)[None, :] < lengths[:, None]


class _StrategyNet(nn.Module):
    """Shared embedding, context, and feature-concatenation machinery."""

    pooled_dim: int  # set by subclasses before _init_features()

    def __init__(self, config: RcnnConfig, embedding_matrix: np.ndarray):
        super().__init__()
        config.validate()
        if embedding_matrix.ndim != 2 or embedding_matrix.shape[1] != config.word_dim:
            raise ConfigError(
                f"embedding matrix shape {embedding_matrix.shape} does not match "
                f"word_dim={config.word_dim}"
            )
        self.config = config
        self.vocab_size = embedding_matrix.shape[0]
        self.embed = nn.Embedding.from_pretrained(
            torch.as_tensor(embedding_matrix, dtype=torch.get_default_dtype()),
            freeze=True,
            padding_idx=Vocabulary.PAD,
        )

    def _init_features(self) -> None:
        config = self.config
        if config.use_turn:
            self.turn_embed = nn.Embedding(config.turn_buckets, config.turn_embed_dim)
        if config.use_char:
            self.char_proj = nn.Linear(config.char_dim, config.char_proj_dim)
        if config.context_mode == "rnn":
            self.context_rnn = nn.LSTM(
                config.word_dim, config.lstm_hidden, batch_first=True
            )
        elif config.context_mode == "cnn":
            self.context_conv = nn.Conv1d(
                config.word_dim, config.context_filters, config.context_kernel
            )
        elif config.context_mode == "tfidf":
            self.tfidf_proj = nn.Linear(self.vocab_size, config.tfidf_dim)
            self.register_buffer("idf", torch.ones(self.vocab_size))
        self.output = nn.Linear(self.pooled_dim + self._extra_dim(), config.n_classes)

    def _extra_dim(self) -> int:
        config = self.config
        dim = 0
        if config.use_turn:
            dim += config.turn_embed_dim
        if config.use_sentiment:
            dim += config.sentiment_dim
        if config.use_char:
            dim += config.char_proj_dim
        dim += {
            "none": 0,
            "rnn": config.lstm_hidden if self._concatenates_rnn_context() else 0,
            "cnn": config.context_filters,
            "mean": config.word_dim,
            "tfidf": config.tfidf_dim,
        }[config.context_mode]
        return dim

    def _concatenates_rnn_context(self) -> bool:
        """Recurrent cores inject the context state as h0; others concatenate it."""
        return False

    def set_idf(self, idf: np.ndarray) -> None:
        if self.config.context_mode != "tfidf":
            raise ConfigError("idf weights only apply to the tfidf context mode")
        if idf.shape != (self.vocab_size,):
            raise ConfigError(f"idf shape {idf.shape} does not match vocabulary {self.vocab_size}")
        self.idf.copy_(torch.as_tensor(idf, dtype=self.idf.dtype))

    def _context_state(self, batch: Batch) -> torch.Tensor:
        """Last hidden state of the context LSTM; zeros for empty contexts."""
        n = batch.ctx_ids.shape[0]
        dtype = self.embed.weight.dtype
        state = torch.zeros((n, self.config.lstm_hidden), dtype=dtype)
        nonempty = (batch.ctx_lengths > 0).nonzero(as_tuple=True)[0]
        if nonempty.numel():
            emb = self.embed(batch.ctx_ids[nonempty])
            packed = pack_padded_sequence(
                emb,
                batch.ctx_lengths[nonempty].cpu(),
                batch_first=True,
                enforce_sorted=False,
            )
            _, (h_n, _) = self.context_rnn(packed)
            state[nonempty] = h_n[0]
        return state

    def _context_vector(self, batch: Batch) -> Optional[torch.Tensor]:
        """Context representation to concatenate before the output layer."""
        config = self.config
        mode = config.context_mode
        if mode == "none" or (mode == "rnn" and not self._concatenates_rnn_context()):
            return None
        if mode == "rnn":
            return self._context_state(batch)
        dtype = self.embed.weight.dtype
        n, tc = batch.ctx_ids.shape
        empty = batch.ctx_lengths == 0
        if mode == "mean":
            emb = self.embed(batch.ctx_ids)
            mask = _length_mask(batch.ctx_lengths, tc).to(dtype)
            total = (emb * mask.unsqueeze(2)).sum(dim=1)
            denom = batch.ctx_lengths.clamp(min=1).to(dtype).unsqueeze(1)
            return torch.where(empty.unsqueeze(1), torch.zeros_like(total), total / denom)
        if mode == "cnn":
            k = config.context_kernel
            ids = batch.ctx_ids
            if tc < k:
                ids = F.pad(ids, (0, k - tc))
            emb = self.embed(ids).transpose(1, 2)  # (B, word_dim, Tc)
            conv = torch.relu(self.context_conv(emb))  # (B, filters, Tc-k+1)
            positions = conv.shape[2]
            valid = (batch.ctx_lengths.clamp(min=k) - k + 1).clamp(max=positions)
            mask = _length_mask(valid, positions)
            conv = conv.masked_fill(~mask.unsqueeze(1), float("-inf"))
            pooled = conv.max(dim=2).values
            return pooled.masked_fill(empty.unsqueeze(1), 0.0)
        if mode == "tfidf":
            counts = torch.zeros((n, self.vocab_size), dtype=dtype)
            mask = _length_mask(batch.ctx_lengths, tc).to(dtype)
            counts.scatter_add_(1, batch.ctx_ids, mask)
            weighted = counts * self.idf
            norms = weighted.norm(dim=1, keepdim=True).clamp(min=1e-12)
            projected = self.tfidf_proj(weighted / norms)
            return projected.masked_fill(empty.unsqueeze(1), 0.0)
        raise ConfigError(f"unknown context mode {mode!r}")

    def _finish(self, pooled: torch.Tensor, batch: Batch) -> torch.Tensor:
        config = self.config
        parts = [pooled]
        if config.use_turn:
            parts.append(self.turn_embed(batch.turn.clamp(max=config.turn_buckets - 1)))
        if config.use_sentiment:
            parts.append(batch.sentiment.to(pooled.dtype))
        if config.use_char:
            parts.append(self.char_proj(batch.char.to(pooled.dtype)))
        context = self._context_vector(batch)
        if context is not None:
            parts.append(context)
        final = torch.cat(parts, dim=1)
        final = F.dropout(final, p=config.dropout_p, training=self.training)
        logits = self.output(final)
        if not torch.isfinite(logits).all():
            raise NumericError("non-finite logits in forward pass")
        return logits

    def predict_proba_batch(self, batch: Batch) -> torch.Tensor:
        return F.softmax(self(batch), dim=1)


class RcnnNet(_StrategyNet):
    """Hybrid recurrent-convolutional sentence classifier.

    Per token: the word embedding is concatenated with both LSTM directions'
    hidden states, passed through a tanh transformation, and max-pooled over
    time. In ``rnn`` context mode the previous persuadee utterance's LSTM
    state initializes both directions.
    """

    def __init__(self, config: RcnnConfig, embedding_matrix: np.ndarray):
        super().__init__(config, embedding_matrix)
        self.rnn = nn.LSTM(
            config.word_dim, config.lstm_hidden, batch_first=True, bidirectional=True
        )
        self.transform = nn.Linear(config.word_dim + 2 * config.lstm_hidden, config.latent_dim)
        self.pooled_dim = config.latent_dim
        self._init_features()

    def _concatenates_rnn_context(self) -> bool:
        return False

    def _initial_state(self, batch: Batch):
        if self.config.context_mode != "rnn":
            return None
        state = self._context_state(batch)  # (B, hidden)
        h0 = state.unsqueeze(0).expand(2, -1, -1).contiguous()
        c0 = torch.zeros_like(h0)
        return (h0, c0)

    def forward(self, batch: Batch) -> torch.Tensor:
        emb = self.embed(batch.ids)  # (B, T, word_dim)
        packed = pack_padded_sequence(
            emb, batch.lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.rnn(packed, self._initial_state(batch))
        states, _ = pad_packed_sequence(out, batch_first=True, total_length=emb.shape[1])
        combined = torch.cat([emb, states], dim=2)
        latent = torch.tanh(self.transform(combined))
        mask = _length_mask(batch.lengths, emb.shape[1])
        latent = latent.masked_fill(~mask.unsqueeze(2), float("-inf"))
        pooled = latent.max(dim=1).values
        return self._finish(pooled, batch)


class BlstmAttentionNet(_StrategyNet):
    """Bidirectional LSTM pooled with additive self-attention."""

    def __init__(self, config: RcnnConfig, embedding_matrix: np.ndarray):
        super().__init__(config, embedding_matrix)
        self.rnn = nn.LSTM(
            config.word_dim, config.lstm_hidden, batch_first=True, bidirectional=True
        )
        self.attn_w = nn.Linear(2 * config.lstm_hidden, config.attention_dim)
        self.attn_v = nn.Linear(config.attention_dim, 1, bias=False)
        self.pooled_dim = 2 * config.lstm_hidden
        self._init_features()

    def _initial_state(self, batch: Batch):
        if self.config.context_mode != "rnn":
            return None
        state = self._context_state(batch)
        h0 = state.unsqueeze(0).expand(2, -1, -1).contiguous()
        return (h0, torch.zeros_like(h0))

    def _states(self, batch: Batch) -> tuple[torch.Tensor, torch.Tensor]:
        emb = self.embed(batch.ids)
        packed = pack_padded_sequence(
            emb, batch.lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.rnn(packed, self._initial_state(batch))
        states, _ = pad_packed_sequence(out, batch_first=True, total_length=emb.shape[1])
        return states, _length_mask(batch.lengths, emb.shape[1])

    def attention_weights(self, batch: Batch) -> torch.Tensor:
        states, mask = self._states(batch)
        return self._attend(states, mask)[1]

    def _attend(self, states: torch.Tensor, mask: torch.Tensor):
        scores = self.attn_v(torch.tanh(self.attn_w(states))).squeeze(2)  # (B, T)
        scores = scores.masked_fill(~mask, float("-inf"))
        weights = F.softmax(scores, dim=1)
        pooled = torch.bmm(weights.unsqueeze(1), states).squeeze(1)
        return pooled, weights

    def forward(self, batch: Batch) -> torch.Tensor:
        states, mask = self._states(batch)
        pooled, _ = self._attend(states, mask)
        return self._finish(pooled, batch)


class CnnNet(_StrategyNet):
    """Multi-width convolutional classifier with max-over-time pooling."""

    def __init__(self, config: RcnnConfig, embedding_matrix: np.ndarray):
        super().__init__(config, embedding_matrix)
        self.convs = nn.ModuleList(
            nn.Conv1d(config.word_dim, config.cnn_feature_maps, w)
            for w in config.cnn_filter_widths
        )
        self.pooled_dim = config.cnn_feature_maps * len(config.cnn_filter_widths)
        self._init_features()

    def _concatenates_rnn_context(self) -> bool:
        return True

    def forward(self, batch: Batch) -> torch.Tensor:
        max_width = max(self.config.cnn_filter_widths)
        ids = batch.ids
        if ids.shape[1] < max_width:
            ids = F.pad(ids, (0, max_width - ids.shape[1]))  # zero-vector padding
        emb = self.embed(ids).transpose(1, 2)  # (B, word_dim, T)
        pooled_parts = []
        for conv in self.convs:
            width = conv.kernel_size[0]
            out = torch.relu(conv(emb))  # (B, maps, T-w+1)
            positions = out.shape[2]
            valid = (batch.lengths.clamp(min=width) - width + 1).clamp(max=positions)
            mask = _length_mask(valid, positions)
            out = out.masked_fill(~mask.unsqueeze(1), float("-inf"))
            pooled_parts.append(out.max(dim=2).values)
        pooled = torch.cat(pooled_parts, dim=1)
        return self._finish(pooled, batch)


def build_net(arch: str, config: RcnnConfig, embedding_matrix: np.ndarray) -> _StrategyNet:
    try:
        cls = {"rcnn": RcnnNet, "blstm": BlstmAttentionNet, "cnn": CnnNet}[arch]
    except KeyError:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}") from None
    return cls(config, embedding_matrix)


def _check_params_finite(net: nn.Module) -> None:
    for name, param in net.named_parameters():
        if not torch.isfinite(param).all():
            raise NumericError(f"parameter {name} contains non-finite values")


def predict_logits(
    net: _StrategyNet, bundles: Sequence[FeatureBundle], batch_size: int = 128
) -> np.ndarray:
    """Evaluation-mode logits for a list of bundles."""
    _check_params_finite(net)
    net.eval()
    dtype = net.embed.weight.dtype
    chunks = []
    with torch.no_grad():
        for start in range(0, len(bundles), batch_size):
            batch = collate(bundles[start : start + batch_size], net.config, dtype)
            chunks.append(net(batch).numpy())
    return np.concatenate(chunks, axis=0)


def predict_proba(net: _StrategyNet, bundles: Sequence[FeatureBundle], batch_size: int = 128) -> np.ndarray:
    logits = predict_logits(net, bundles, batch_size)
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


class MajorityClassifier(BaseEstimator, ClassifierMixin):
    """Constant classifier predicting the most frequent training class."""

    def __init__(self, n_classes: int = N_CLASSES):
        self.n_classes = n_classes

    def fit(self, X, y) -> "MajorityClassifier":
        y = np.asarray(y)
        if y.size == 0:
            raise ValueError("empty label array")
        counts = np.bincount(y, minlength=self.n_classes)
        self.counts_ = counts
        self.majority_ = int(np.argmax(counts))  # first max: lowest class index wins ties
        return self

    def predict(self, X) -> np.ndarray:
        return np.full(len(X), self.majority_, dtype=np.int64)

    def predict_proba(self, X) -> np.ndarray:
        proba = np.zeros((len(X), self.n_classes))
        proba[:, self.majority_] = 1.0
        return proba


def majority_predict(train_labels: Sequence[int], n_classes: int = N_CLASSES) -> MajorityClassifier:
    """Fit the majority-vote baseline on integer class labels."""
    return MajorityClassifier(n_classes=n_classes).fit(None, train_labels)


CHECKPOINT_FORMAT = "persuade-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    arch: str,
    net: _StrategyNet,
    vocab_tokens: Sequence[str],
    class_values: Sequence[str],
    t_max: int,
) -> None:
    """Write a versioned checkpoint: config header plus named parameter blocks."""
    config = asdict(net.config)
    config["cnn_filter_widths"] = list(config["cnn_filter_widths"])
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": arch,
        "config": config,
        "t_max": t_max,
        "vocab": list(vocab_tokens),
        "classes": list(class_values),
        "state": {k: v.clone() for k, v in net.state_dict().items()},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[_StrategyNet, Vocabulary, dict]:
    """Rebuild a net (and its vocabulary) from a checkpoint file."""
    payload = torch.load(path, weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a classifier checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    config_dict = dict(payload["config"])
    config_dict["cnn_filter_widths"] = tuple(config_dict["cnn_filter_widths"])
    config = RcnnConfig(**config_dict)
    state = payload["state"]
    net = build_net(payload["arch"], config, state["embed.weight"].numpy())
    net.load_state_dict(state)
    net.eval()
    vocab = Vocabulary(payload["vocab"])
    meta = {k: payload[k] for k in ("arch", "classes", "t_max")}
    return net, vocab, meta
