"""GRU encoder-decoder with shared embedding and dot/bilinear attention.

The network embeds source and target tokens through one shared embedding
matrix, encodes the source with a unidirectional GRU, and decodes with a
second GRU whose hidden state starts from the final encoder state.  At each
decode step an attention distribution over the (unpadded) encoder states
produces a context vector, and a two-layer head predicts the next token.
Training minimizes negative log-likelihood under teacher forcing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .corpus import BOS, EOS, PAD, Batch, EncodedPair, Vocabulary, batches, make_batch
from .params import ParamStore, TrainConfig
from .tensor import Tensor, backward

_MASK_SCORE = 1e30  # subtracted from attention scores at padded positions

ATTENTION_KINDS = ("dot", "bilinear")


@dataclass
class ModelConfig:
    vocab_size: int
    embed_dim: int = 300
    hidden_size: int = 300
    output_size: int = 256
    max_source_len: int = 89
    max_target_len: int = 64
    attention: str = "dot"
    dropout: float = 0.2
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_size", "output_size", "max_source_len", "max_target_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.attention not in ATTENTION_KINDS:
            raise ValueError(f"attention must be one of {ATTENTION_KINDS}, got {self.attention!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class EncoderOutput:
    """Stacked encoder hidden states with a validity mask per position."""

    states: Tensor  # (b, L, H)
    mask: np.ndarray  # (b, L) float, 1 at real tokens
    final: Tensor  # (b, H), hidden state at each row's last real token
    lengths: np.ndarray


@dataclass
class DecodeStepOutput:
    logits: Tensor  # (b, V) pre-softmax scores
    hidden: Tensor  # (b, H)
    attn: Tensor  # (b, L), a distribution over unmasked source positions
    context: Tensor  # (b, H)

    @property
    def probs(self) -> np.ndarray:
        x = self.logits.data
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


def gru_cell(x, h_prev, w_update, u_update, w_reset, u_reset, w_candidate, u_candidate) -> Tensor:
    """One GRU step in row convention: inputs (b, D), hidden (b, H)."""
    z = T.sigmoid(T.add(T.matmul(x, w_update), T.matmul(h_prev, u_update)))
    r = T.sigmoid(T.add(T.matmul(x, w_reset), T.matmul(h_prev, u_reset)))
    candidate = T.tanh(T.add(T.matmul(x, w_candidate), T.matmul(T.mul(r, h_prev), u_candidate)))
    return T.add(T.mul(T.one_minus(z), candidate), T.mul(z, h_prev))


_GATES = ("update", "reset", "candidate")


class FCRGModel:
    """Fact-checking response generator network."""

    def __init__(self, config: ModelConfig, params: Optional[ParamStore] = None):
        self.config = config
        self._np_dtype = np.float32 if config.dtype == "float32" else np.float64
        self._dropout_rng = np.random.default_rng(config.seed + 1)
        if params is not None:
            self.params = params
            self._check_layout()
        else:
            self.params = ParamStore()
            self._init_params()

    # -- construction -------------------------------------------------

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        dt = self._np_dtype
        # Shared embedding, standard Normal init.
        self.params.add("embedding", rng.standard_normal((cfg.embed_dim, cfg.vocab_size)).astype(dt), partition="shared")
        bound = 1.0 / np.sqrt(cfg.hidden_size)

        def uniform(shape):
            return rng.uniform(-bound, bound, size=shape).astype(dt)

        for side, partition in (("enc", "encoder"), ("dec", "decoder")):
            for gate in _GATES:
                self.params.add(f"{side}_{gate}_x", uniform((cfg.embed_dim, cfg.hidden_size)), partition=partition)
                self.params.add(f"{side}_{gate}_h", uniform((cfg.hidden_size, cfg.hidden_size)), partition=partition)
        if cfg.attention == "bilinear":
            self.params.add("attn_bilinear", uniform((cfg.hidden_size, cfg.hidden_size)), partition="decoder")
        self.params.add("out_hidden", uniform((2 * cfg.hidden_size, cfg.output_size)), partition="decoder")
        self.params.add("out_vocab", uniform((cfg.output_size, cfg.vocab_size)), partition="decoder")

    def _check_layout(self) -> None:
        expected = {"embedding", "out_hidden", "out_vocab"}
        expected.update(f"{s}_{g}_{xh}" for s in ("enc", "dec") for g in _GATES for xh in ("x", "h"))
        if self.config.attention == "bilinear":
            expected.add("attn_bilinear")
        missing = expected - set(self.params.names())
        if missing:
            raise ValueError(f"parameter store missing {sorted(missing)}")

    # -- forward pieces ------------------------------------------------

    def embed(self, ids, train: bool = False) -> Tensor:
        out = T.embedding_lookup(self.params["embedding"], np.asarray(ids, dtype=np.int64))
        return T.dropout(out, self.config.dropout, self._dropout_rng, train=train)

    def _gru(self, side: str, x: Tensor, h_prev: Tensor) -> Tensor:
        p = self.params
        return gru_cell(
            x, h_prev,
            p[f"{side}_update_x"], p[f"{side}_update_h"],
            p[f"{side}_reset_x"], p[f"{side}_reset_h"],
            p[f"{side}_candidate_x"], p[f"{side}_candidate_h"],
        )

    def encode(self, source: np.ndarray, lengths: np.ndarray, train: bool = False) -> EncoderOutput:
        """Run the encoder GRU over real tokens; padded rows hold their last state."""
        source = np.atleast_2d(np.asarray(source, dtype=np.int64))
        lengths = np.asarray(lengths, dtype=np.int64)
        b, max_len = source.shape
        if max_len == 0 or lengths.min() < 1:
            raise ValueError("encode: empty source sequence")
        dt = self._np_dtype
        h = Tensor(np.zeros((b, self.config.hidden_size), dtype=dt))
        states: list[Tensor] = []
        for t in range(max_len):
            x = self.embed(source[:, t], train=train)
            h_new = self._gru("enc", x, h)
            alive = (t < lengths).astype(dt)[:, None]
            h = T.add(T.mul(h_new, Tensor(alive)), T.mul(h, Tensor(1.0 - alive)))
            states.append(h)
        mask = (np.arange(max_len)[None, :] < lengths[:, None]).astype(dt)
        return EncoderOutput(states=T.stack(states, axis=1), mask=mask, final=h, lengths=lengths)

    def attention_weights(self, encoded: EncoderOutput, hidden: Tensor) -> Tensor:
        """Alignment distribution over unmasked source positions."""
        if encoded.mask.sum() == 0:
            raise ValueError("attention: all source positions are masked")
        if self.config.attention == "bilinear":
            hidden = T.matmul(hidden, self.params["attn_bilinear"])
        k = hidden.shape[0]
        query = T.reshape(hidden, (k, 1, hidden.shape[1]))
        scores = T.reduce_sum(T.mul(encoded.states, query), axis=2)  # (k, L)
        scores = T.add(scores, Tensor((encoded.mask - 1.0) * _MASK_SCORE))
        return T.softmax(scores, axis=1)

    def decode_step(self, prev_ids, h_prev: Tensor, encoded: EncoderOutput, train: bool = False) -> DecodeStepOutput:
        x = self.embed(prev_ids, train=train)
        h = self._gru("dec", x, h_prev)
        attn = self.attention_weights(encoded, h)
        k, length = attn.shape
        context = T.reduce_sum(T.mul(encoded.states, T.reshape(attn, (k, length, 1))), axis=1)
        features = T.concat([context, h], axis=1)
        features = T.dropout(features, self.config.dropout, self._dropout_rng, train=train)
        logits = T.matmul(T.tanh(T.matmul(features, self.params["out_hidden"])), self.params["out_vocab"])
        return DecodeStepOutput(logits=logits, hidden=h, attn=attn, context=context)

    # -- training objective ---------------------------------------------

    def sequence_nll(self, batch: Batch, train: bool = False) -> tuple[Tensor, int]:
        """Teacher-forced negative log-likelihood, summed over the batch.

        <s> is input-only; every gold token after it (including </s>) is a
        prediction target.  Pad positions contribute zero loss and gradients.
        Returns (scalar loss, number of scored tokens).
        """
        target = batch.target
        token_count = int((target[:, 1:] != PAD).sum())
        if token_count == 0:
            raise ValueError("sequence_nll: batch contains no target tokens")
        encoded = self.encode(batch.source, batch.source_lengths, train=train)
        h = encoded.final
        pieces: list[Tensor] = []
        for j in range(target.shape[1] - 1):
            gold = target[:, j + 1]
            step_mask = (gold != PAD).astype(self._np_dtype)
            if not step_mask.any():
                break
            out = self.decode_step(target[:, j], h, encoded, train=train)
            h = out.hidden
            log_probs = T.log_softmax(out.logits, axis=1)
            picked = T.pick(log_probs, gold)
            pieces.append(T.reduce_sum(T.mul(picked, Tensor(step_mask))))
        loss = T.scale(T.reduce_sum(T.stack(pieces, axis=0)), -1.0)
        return loss, token_count

    # -- embedding inspection ---------------------------------------------

    def nearest_neighbors(self, vocab: Vocabulary, word: str, k: int = 10) -> list[tuple[str, float]]:
        """Top-k vocabulary words by embedding cosine similarity to ``word``.

        The query and reserved tokens are excluded; ties break by id; k is
        clamped to the number of available words.
        """
        if word not in vocab:
            raise ValueError(f"word {word!r} is not in the vocabulary")
        query_id = vocab.token_to_id[word]
        emb = self.params["embedding"].data  # (D, V)
        norms = np.linalg.norm(emb, axis=0)
        norms[norms == 0] = 1.0
        query = emb[:, query_id] / norms[query_id]
        sims = (emb / norms).T @ query
        candidates = [i for i in range(vocab.size) if i >= 4 and i != query_id]
        candidates.sort(key=lambda i: (-sims[i], i))
        return [(vocab.id_to_token[i], float(sims[i])) for i in candidates[:k]]


@dataclass
class EpochRecord:
    epoch: int
    train_nll_per_token: float
    validation_nll_per_token: float


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_validation_nll: float


def validation_nll(model: FCRGModel, pairs: Sequence[EncodedPair], batch_size: int = 32) -> float:
    """Per-token NLL over a split with dropout disabled."""
    total, tokens = 0.0, 0
    for batch in batches(pairs, batch_size):
        loss, n = model.sequence_nll(batch, train=False)
        total += loss.item()
        tokens += n
    return total / tokens


def train_model(
    model: FCRGModel,
    train_pairs: Sequence[EncodedPair],
    val_pairs: Sequence[EncodedPair],
    config: TrainConfig,
    *,
    shuffle_seed: int = 0,
    log=None,
) -> TrainResult:
    """Adam training with gradient clipping and patience-based early stopping.

    Stops once validation per-token NLL fails to improve for ``patience``
    consecutive epochs; the best-validation parameters are restored before
    returning.
    """
    if not train_pairs or not val_pairs:
        raise ValueError("train and validation splits must be non-empty")
    store = model.params
    history: list[EpochRecord] = []
    best = float("inf")
    best_epoch = 0
    best_state: Optional[dict] = None
    stale = 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        epoch_loss, epoch_tokens = 0.0, 0
        for batch in batches(train_pairs, config.batch_size, shuffle_seed=shuffle_seed + epoch):
            store.zero_grads()
            loss, n = model.sequence_nll(batch, train=True)
            value = loss.item()
            if not np.isfinite(value):
                raise RuntimeError(f"training diverged at epoch {epoch}: loss={value}")
            backward(loss)
            store.clip_gradients(config.clip_norm)
            step += 1
            store.adam_step(config, step)
            epoch_loss += value
            epoch_tokens += n
        val = validation_nll(model, val_pairs, config.batch_size)
        record = EpochRecord(epoch, epoch_loss / epoch_tokens, val)
        history.append(record)
        if log is not None:
            log(record)
        if val < best - 1e-12:
            best = val
            best_epoch = epoch
            best_state = store.state()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_state is not None:
        store.load_state(best_state)
    return TrainResult(history=history, best_epoch=best_epoch, best_validation_nll=best)


def encode_single(model: FCRGModel, source_ids: Sequence[int]) -> EncoderOutput:
    """Encoder output for one source sequence (batch of one)."""
    arr = np.asarray(source_ids, dtype=np.int64)[None, :]
    return model.encode(arr, np.array([len(source_ids)], dtype=np.int64))
