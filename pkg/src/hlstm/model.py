"""Hierarchical bidirectional LSTM and its sentence-level baseline.

Sentence encoder: word embeddings -> dropout -> sentence BiLSTM ->
``[h_fw ; h_bw ; a]`` where ``a`` is the mean of the entity and attribute
embeddings.  The hierarchical model runs a second BiLSTM over the sequence of
sentence vectors of a review and classifies every step; the baseline
classifies each sentence vector directly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from . import tensor as T
from .data import ReviewBatch
from .errors import ConfigError, ShapeError
from .layers import LstmParams, affine_softmax, bilstm, dropout, embedding_lookup, glorot_uniform
from .tensor import Tensor

MODEL_KINDS = ("hlstm", "baseline")


@dataclass
class ModelConfig:
    vocab_size: int
    n_entities: int
    n_attributes: int
    word_dim: int = 300
    aspect_dim: int = 15
    hidden: int = 200
    dropout: float = 0.5
    n_classes: int = 3
    kind: str = "hlstm"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")

    @property
    def sentence_dim(self) -> int:
        return 2 * self.hidden + self.aspect_dim

    def to_dict(self):
        return asdict(self)


class ModelParams:
    """All trainable arrays, addressable by dotted name."""

    def __init__(self, config: ModelConfig, tensors: Dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.values())

    def items(self):
        return self.tensors.items()

    def lstm(self, prefix: str) -> LstmParams:
        g = lambda kind: {x: self.tensors[f"{prefix}.{kind}_{x}"] for x in "ifoc"}  # noqa: E731
        return LstmParams(g("W"), g("U"), g("b"))

    def shapes(self):
        return {k: v.shape for k, v in self.tensors.items()}

    def copy_arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            if self.tensors[k].shape != v.shape:
                raise ShapeError(f"{k}: expected {self.tensors[k].shape}, got {v.shape}")
            self.tensors[k].data = np.array(v, dtype=self.tensors[k].dtype, copy=True)

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator, dtype=np.float32,
             word_table: Optional[np.ndarray] = None) -> "ModelParams":
        c = config
        if word_table is None:
            word_table = glorot_uniform(rng, c.vocab_size, c.word_dim, dtype=dtype)
            word_table[0] = 0.0
        elif word_table.shape != (c.vocab_size, c.word_dim):
            raise ShapeError(f"word table {word_table.shape} != {(c.vocab_size, c.word_dim)}")
        tensors = {
            "word_table": T.parameter(word_table.astype(dtype), "word_table"),
            "entity_table": T.parameter(glorot_uniform(rng, c.n_entities, c.aspect_dim, dtype=dtype),
                                        "entity_table"),
            "attribute_table": T.parameter(glorot_uniform(rng, c.n_attributes, c.aspect_dim, dtype=dtype),
                                           "attribute_table"),
        }
        layers = [("sent_fw", c.word_dim), ("sent_bw", c.word_dim)]
        if c.kind == "hlstm":
            layers += [("rev_fw", c.sentence_dim), ("rev_bw", c.sentence_dim)]
        for prefix, in_dim in layers:
            p = LstmParams.init(in_dim, c.hidden, rng, dtype=dtype, prefix=prefix)
            tensors.update({f"{prefix}.{k}": v for k, v in p.tensors().items()})
        head_in = 2 * c.hidden if c.kind == "hlstm" else c.sentence_dim
        tensors["out_W"] = T.parameter(glorot_uniform(rng, head_in, c.n_classes, dtype=dtype), "out_W")
        tensors["out_b"] = T.parameter(np.zeros(c.n_classes, dtype=dtype), "out_b")
        return cls(config, tensors)


def aspect_embed(entity_idx, attribute_idx, params: ModelParams) -> Tensor:
    """``(x_e + x_a) / 2`` for scalar or array indices."""
    e = embedding_lookup(entity_idx, params["entity_table"])
    a = embedding_lookup(attribute_idx, params["attribute_table"])
    return T.scale(T.add(e, a), 0.5)


def encode_sentences(tokens, token_mask, entity, attribute, sentence_mask, params: ModelParams,
                     training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Encode ``N`` sentences (``tokens [N, l]``) to ``[N, 2d + m]``.

    A sentence with ``sentence_mask == 0`` encodes to all zeros, aspect slot
    included.
    """
    cfg = params.config
    token_mask = np.asarray(token_mask, dtype=bool)
    sentence_mask = np.asarray(sentence_mask, dtype=bool)
    x = embedding_lookup(tokens, params["word_table"])
    x = dropout(x, cfg.dropout, training, rng)
    _, (fin_fw, fin_bw) = bilstm(x, token_mask, params.lstm("sent_fw"), params.lstm("sent_bw"))
    asp = aspect_embed(entity, attribute, params)
    if not sentence_mask.all():
        asp = T.where(sentence_mask[:, None], asp, Tensor(np.zeros(asp.shape, dtype=asp.dtype)))
    return T.concat([fin_fw.h, fin_bw.h, asp], axis=1)


def encode_sentence(tokens, mask, aspect, params: ModelParams, training=False, rng=None) -> Tensor:
    """Single-sentence form of :func:`encode_sentences`; ``aspect`` is ``(entity_idx, attribute_idx)``."""
    tokens = np.asarray(tokens)[None, :]
    mask = np.asarray(mask, dtype=bool)[None, :]
    real = np.array([mask.any()])
    out = encode_sentences(tokens, mask, [aspect[0]], [aspect[1]], real, params, training, rng)
    return T.reshape(out, (-1,))


def _uniform_for_padding(probs: Tensor, sentence_mask: np.ndarray) -> Tensor:
    if sentence_mask.all():
        return probs
    c = probs.shape[-1]
    uniform = Tensor(np.full(probs.shape, 1.0 / c, dtype=probs.dtype))
    return T.where(sentence_mask[..., None], probs, uniform)


class HierarchicalLSTM:
    """Sentence BiLSTM feeding a review BiLSTM with a per-sentence softmax head."""

    kind = "hlstm"

    def __init__(self, params: ModelParams):
        if params.config.kind != "hlstm":
            raise ConfigError("HierarchicalLSTM needs hlstm parameters")
        self.params = params

    @property
    def config(self):
        return self.params.config

    def forward(self, batch: ReviewBatch, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """Class distributions ``[B, h, C]``; padded slots hold a uniform placeholder."""
        p, cfg = self.params, self.params.config
        b, h, l = batch.tokens.shape
        sents = encode_sentences(batch.tokens.reshape(b * h, l), batch.token_mask.reshape(b * h, l),
                                 batch.entity.reshape(-1), batch.attribute.reshape(-1),
                                 batch.sentence_mask.reshape(-1), p, training, rng)
        seq = T.reshape(sents, (b, h, cfg.sentence_dim))
        seq = dropout(seq, cfg.dropout, training, rng)
        out, _ = bilstm(seq, batch.sentence_mask, p.lstm("rev_fw"), p.lstm("rev_bw"))
        out = dropout(out, cfg.dropout, training, rng)
        probs = affine_softmax(T.reshape(out, (b * h, 2 * cfg.hidden)), p["out_W"], p["out_b"])
        probs = T.reshape(probs, (b, h, cfg.n_classes))
        return _uniform_for_padding(probs, batch.sentence_mask)


class SentenceBaseline:
    """The sentence encoder alone with its own softmax head; blind to review context."""

    kind = "baseline"

    def __init__(self, params: ModelParams):
        if params.config.kind != "baseline":
            raise ConfigError("SentenceBaseline needs baseline parameters")
        self.params = params

    @property
    def config(self):
        return self.params.config

    def forward(self, batch: ReviewBatch, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        p, cfg = self.params, self.params.config
        b, h, l = batch.tokens.shape
        sents = encode_sentences(batch.tokens.reshape(b * h, l), batch.token_mask.reshape(b * h, l),
                                 batch.entity.reshape(-1), batch.attribute.reshape(-1),
                                 batch.sentence_mask.reshape(-1), p, training, rng)
        sents = dropout(sents, cfg.dropout, training, rng)
        probs = T.reshape(affine_softmax(sents, p["out_W"], p["out_b"]), (b, h, cfg.n_classes))
        return _uniform_for_padding(probs, batch.sentence_mask)

    def forward_sentence(self, tokens, mask, aspect, training=False, rng=None) -> Tensor:
        """Distribution for a single sentence, ``[C]``."""
        enc = encode_sentence(tokens, mask, aspect, self.params, training, rng)
        enc = dropout(enc, self.config.dropout, training, rng)
        return affine_softmax(enc, self.params["out_W"], self.params["out_b"])


def forward_sentence_baseline(tokens, mask, aspect, params: ModelParams, training=False, rng=None):
    return SentenceBaseline(params).forward_sentence(tokens, mask, aspect, training, rng)


def build_model(params: ModelParams):
    return HierarchicalLSTM(params) if params.config.kind == "hlstm" else SentenceBaseline(params)


def predict_labels(probs, sentence_mask) -> list:
    """Argmax per real slot (lowest class index wins ties); ``None`` for padding."""
    probs = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    sentence_mask = np.asarray(sentence_mask, dtype=bool)
    labels = np.argmax(probs, axis=-1)
    return [[int(labels[i, j]) if sentence_mask[i, j] else None for j in range(labels.shape[1])]
            for i in range(labels.shape[0])]


def predict(model, batch: ReviewBatch) -> list:
    """Per-review lists of predicted class indices for the real slots, dropout off."""
    probs = model.forward(batch, training=False)
    rows = predict_labels(probs, batch.sentence_mask)
    return [[x for x in row if x is not None] for row in rows]
