"""Training loop: Adam, global-norm clipping, mini-batches, early stopping, metrics."""

from __future__ import annotations

import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import tensor as T
from .data import EncodedReview, ReviewBatch, pad_and_mask
from .errors import ConfigError
from .layers import masked_cross_entropy

log = logging.getLogger(__name__)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose (init, dropout, shuffle, synth, ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 10
    patience: int = 10
    dropout_rate: float = 0.5
    max_epochs: int = 200
    seed: int = 42
    word_dim: int = 300
    aspect_dim: int = 15
    hidden: int = 200
    l2: float = 0.0
    val_fraction: float = 0.1
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1)")
        for name in ("adam_eps", "clip_norm", "batch_size", "max_epochs", "word_dim",
                     "aspect_dim", "hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate < 0 or self.patience < 1:
            raise ConfigError("learning_rate must be >= 0 and patience >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2 != 0.0:
            raise ConfigError("l2 regularization is not supported (fixed at 0)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def global_norm(grads: Dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float = 5.0) -> Dict[str, np.ndarray]:
    """Rescale all gradients jointly when their global L2 norm exceeds ``max_norm``."""
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    factor = max_norm / norm
    return {k: g * np.asarray(factor, dtype=g.dtype) for k, g in grads.items()}


def adam_step(params: Dict[str, T.Tensor], grads: Dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data - step).astype(p.dtype, copy=False)
    return state


def iter_batches(data: Sequence[EncodedReview], batch_size: int,
                 rng: Optional[np.random.Generator] = None, max_len: Optional[int] = None,
                 max_sents: Optional[int] = None):
    """Yield ``(reviews, ReviewBatch)``; reviews are shuffled when ``rng`` is given."""
    order = np.arange(len(data))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        chunk = [data[i] for i in order[start:start + batch_size]]
        l = max(len(s) for r in chunk for s in r.token_ids)
        h = max(len(r) for r in chunk)
        if max_len:
            l = min(l, max_len)
        if max_sents:
            h = min(h, max_sents)
        yield chunk, pad_and_mask(chunk, l, h)


def loss_and_grads(model, batch: ReviewBatch, training: bool, rng) -> tuple:
    with T.Tape() as tape:
        probs = model.forward(batch, training=training, rng=rng)
        res = masked_cross_entropy(probs, batch.labels, batch.sentence_mask)
    if res.empty:
        return 0.0, 0, {}
    leaf_grads = tape.backward(res.loss)
    grads = {name: leaf_grads[p] for name, p in model.params.items() if p in leaf_grads}
    return float(res.loss.data), res.n_real, grads


def run_epoch(model, data: Sequence[EncodedReview], cfg: TrainConfig, shuffle_rng, dropout_rng,
              adam: AdamState, max_len=None, max_sents=None) -> float:
    """One pass of forward, loss, backward, clip and Adam per mini-batch; returns mean batch loss."""
    if not data:
        raise ConfigError("cannot train on an empty dataset")
    losses = []
    params = model.params.tensors
    for _, batch in iter_batches(data, cfg.batch_size, shuffle_rng, max_len, max_sents):
        loss, n_real, grads = loss_and_grads(model, batch, True, dropout_rng)
        if n_real == 0:
            continue
        grads = clip_gradients(grads, cfg.clip_norm)
        adam_step(params, grads, adam, cfg)
        losses.append(loss)
    return float(np.mean(losses)) if losses else 0.0


def early_stop_check(history: Sequence[float], patience: int = 10):
    """Return ``(stop, best_epoch)`` with 1-based epochs; ties keep the first maximum."""
    if not history:
        raise ValueError("history must be non-empty")
    best = int(np.argmax(history)) + 1
    return len(history) - best >= patience, best


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray
    n: int

    @property
    def per_class_counts(self) -> List[int]:
        return [int(x) for x in self.confusion.sum(axis=1)]

    def to_dict(self):
        return {"accuracy": self.accuracy, "n": self.n, "confusion": self.confusion.tolist(),
                "per_class_counts": self.per_class_counts}


def predict_dataset(model, data: Sequence[EncodedReview], batch_size: int = 32,
                    max_len=None, max_sents=None) -> List[List[int]]:
    out = []
    for chunk, batch in iter_batches(data, batch_size, None, max_len, max_sents):
        probs = model.forward(batch, training=False).data
        labels = np.argmax(probs, axis=-1)
        for i, r in enumerate(chunk):
            out.append([int(x) for x in labels[i, :min(len(r), batch.shape[1])]])
    return out


def evaluate(model, data: Sequence[EncodedReview], batch_size: int = 32, n_classes: int = 3,
             max_len=None, max_sents=None) -> EvalResult:
    """Accuracy over real labeled instances plus a gold-by-predicted confusion matrix."""
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for r, pred in zip(data, predict_dataset(model, data, batch_size, max_len, max_sents)):
        for gold, p in zip(r.labels, pred):
            if gold >= 0:
                confusion[gold, p] += 1
    n = int(confusion.sum())
    acc = float(np.trace(confusion) / n) if n else 0.0
    return EvalResult(acc, confusion, n)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    elapsed_ms: int


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0
    wall_time: float = 0.0

    @property
    def best_val_acc(self) -> float:
        return max((e.val_acc for e in self.epochs), default=0.0)

    def to_jsonl(self, timing: bool = True) -> str:
        lines = []
        for e in self.epochs:
            rec = asdict(e)
            if not timing:
                del rec["elapsed_ms"]
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainReport":
        recs = [json.loads(x) for x in text.splitlines() if x.strip()]
        report = cls([EpochRecord(r["epoch"], r["train_loss"], r["val_acc"], r.get("elapsed_ms", 0))
                      for r in recs])
        if recs:
            _, report.best_epoch = early_stop_check([r.val_acc for r in report.epochs], 10 ** 9)
            report.stop_epoch = len(recs)
        return report


def split_validation(data: Sequence[EncodedReview], fraction: float, seed: int):
    """Hold out a seeded fraction of whole reviews for early stopping."""
    if fraction <= 0 or len(data) < 2:
        return list(data), []
    n_val = max(1, int(round(fraction * len(data))))
    order = rng_stream(seed, "split").permutation(len(data))
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(data) if i not in val_idx]
    val = [r for i, r in enumerate(data) if i in val_idx]
    return train, val


def train(model, train_data: Sequence[EncodedReview], val_data: Optional[Sequence[EncodedReview]],
          cfg: TrainConfig, max_len=None, max_sents=None) -> TrainReport:
    """Fit ``model`` with early stopping on ``val_data`` (training data when empty).

    On return the model holds the parameters of the best epoch.
    """
    if not train_data:
        raise ConfigError("cannot train on an empty dataset")
    monitor = val_data if val_data else train_data
    shuffle_rng = rng_stream(cfg.seed, "shuffle")
    dropout_rng = rng_stream(cfg.seed, "dropout")
    adam = AdamState()
    report = TrainReport()
    history: List[float] = []
    best_arrays = model.params.copy_arrays()
    start = time.perf_counter()
    for epoch in range(1, cfg.max_epochs + 1):
        loss = run_epoch(model, train_data, cfg, shuffle_rng, dropout_rng, adam, max_len, max_sents)
        acc = evaluate(model, monitor, max_len=max_len, max_sents=max_sents).accuracy
        elapsed = int((time.perf_counter() - start) * 1000)
        report.epochs.append(EpochRecord(epoch, loss, acc, elapsed))
        history.append(acc)
        stop, best = early_stop_check(history, cfg.patience)
        if best == epoch:
            best_arrays = model.params.copy_arrays()
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, loss, acc)
        if stop:
            break
    model.params.load_arrays(best_arrays)
    report.best_epoch = early_stop_check(history, cfg.patience)[1]
    report.stop_epoch = len(history)
    report.wall_time = time.perf_counter() - start
    return report
