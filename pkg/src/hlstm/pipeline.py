"""End-to-end helpers: corpus -> encoded data -> trained model -> metrics/predictions."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (POLARITIES, AspectVocab, EncodedReview, Review, Vocab, build_aspect_vocab,
                   build_vocab, encode_reviews, load_embeddings, tokenize)
from .errors import ConfigError, VocabMismatchError
from .model import ModelConfig, ModelParams, build_model
from .training import (EvalResult, TrainConfig, TrainReport, evaluate, predict_dataset, rng_stream,
                       split_validation, train)

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    model: object
    vocab: Vocab
    aspects: AspectVocab
    report: TrainReport
    max_len: int
    max_sents: int
    coverage: Optional[float] = None


def prepare_vocab(reviews: Sequence[Review], min_count: int = 1, none_aspect: bool = False,
                  pretokenized: bool = False):
    vocab = build_vocab([tokenize(s.text, pretokenized) for r in reviews for s in r.sentences],
                        min_count=min_count)
    return vocab, build_aspect_vocab(reviews, none_aspect)


def fit(reviews: Sequence[Review], cfg: TrainConfig, kind: str = "hlstm",
        embeddings: Optional[str] = None, min_count: int = 1, none_aspect: bool = False,
        pretokenized: bool = False) -> FitResult:
    """Build vocabularies from ``reviews``, hold out validation reviews and train."""
    if not reviews:
        raise ConfigError("training corpus is empty")
    vocab, aspects = prepare_vocab(reviews, min_count, none_aspect, pretokenized)
    data = encode_reviews(reviews, vocab, aspects, none_aspect, pretokenized)
    if not data:
        raise ConfigError("training corpus has no aspect-annotated sentences")
    max_len = max(len(s) for r in data for s in r.token_ids)
    max_sents = max(len(r) for r in data)
    train_data, val_data = split_validation(data, cfg.val_fraction, cfg.seed)

    dtype = np.dtype(cfg.dtype)
    init_rng = rng_stream(cfg.seed, "init")
    table, coverage = None, None
    if embeddings:
        loaded = load_embeddings(embeddings, vocab, cfg.word_dim, rng_stream(cfg.seed, "embed"), dtype)
        table, coverage = loaded.table, loaded.coverage
        log.info("embedding coverage %.3f", coverage)
    mcfg = ModelConfig(len(vocab), len(aspects.entities), len(aspects.attributes), cfg.word_dim,
                       cfg.aspect_dim, cfg.hidden, cfg.dropout_rate, len(POLARITIES), kind)
    model = build_model(ModelParams.init(mcfg, init_rng, dtype, table))
    report = train(model, train_data, val_data, cfg, max_len, max_sents)
    return FitResult(model, vocab, aspects, report, max_len, max_sents, coverage)


def save_fit(path, result: FitResult, cfg: TrainConfig) -> None:
    save_checkpoint(path, result.model.params, result.vocab, result.aspects,
                    max_len=result.max_len, max_sents=result.max_sents,
                    train_config=cfg.__dict__, best_epoch=result.report.best_epoch)


def encode_for(ckpt: Checkpoint, reviews: Sequence[Review], none_aspect=False,
               pretokenized=False) -> List[EncodedReview]:
    """Encode ``reviews`` with a checkpoint's vocabularies, checking they belong together."""
    cfg = ckpt.params.config
    if cfg.vocab_size != len(ckpt.vocab) or cfg.n_entities != len(ckpt.aspects.entities) \
            or cfg.n_attributes != len(ckpt.aspects.attributes):
        raise VocabMismatchError("checkpoint tables do not match its vocabulary manifest")
    tokens = [t for r in reviews for s in r.sentences for t in tokenize(s.text, pretokenized)]
    if tokens and not any(t in ckpt.vocab for t in tokens):
        raise VocabMismatchError("corpus shares no tokens with the checkpoint vocabulary")
    return encode_reviews(reviews, ckpt.vocab, ckpt.aspects, none_aspect, pretokenized)


def evaluate_checkpoint(ckpt: Checkpoint, reviews: Sequence[Review], **kw) -> EvalResult:
    data = encode_for(ckpt, reviews, **kw)
    if not data:
        raise ConfigError("evaluation corpus has no aspect-annotated sentences")
    return evaluate(ckpt.model, data, max_len=ckpt.extra.get("max_len"),
                    max_sents=ckpt.extra.get("max_sents"))


def predict_records(ckpt: Checkpoint, reviews: Sequence[Review], **kw) -> List[dict]:
    """One record per unrolled (sentence, aspect) instance, in input order."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        data = encode_for(ckpt, reviews, **kw)
    preds = predict_dataset(ckpt.model, data, max_len=ckpt.extra.get("max_len"),
                            max_sents=ckpt.extra.get("max_sents"))
    out = []
    for r, labels in zip(data, preds):
        for inst, lab in zip(r.instances, labels):
            out.append({"review_id": inst.review_id, "sentence_id": inst.sentence_id,
                        "aspect": str(inst.aspect), "polarity": POLARITIES[lab]})
    return out


def holdout_split(reviews: Sequence[Review], fraction: float, seed: int):
    order = rng_stream(seed, "holdout").permutation(len(reviews))
    n_test = max(1, int(round(fraction * len(reviews))))
    test_idx = set(order[:n_test].tolist())
    return ([r for i, r in enumerate(reviews) if i not in test_idx],
            [r for i, r in enumerate(reviews) if i in test_idx])


def compare(train_reviews: Sequence[Review], test_reviews: Sequence[Review], cfg: TrainConfig,
            **fit_kw) -> dict:
    """Train the hierarchical model and the baseline with one seed and budget; score both."""
    rows = {}
    for kind in ("hlstm", "baseline"):
        res = fit(train_reviews, replace(cfg), kind=kind, **fit_kw)
        data = encode_reviews(test_reviews, res.vocab, res.aspects,
                              fit_kw.get("none_aspect", False), fit_kw.get("pretokenized", False))
        ev = evaluate(res.model, data, max_len=res.max_len, max_sents=res.max_sents)
        rows[kind] = {"accuracy": ev.accuracy, "best_epoch": res.report.best_epoch,
                      "stop_epoch": res.report.stop_epoch, "seed": cfg.seed, "n_test": ev.n,
                      "result": res}
    return {"hlstm": rows["hlstm"], "baseline": rows["baseline"],
            "gap": rows["hlstm"]["accuracy"] - rows["baseline"]["accuracy"]}


def format_comparison(cmp: dict) -> str:
    lines = [f"{'model':<10}{'accuracy':>10}{'best_epoch':>12}{'stop_epoch':>12}{'seed':>8}"]
    for kind in ("hlstm", "baseline"):
        r = cmp[kind]
        lines.append(f"{kind:<10}{r['accuracy']:>10.4f}{r['best_epoch']:>12d}{r['stop_epoch']:>12d}"
                     f"{r['seed']:>8d}")
    lines.append(f"{'gap':<10}{cmp['gap']:>+10.4f}")
    return "\n".join(lines) + "\n"


def load(path) -> Checkpoint:
    return load_checkpoint(Path(path))
