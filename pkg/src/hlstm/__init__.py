"""Hierarchical bidirectional LSTM for aspect-based sentiment analysis, on a small numpy autodiff core."""

from .data import (AspectCategory, AspectVocab, Review, ReviewBatch, Sentence, Vocab, build_aspect_vocab,
                   build_vocab, encode_reviews, load_embeddings, pad_and_mask, parse_corpus, tokenize,
                   unroll_aspects, write_corpus)
from .model import HierarchicalLSTM, ModelConfig, ModelParams, SentenceBaseline, build_model, predict
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig, TrainReport, evaluate, train

__version__ = "0.1.0"
