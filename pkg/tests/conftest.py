import numpy as np
import pytest

from hlstm.data import ReviewBatch
from hlstm.layers import masked_cross_entropy
from hlstm.model import ModelConfig, ModelParams, build_model


def toy_batch(rng, vocab=20, n_ent=3, n_attr=3, lens=((5, 3, 2), (4, 1, 0)), l=5):
    """Two reviews, up to three sentences each; a length of 0 marks a padded sentence."""
    b, h = len(lens), len(lens[0])
    tokens = rng.integers(2, vocab, size=(b, h, l))
    token_mask = np.zeros((b, h, l), dtype=bool)
    for i, row in enumerate(lens):
        for j, n in enumerate(row):
            token_mask[i, j, :n] = True
    tokens[~token_mask] = 0
    sent_mask = token_mask.any(axis=2)
    ent = np.where(sent_mask, rng.integers(1, n_ent, size=(b, h)), 0)
    attr = np.where(sent_mask, rng.integers(1, n_attr, size=(b, h)), 0)
    labels = np.where(sent_mask, rng.integers(0, 3, size=(b, h)), -1)
    return ReviewBatch(tokens, token_mask, sent_mask, ent, attr, labels)


def toy_model(kind="hlstm", seed=7, vocab=20, k=6, m=4, d=8, dtype=np.float64):
    cfg = ModelConfig(vocab, 3, 3, word_dim=k, aspect_dim=m, hidden=d, dropout=0.5, kind=kind)
    return build_model(ModelParams.init(cfg, np.random.default_rng(seed), dtype=dtype))


def batch_loss(model, batch):
    return masked_cross_entropy(model.forward(batch, training=False), batch.labels,
                                batch.sentence_mask).loss


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
