"""
From review XML to padded batches
=================================

"""

import tempfile
from pathlib import Path

import numpy as np

from hlstm.data import (AspectCategory, Opinion, Review, Sentence, build_aspect_vocab, build_vocab,
                        encode_reviews, load_embeddings, pad_and_mask, parse_corpus, tokenize,
                        write_corpus)

food = AspectCategory.parse("FOOD#QUALITY")
review = Review("r1", [
    Sentence("r1:0", "The tuna tartare was superb.", [Opinion(food, "positive")]),
    Sentence("r1:1", "We waited a while.", []),
    Sentence("r1:2", "Can't skip the dessert either!", [Opinion(food, "positive"),
                                                         Opinion(AspectCategory.parse("FOOD#PRICES"), "neutral")]),
])

tmp = Path(tempfile.mkdtemp())
write_corpus([review], tmp / "reviews.xml")
reviews = parse_corpus(tmp / "reviews.xml")
print((tmp / "reviews.xml").read_text()[:200], "...")

# sentences without an aspect are dropped; two aspects mean two instances
vocab = build_vocab([tokenize(s.text) for r in reviews for s in r.sentences])
aspects = build_aspect_vocab(reviews)
encoded = encode_reviews(reviews, vocab, aspects)
print("instances:", [(i.sentence_id, str(i.aspect)) for i in encoded[0].instances])

batch = pad_and_mask(encoded)
print("tokens", batch.tokens.shape, "labels", batch.labels)

# embeddings: one token per line followed by its vector; unknown tokens get random rows
(tmp / "vec.txt").write_text("tuna 0.1 0.2 0.3\nsuperb 0.5 0.5 0.5\n")
emb = load_embeddings(tmp / "vec.txt", vocab, 3, np.random.default_rng(0))
print("coverage %.2f" % emb.coverage, "row for 'tuna':", emb.table[vocab.stoi["tuna"]])
