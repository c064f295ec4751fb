"""Synthetic review corpora in which some sentences can only be labeled from context.

Every review has a dominant polarity.  Unambiguous sentences carry
class-specific sentiment words; most of them take the dominant polarity and
the rest take another one, but the dominant polarity always holds a strict
majority.  Ambiguous sentences contain only the shared ambiguous word and
filler; their gold label is the majority label of the review's unambiguous
sentences.  A context-blind classifier can therefore do no better than the
class prior on ambiguous sentences.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .data import POLARITIES, AspectCategory, Opinion, Review, Sentence, write_corpus
from .errors import ConfigError

AMBIG = "meh"
LEXICON = {
    "positive": ["great", "delicious", "superb", "lovely", "excellent", "friendly", "fresh", "amazing"],
    "negative": ["awful", "bland", "rude", "terrible", "stale", "dirty", "slow", "disgusting"],
    "neutral": ["average", "ordinary", "standard", "typical", "usual", "plain", "regular", "moderate"],
}
FILLER = ["the", "food", "service", "place", "was", "staff", "and", "really", "menu", "dinner", "it", "we"]
ASPECTS = [AspectCategory(*a.split("#")) for a in (
    "FOOD#QUALITY", "FOOD#PRICES", "SERVICE#GENERAL", "AMBIENCE#GENERAL",
    "RESTAURANT#GENERAL", "DRINKS#QUALITY")]


@dataclass
class SyntheticSpec:
    n_reviews: int = 100
    n_test_reviews: int = 0
    min_sentences: int = 3
    max_sentences: int = 6
    ambiguity_rate: float = 0.5
    off_label_rate: float = 0.2
    multi_aspect_rate: float = 0.15
    min_len: int = 3
    max_len: int = 7
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.ambiguity_rate < 1.0:
            raise ConfigError("ambiguity_rate must be in [0, 1)")
        if not 0.0 <= self.off_label_rate < 0.5:
            raise ConfigError("off_label_rate must be in [0, 0.5)")
        if self.n_reviews < 1 or self.n_test_reviews < 0:
            raise ConfigError("n_reviews must be >= 1 and n_test_reviews >= 0")
        if not 1 <= self.min_sentences <= self.max_sentences:
            raise ConfigError("need 1 <= min_sentences <= max_sentences")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError("need 1 <= min_len <= max_len")


def majority_label(labels: List[str]) -> Optional[str]:
    """Strict-majority label of ``labels``, or ``None`` when the top count is tied."""
    counts = Counter(labels).most_common()
    if not counts or (len(counts) > 1 and counts[0][1] == counts[1][1]):
        return None
    return counts[0][0]


def is_ambiguous(sentence: Sentence) -> bool:
    return AMBIG in sentence.text.split()


def _sentence_text(rng, polarity: Optional[str], spec: SyntheticSpec) -> str:
    n = int(rng.integers(spec.min_len, spec.max_len + 1))
    words = [str(w) for w in rng.choice(FILLER, size=n - 1)]
    key = AMBIG if polarity is None else str(rng.choice(LEXICON[polarity]))
    words.insert(int(rng.integers(0, n)), key)
    return " ".join(words) + " ."


def _review(rng, rid: str, spec: SyntheticSpec) -> Review:
    dominant = POLARITIES[int(rng.integers(0, 3))]
    n = int(rng.integers(spec.min_sentences, spec.max_sentences + 1))
    ambiguous = rng.random(n) < spec.ambiguity_rate
    if ambiguous.all():
        ambiguous[int(rng.integers(0, n))] = False
    labels = []
    for _ in range(int((~ambiguous).sum())):
        if rng.random() < spec.off_label_rate:
            labels.append(str(rng.choice([p for p in POLARITIES if p != dominant])))
        else:
            labels.append(dominant)
    # promote off-labels until the dominant polarity holds a strict majority
    while majority_label(labels) != dominant:
        labels[next(i for i, x in enumerate(labels) if x != dominant)] = dominant
    review = Review(rid)
    it = iter(labels)
    for j in range(n):
        polarity = dominant if ambiguous[j] else next(it)
        text = _sentence_text(rng, None if ambiguous[j] else polarity, spec)
        k = 2 if rng.random() < spec.multi_aspect_rate else 1
        cats = [ASPECTS[i] for i in rng.choice(len(ASPECTS), size=k, replace=False)]
        review.sentences.append(Sentence(f"{rid}:{j}", text, [Opinion(c, polarity) for c in cats]))
    return review


def generate_synthetic(spec: SyntheticSpec, out_dir=None) -> Tuple[List[Review], List[Review]]:
    """Return ``(train, test)`` reviews; with ``out_dir`` also write train.xml / test.xml."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train = [_review(rng, f"train{i}", spec) for i in range(spec.n_reviews)]
    test = [_review(rng, f"test{i}", spec) for i in range(spec.n_test_reviews)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(train, out / "train.xml")
        write_corpus(test, out / "test.xml")
    return train, test


def context_label(review: Review) -> Optional[str]:
    """Re-derive the label an ambiguous sentence of ``review`` must carry."""
    labels = [op.polarity for s in review.sentences if not is_ambiguous(s) for op in s.opinions[:1]]
    return majority_label(labels)


def baseline_ceiling(reviews: List[Review]) -> float:
    """Best accuracy any context-blind classifier can reach on ``reviews``.

    Unambiguous instances are separable; ambiguous ones all look alike, so the
    best blind rule predicts their most frequent label.
    """
    amb = Counter()
    n = n_clear = 0
    for r in reviews:
        for s in r.sentences:
            for op in s.opinions:
                n += 1
                if is_ambiguous(s):
                    amb[op.polarity] += 1
                else:
                    n_clear += 1
    return (n_clear + (max(amb.values()) if amb else 0)) / n if n else 0.0
