"""Corpus ingestion: XML reviews, tokenization, vocabularies, aspect unrolling, padding."""

from __future__ import annotations

import string
import warnings
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CorpusParseError, FormatError, ValidationError

POLARITIES = ("positive", "negative", "neutral")
POLARITY_INDEX = {p: i for i, p in enumerate(POLARITIES)}
PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
NONE_ASPECT = ("NONE", "NONE")


@dataclass(frozen=True)
class AspectCategory:
    entity: str
    attribute: str

    def __str__(self):
        return f"{self.entity}#{self.attribute}"

    @classmethod
    def parse(cls, text: str) -> "AspectCategory":
        entity, sep, attribute = text.partition("#")
        if not sep or not entity or not attribute:
            raise ValidationError(f"aspect category {text!r} is not ENTITY#ATTRIBUTE")
        return cls(entity, attribute)


@dataclass(frozen=True)
class Opinion:
    category: AspectCategory
    polarity: str


@dataclass
class Sentence:
    sentence_id: str
    text: str
    opinions: List[Opinion] = field(default_factory=list)


@dataclass
class Review:
    review_id: str
    sentences: List[Sentence] = field(default_factory=list)


@dataclass(frozen=True)
class SentenceInstance:
    """One (sentence, aspect, polarity) triple after unrolling."""

    review_id: str
    sentence_id: str
    text: str
    aspect: AspectCategory
    polarity: Optional[str]


# --- XML --------------------------------------------------------------------

def parse_corpus(path) -> List[Review]:
    """Read the SemEval-style review XML subset.

    Polarity may be absent (unlabeled input for prediction) but, when
    present, must be one of positive/negative/neutral.
    """
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise CorpusParseError(f"malformed corpus {path}: {exc.msg if hasattr(exc, 'msg') else exc}",
                               line=line) from None
    if root.tag != "Reviews":
        raise CorpusParseError(f"root element must be <Reviews>, got <{root.tag}>")
    reviews = []
    for r in root.findall("Review"):
        review = Review(r.get("rid", ""))
        for s in r.iter("sentence"):
            text_el = s.find("text")
            sent = Sentence(s.get("id", ""), (text_el.text or "") if text_el is not None else "")
            for op in s.iter("Opinion"):
                polarity = op.get("polarity")
                if polarity is not None and polarity not in POLARITY_INDEX:
                    raise ValidationError(
                        f"unknown polarity {polarity!r} in sentence {sent.sentence_id!r}")
                sent.opinions.append(Opinion(AspectCategory.parse(op.get("category", "")), polarity))
            review.sentences.append(sent)
        reviews.append(review)
    return reviews


def corpus_to_xml(reviews: Sequence[Review]) -> bytes:
    root = ET.Element("Reviews")
    for review in reviews:
        r = ET.SubElement(root, "Review", rid=review.review_id)
        sents = ET.SubElement(r, "sentences")
        for sent in review.sentences:
            s = ET.SubElement(sents, "sentence", id=sent.sentence_id)
            ET.SubElement(s, "text").text = sent.text
            if sent.opinions:
                ops = ET.SubElement(s, "Opinions")
                for op in sent.opinions:
                    attrs = {"category": str(op.category)}
                    if op.polarity is not None:
                        attrs["polarity"] = op.polarity
                    ET.SubElement(ops, "Opinion", attrs)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


def write_corpus(reviews: Sequence[Review], path) -> None:
    with open(path, "wb") as fh:
        fh.write(corpus_to_xml(reviews))


# --- tokens and vocabulary ---------------------------------------------------

_PUNCT = set(string.punctuation)


def tokenize(text: str, pretokenized: bool = False) -> List[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation into tokens.

    >>> tokenize("I love this restaurant.")
    ['i', 'love', 'this', 'restaurant', '.']
    """
    if pretokenized:
        return text.split()
    tokens = []
    for word in text.lower().split():
        lead, trail = [], []
        while word and word[0] in _PUNCT:
            lead.append(word[0])
            word = word[1:]
        while word and word[-1] in _PUNCT:
            trail.append(word[-1])
            word = word[:-1]
        tokens.extend(lead)
        if word:
            tokens.append(word)
        tokens.extend(reversed(trail))
    return tokens


class Vocab:
    """Token index with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Iterable[str] = (), min_count: int = 1):
        self.itos = [PAD, UNK]
        self.min_count = min_count
        for tok in tokens:
            if tok not in (PAD, UNK):
                self.itos.append(tok)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __getitem__(self, token) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1) -> Vocab:
    """Index tokens seen at least ``min_count`` times, by frequency then lexicographically."""
    counts = Counter(tok for sent in corpus for tok in sent)
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(kept, min_count=min_count)


class AspectVocab:
    """Entity and attribute indices; row 0 of each table is the unseen-category row."""

    def __init__(self, entities: Iterable[str] = (), attributes: Iterable[str] = ()):
        self.entities = [UNK] + sorted(set(entities) - {UNK})
        self.attributes = [UNK] + sorted(set(attributes) - {UNK})
        self._e = {e: i for i, e in enumerate(self.entities)}
        self._a = {a: i for i, a in enumerate(self.attributes)}

    def lookup(self, aspect: AspectCategory) -> Tuple[int, int]:
        e, a = self._e.get(aspect.entity, 0), self._a.get(aspect.attribute, 0)
        if e == 0 or a == 0:
            warnings.warn(f"unseen aspect category {aspect}; using the OOV rows", stacklevel=2)
        return e, a

    def __eq__(self, other):
        return isinstance(other, AspectVocab) and (self.entities, self.attributes) == (
            other.entities, other.attributes)


def build_aspect_vocab(reviews: Iterable[Review], none_aspect: bool = False) -> AspectVocab:
    cats = {op.category for r in reviews for s in r.sentences for op in s.opinions}
    if none_aspect:
        cats.add(AspectCategory(*NONE_ASPECT))
    return AspectVocab((c.entity for c in cats), (c.attribute for c in cats))


# --- unrolling and padding ---------------------------------------------------

def unroll_aspects(review: Review, none_aspect: bool = False) -> List[SentenceInstance]:
    """One instance per (sentence, aspect), copies adjacent, aspect-free sentences dropped.

    With ``none_aspect`` an aspect-free sentence becomes a single NONE#NONE
    instance labeled neutral instead.
    """
    out = []
    for s in review.sentences:
        if not s.opinions and none_aspect:
            out.append(SentenceInstance(review.review_id, s.sentence_id, s.text,
                                        AspectCategory(*NONE_ASPECT), "neutral"))
        for op in s.opinions:
            out.append(SentenceInstance(review.review_id, s.sentence_id, s.text,
                                        op.category, op.polarity))
    return out


@dataclass
class EncodedReview:
    review_id: str
    instances: List[SentenceInstance]
    token_ids: List[List[int]]
    entity_ids: List[int]
    attribute_ids: List[int]
    labels: List[int]

    def __len__(self):
        return len(self.instances)


def encode_reviews(reviews: Sequence[Review], vocab: Vocab, aspects: AspectVocab,
                   none_aspect: bool = False, pretokenized: bool = False,
                   ) -> List[EncodedReview]:
    """Unroll, tokenize and index.  Reviews left empty after unrolling are dropped."""
    encoded = []
    for review in reviews:
        instances = unroll_aspects(review, none_aspect)
        if not instances:
            warnings.warn(f"review {review.review_id!r} has no aspects; dropped", stacklevel=2)
            continue
        ids, ents, attrs, labels = [], [], [], []
        cache = {}
        for inst in instances:
            if inst.sentence_id not in cache:
                cache[inst.sentence_id] = vocab.encode(tokenize(inst.text, pretokenized)) or [UNK_ID]
            ids.append(cache[inst.sentence_id])
            e, a = aspects.lookup(inst.aspect)
            ents.append(e)
            attrs.append(a)
            labels.append(POLARITY_INDEX[inst.polarity] if inst.polarity is not None else -1)
        encoded.append(EncodedReview(review.review_id, instances, ids, ents, attrs, labels))
    return encoded


@dataclass
class ReviewBatch:
    """Padded reviews: ``tokens [B, h, l]`` with token and sentence masks."""

    tokens: np.ndarray
    token_mask: np.ndarray
    sentence_mask: np.ndarray
    entity: np.ndarray
    attribute: np.ndarray
    labels: np.ndarray

    @property
    def shape(self):
        return self.tokens.shape

    def __len__(self):
        return self.tokens.shape[0]


def pad_and_mask(reviews: Sequence[EncodedReview], l: Optional[int] = None,
                 h: Optional[int] = None, pad_id: int = PAD_ID) -> ReviewBatch:
    """Fill sentences to ``l`` tokens and reviews to ``h`` sentences with padding.

    ``l``/``h`` default to the maxima in ``reviews``.  Longer input is truncated
    from the end with a warning.
    """
    l = l or max(len(s) for r in reviews for s in r.token_ids)
    h = h or max(len(r) for r in reviews)
    b = len(reviews)
    tokens = np.full((b, h, l), pad_id, dtype=np.int64)
    token_mask = np.zeros((b, h, l), dtype=bool)
    sentence_mask = np.zeros((b, h), dtype=bool)
    entity = np.zeros((b, h), dtype=np.int64)
    attribute = np.zeros((b, h), dtype=np.int64)
    labels = np.full((b, h), -1, dtype=np.int64)
    for i, r in enumerate(reviews):
        if len(r) > h:
            warnings.warn(f"review {r.review_id!r}: {len(r)} instances truncated to {h}", stacklevel=2)
        for j, ids in enumerate(r.token_ids[:h]):
            if len(ids) > l:
                warnings.warn(f"review {r.review_id!r}: sentence of {len(ids)} tokens truncated to {l}",
                              stacklevel=2)
            ids = ids[:l]
            tokens[i, j, :len(ids)] = ids
            token_mask[i, j, :len(ids)] = True
            sentence_mask[i, j] = True
            entity[i, j] = r.entity_ids[j]
            attribute[i, j] = r.attribute_ids[j]
            labels[i, j] = r.labels[j]
    return ReviewBatch(tokens, token_mask, sentence_mask, entity, attribute, labels)


# --- embeddings -------------------------------------------------------------

@dataclass
class LoadedEmbeddings:
    table: np.ndarray
    coverage: float
    found: int


def load_embeddings(path, vocab: Vocab, k: int = 300, rng: Optional[np.random.Generator] = None,
                    dtype=np.float32) -> LoadedEmbeddings:
    """Build a ``[len(vocab), k]`` table from a text embedding file.

    Each line is a token followed by ``k`` floats.  Tokens absent from the file
    keep a uniform random initialization, the PAD row is zero, and
    ``coverage`` is the fraction of non-reserved vocabulary found.
    """
    from .layers import glorot_uniform

    rng = rng or np.random.default_rng(0)
    table = glorot_uniform(rng, len(vocab), k, dtype=dtype)
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != k + 1:
                raise FormatError(f"expected {k} values after the token, found {len(parts) - 1}",
                                  line=lineno)
            token = parts[0]
            if token in seen:
                warnings.warn(f"duplicate embedding for {token!r} on line {lineno}; keeping the first",
                              stacklevel=2)
                continue
            seen.add(token)
            if token in vocab.stoi and vocab.stoi[token] not in (PAD_ID, UNK_ID):
                try:
                    table[vocab.stoi[token]] = np.asarray(parts[1:], dtype=np.float64)
                except ValueError:
                    raise FormatError(f"non-numeric value for {token!r}", line=lineno) from None
    table[PAD_ID] = 0.0
    regular = [t for t in vocab.itos[2:]]
    found = sum(t in seen for t in regular)
    coverage = found / len(regular) if regular else 0.0
    return LoadedEmbeddings(table, coverage, found)
