"""Abstract preprocessing and topic-score document labeling.

Documents are one-hot bags of words: a topic's score is the sum of the
weights of its terms present in the document, and the topic is assigned
when that score reaches a fraction gamma of the topic's largest term
weight.  Topic models arrive as (topic_id, word, weight) CSV tables from
an externally trained model; training is out of scope here.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "PreprocessConfig",
    "TokenDocument",
    "DroppedDocument",
    "PreprocessResult",
    "preprocess_corpus",
    "tokenize",
    "stem_token",
    "Topic",
    "TopicModel",
    "TopicModelError",
    "load_topic_model",
    "topic_score",
    "TopicAssignmentConfig",
    "assign_topics",
    "label_dl",
    "LabelSummary",
    "default_stop_words",
]


def default_stop_words() -> frozenset[str]:
    text = resources.files("scigeo.data").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w for w in text.split() if w)


@dataclass(frozen=True)
class PreprocessConfig:
    stop_words: frozenset[str] | None = None  # None = bundled list
    min_tokens: int = 20
    rare_word_min_count: int = 5  # corpus-frequency floor for unigrams
    ngram_min_count: int = 10  # corpus-frequency floor for bi/tri-grams
    stemmer: str = "suffix"  # "suffix" | "identity"

    def __post_init__(self) -> None:
        if self.stemmer not in ("suffix", "identity"):
            raise ValueError(f"unknown stemmer: {self.stemmer!r}")
        if self.min_tokens < 0 or self.rare_word_min_count < 0 or self.ngram_min_count < 0:
            raise ValueError("thresholds must be non-negative")

    def resolved_stop_words(self) -> frozenset[str]:
        return self.stop_words if self.stop_words is not None else default_stop_words()


@dataclass(frozen=True)
class TokenDocument:
    paper_id: str
    tokens: frozenset[str]
    token_count: int


@dataclass(frozen=True)
class DroppedDocument:
    paper_id: str
    token_count: int
    reason: str = "below_min_tokens"


@dataclass
class PreprocessResult:
    documents: list[TokenDocument]
    dropped: list[DroppedDocument]

    def by_id(self) -> dict[str, TokenDocument]:
        return {doc.paper_id: doc for doc in self.documents}


def tokenize(raw: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    lowered = raw.lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    return cleaned.split()


# Longest suffixes first; a strip only applies when it leaves >= 3 chars.
_SUFFIXES = (
    "ization",
    "fulness",
    "ousness",
    "iveness",
    "ational",
    "ements",
    "ations",
    "ility",
    "ments",
    "ingly",
    "ation",
    "izers",
    "izer",
    "ness",
    "ions",
    "ment",
    "able",
    "ible",
    "ally",
    "ings",
    "ing",
    "ion",
    "ers",
    "ies",
    "ed",
    "er",
    "ly",
    "es",
    "s",
)


def stem_token(token: str) -> str:
    """Small deterministic suffix stripper (not a full Porter stemmer)."""
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith("ss"):
        return token
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def preprocess_corpus(
    abstracts: Mapping[str, str] | Sequence[tuple[str, str]],
    cfg: PreprocessConfig | None = None,
) -> PreprocessResult:
    """Turn raw abstracts into token documents in one deterministic pass.

    Order of operations: tokenize (lowercase, strip punctuation), drop
    stop-words, drop unigrams under the corpus-frequency floor, stem,
    then append bi-grams and tri-grams whose corpus frequency clears the
    n-gram floor.  Documents ending up under `min_tokens` are dropped and
    reported, not raised.
    """
    cfg = cfg or PreprocessConfig()
    stop = cfg.resolved_stop_words()
    items = list(abstracts.items()) if isinstance(abstracts, Mapping) else list(abstracts)

    base: list[tuple[str, list[str]]] = []
    unigram_freq: dict[str, int] = {}
    for paper_id, raw in items:
        tokens = [t for t in tokenize(raw) if t not in stop]
        base.append((paper_id, tokens))
        for t in tokens:
            unigram_freq[t] = unigram_freq.get(t, 0) + 1

    stem = stem_token if cfg.stemmer == "suffix" else (lambda t: t)
    stemmed: list[tuple[str, list[str]]] = []
    ngram_freq: dict[str, int] = {}
    for paper_id, tokens in base:
        kept = [stem(t) for t in tokens if unigram_freq[t] >= cfg.rare_word_min_count]
        stemmed.append((paper_id, kept))
        for gram in _ngrams(kept):
            ngram_freq[gram] = ngram_freq.get(gram, 0) + 1

    documents: list[TokenDocument] = []
    dropped: list[DroppedDocument] = []
    for paper_id, kept in stemmed:
        grams = [g for g in _ngrams(kept) if ngram_freq[g] >= cfg.ngram_min_count]
        sequence = kept + grams
        if len(sequence) < cfg.min_tokens:
            dropped.append(DroppedDocument(paper_id=paper_id, token_count=len(sequence)))
            continue
        documents.append(
            TokenDocument(paper_id=paper_id, tokens=frozenset(sequence), token_count=len(sequence))
        )
    return PreprocessResult(documents=documents, dropped=dropped)


def _ngrams(tokens: Sequence[str]) -> list[str]:
    grams = ["_".join(tokens[i : i + 2]) for i in range(len(tokens) - 1)]
    grams += ["_".join(tokens[i : i + 3]) for i in range(len(tokens) - 2)]
    return grams


class TopicModelError(Exception):
    pass


@dataclass(frozen=True)
class Topic:
    topic_id: str
    terms: tuple[tuple[str, float], ...]  # sorted by descending weight

    def __post_init__(self) -> None:
        if not self.terms:
            raise TopicModelError(f"topic {self.topic_id!r} has no terms")
        words = [w for w, _ in self.terms]
        if len(set(words)) != len(words):
            raise TopicModelError(f"topic {self.topic_id!r} lists a word twice")
        weights = [w for _, w in self.terms]
        if any(w <= 0 for w in weights):
            raise TopicModelError(f"topic {self.topic_id!r} has non-positive weights")
        if any(weights[i] < weights[i + 1] for i in range(len(weights) - 1)):
            raise TopicModelError(f"topic {self.topic_id!r} terms are not sorted")

    @property
    def max_weight(self) -> float:
        return self.terms[0][1]


@dataclass(frozen=True)
class TopicModel:
    topics: tuple[Topic, ...]

    def __post_init__(self) -> None:
        ids = [t.topic_id for t in self.topics]
        if len(set(ids)) != len(ids):
            raise TopicModelError("duplicate topic ids")

    def topic(self, topic_id: str) -> Topic:
        for t in self.topics:
            if t.topic_id == topic_id:
                return t
        raise KeyError(topic_id)

    @property
    def topic_ids(self) -> tuple[str, ...]:
        return tuple(t.topic_id for t in self.topics)


def load_topic_model(path: str | Path) -> TopicModel:
    """Read a (topic_id, word, weight) CSV into a TopicModel.

    Terms are sorted by descending weight (ties by word) per topic; topics
    keep their order of first appearance.
    """
    path = Path(path)
    grouped: dict[str, list[tuple[str, float]]] = {}
    order: list[str] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"topic_id", "word", "weight"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise TopicModelError(f"topic model CSV must have columns {sorted(required)}")
        for row in reader:
            topic_id = row["topic_id"]
            try:
                weight = float(row["weight"])
            except ValueError as exc:
                raise TopicModelError(f"non-numeric weight for {topic_id!r}/{row['word']!r}") from exc
            if topic_id not in grouped:
                grouped[topic_id] = []
                order.append(topic_id)
            grouped[topic_id].append((row["word"], weight))
    topics = []
    for topic_id in order:
        terms = sorted(grouped[topic_id], key=lambda t: (-t[1], t[0]))
        topics.append(Topic(topic_id=topic_id, terms=tuple(terms)))
    if not topics:
        raise TopicModelError("topic model CSV is empty")
    return TopicModel(topics=tuple(topics))


def topic_score(doc: TokenDocument, topic: Topic) -> float:
    """Sum of the weights of topic terms present in the document."""
    return sum(weight for word, weight in topic.terms if word in doc.tokens)


@dataclass(frozen=True)
class TopicAssignmentConfig:
    gamma: float = 0.5
    dl_topic_ids: frozenset[str] = frozenset()
    require_positive_score: bool = True
    # "any": flag when at least one marked topic is assigned (default);
    # "all": the stricter preset requiring every marked topic.
    dl_rule: str = "any"

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.dl_rule not in ("any", "all"):
            raise ValueError(f"unknown dl_rule: {self.dl_rule!r}")


def assign_topics(doc: TokenDocument, model: TopicModel, cfg: TopicAssignmentConfig) -> frozenset[str]:
    """Topics whose score reaches gamma times their maximum term weight."""
    assigned = []
    for topic in model.topics:
        score = topic_score(doc, topic)
        if cfg.require_positive_score and score <= 0.0:
            continue
        if score >= cfg.gamma * topic.max_weight:
            assigned.append(topic.topic_id)
    return frozenset(assigned)


@dataclass
class LabelSummary:
    labeled: int
    flagged: int

    @property
    def share(self) -> float | None:
        return self.flagged / self.labeled if self.labeled else None


def label_dl(
    documents: Iterable[TokenDocument],
    model: TopicModel,
    cfg: TopicAssignmentConfig,
) -> tuple[dict[str, bool], dict[str, frozenset[str]], LabelSummary]:
    """Flag documents whose assigned topics hit the marked topic set.

    Returns per-document flags, per-document assigned topic sets and a
    count/share summary (share is None on an empty corpus).
    """
    if not cfg.dl_topic_ids:
        raise ValueError("dl_topic_ids must be non-empty")
    missing = set(cfg.dl_topic_ids) - set(model.topic_ids)
    if missing:
        raise TopicModelError(f"marked topics not in model: {sorted(missing)}")
    flags: dict[str, bool] = {}
    assignments: dict[str, frozenset[str]] = {}
    flagged = 0
    total = 0
    for doc in documents:
        assigned = assign_topics(doc, model, cfg)
        assignments[doc.paper_id] = assigned
        if cfg.dl_rule == "all":
            flag = cfg.dl_topic_ids <= assigned
        else:
            flag = bool(cfg.dl_topic_ids & assigned)
        flags[doc.paper_id] = flag
        total += 1
        flagged += int(flag)
    return flags, assignments, LabelSummary(labeled=total, flagged=flagged)
