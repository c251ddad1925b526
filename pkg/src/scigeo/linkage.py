"""Institute-name resolution: title normalization, Levenshtein-based
similarity ratios and the exact -> cache -> fuzzy matching cascade.

The fuzzy stage scores a query against every canonical name and alias in
the registry and keeps the argmax of the convolved score (the quadratic
mean of the per-algorithm ratios); ties break to the lexicographically
smallest registry id so results are reproducible.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import InstituteEntry, PaperRecord

__all__ = [
    "normalize_title",
    "levenshtein",
    "token_sort_ratio",
    "partial_ratio",
    "convolve_scores",
    "convolved_score",
    "FuzzyMatchConfig",
    "MatchResult",
    "MatchCache",
    "InstituteMatcher",
    "match_institute",
    "link_corpus",
    "LinkReport",
    "LinkedCorpus",
]


def normalize_title(raw: str) -> str:
    """Case-fold, replace symbolic characters with spaces, collapse runs.

    Letters (including non-Latin alphabets) and digits survive; everything
    else becomes a space.  Idempotent by construction.
    """
    lowered = raw.lower()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in lowered)
    return " ".join(cleaned.split())


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert / delete / substitute)."""
    if a == b:
        return 0
    # Common prefixes and suffixes never change the distance.
    lo = 0
    hi_a, hi_b = len(a), len(b)
    while lo < hi_a and lo < hi_b and a[lo] == b[lo]:
        lo += 1
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    a, b = a[lo:hi_a], b[lo:hi_b]
    if not a:
        return hi_b - lo
    if not b:
        return hi_a - lo
    if len(a) < len(b):
        a, b = b, a
    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        diag = row[0]
        row[0] = i
        for j, cb in enumerate(b, start=1):
            up = row[j]
            val = diag if ca == cb else diag + 1
            if up + 1 < val:
                val = up + 1
            left = row[j - 1]
            if left + 1 < val:
                val = left + 1
            row[j] = val
            diag = up
    return row[-1]


def _sorted_tokens(s: str) -> str:
    return " ".join(sorted(s.split()))


def _ratio_from_sorted(sa: str, sb: str) -> float:
    return 1.0 - levenshtein(sa, sb) / max(len(sa), len(sb), 1)


def token_sort_ratio(a: str, b: str) -> float:
    """Similarity of the two strings after sorting their tokens.

    Tokens are split on spaces, sorted lexicographically and re-joined with
    single spaces; the score is 1 - distance / max(length, 1).
    """
    return _ratio_from_sorted(_sorted_tokens(a), _sorted_tokens(b))


def _window_distances(pattern: str, text: str) -> np.ndarray:
    """Edit distance from `pattern` to every len(pattern)-window of `text`.

    All windows share one DP sweep: the state is a (windows x m+1) matrix
    and the in-row deletion chain is resolved with a running-minimum pass,
    so each pattern character costs a handful of vectorized operations.
    """
    m = len(pattern)
    n = len(text)
    count = n - m + 1
    codes = np.array([ord(c) for c in text], dtype=np.int64)
    windows = codes[np.arange(count)[:, None] + np.arange(m)[None, :]]
    col = np.arange(m + 1, dtype=np.int64)
    dist = np.broadcast_to(col, (count, m + 1)).copy()
    for i, ch in enumerate(pattern, start=1):
        cand = np.empty_like(dist)
        cand[:, 0] = i
        np.minimum(dist[:, 1:] + 1, dist[:, :-1] + (windows != ord(ch)), out=cand[:, 1:])
        cand -= col
        np.minimum.accumulate(cand, axis=1, out=cand)
        cand += col
        dist = cand
    return dist[:, -1]


def partial_ratio(a: str, b: str) -> float:
    """Best similarity of the shorter string against every equal-length
    contiguous window of the longer one; 1.0 for an exact substring.
    """
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if not short:
        # Empty patterns trivially occur everywhere.
        return 1.0
    if short in long_:
        return 1.0
    best = int(_window_distances(short, long_).min())
    return 1.0 - best / len(short)


@dataclass(frozen=True)
class _RatioAlgorithm:
    name: str
    prepare: Callable[[str], str]
    score_prepared: Callable[[str, str], float]

    def score(self, a: str, b: str) -> float:
        return self.score_prepared(self.prepare(a), self.prepare(b))


_ALGORITHMS: dict[str, _RatioAlgorithm] = {
    "token_sort_ratio": _RatioAlgorithm("token_sort_ratio", _sorted_tokens, _ratio_from_sorted),
    "partial_ratio": _RatioAlgorithm("partial_ratio", lambda s: s, partial_ratio),
}


@dataclass(frozen=True)
class FuzzyMatchConfig:
    algorithms: tuple[str, ...] = ("token_sort_ratio", "partial_ratio")
    min_accept_score: float = 0.75
    tie_break: str = "smallest_registry_id"

    def __post_init__(self) -> None:
        if not self.algorithms:
            raise ValueError("algorithms list must be non-empty")
        unknown = [a for a in self.algorithms if a not in _ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown ratio algorithms: {unknown}")
        if not 0.0 <= self.min_accept_score <= 1.0:
            raise ValueError("min_accept_score must lie in [0, 1]")
        if self.tie_break != "smallest_registry_id":
            raise ValueError(f"unknown tie_break rule: {self.tie_break!r}")


def convolve_scores(scores: Sequence[float]) -> float:
    """Quadratic mean of the per-algorithm ratios: sqrt(sum(F_n^2) / N)."""
    if not scores:
        raise ValueError("at least one score is required")
    return math.sqrt(sum(s * s for s in scores) / len(scores))


def convolved_score(query: str, candidate: str, cfg: FuzzyMatchConfig) -> float:
    return convolve_scores([_ALGORITHMS[name].score(query, candidate) for name in cfg.algorithms])


@dataclass(frozen=True)
class MatchResult:
    query_name: str
    matched_id: str | None
    score: float
    method: str  # exact | cached | fuzzy | none


class MatchCache:
    """Keyed on the normalized query; safe under concurrent misses.

    The first stored result for a key wins, so concurrent lookups of the
    same name converge to a single cached value.
    """

    def __init__(self) -> None:
        self._entries: dict[str, MatchResult] = {}
        self._lock = threading.Lock()

    def lookup(self, key: str) -> MatchResult | None:
        return self._entries.get(key)

    def store(self, key: str, result: MatchResult) -> MatchResult:
        with self._lock:
            return self._entries.setdefault(key, result)

    def __len__(self) -> int:
        return len(self._entries)


class InstituteMatcher:
    """Resolves raw institute names against a registry.

    Cascade per lookup: exact match on normalized names and aliases
    (score 1), then the cache, then the fuzzy argmax of the convolved
    score over every candidate string.
    """

    def __init__(
        self,
        registry: Iterable[InstituteEntry],
        cfg: FuzzyMatchConfig | None = None,
        cache: MatchCache | None = None,
    ) -> None:
        self.cfg = cfg or FuzzyMatchConfig()
        self.cache = cache if cache is not None else MatchCache()
        entries = sorted(registry, key=lambda e: e.registry_id)
        if not entries:
            raise ValueError("registry must be non-empty")
        self._algorithms = [_ALGORITHMS[name] for name in self.cfg.algorithms]
        self._exact: dict[str, str] = {}
        # Per entry: (registry_id, per-candidate prepared strings per algorithm).
        self._candidates: list[tuple[str, list[tuple[str, ...]]]] = []
        for entry in entries:
            names = [normalize_title(entry.canonical_name)]
            names += [normalize_title(alias) for alias in entry.aliases]
            prepared = [tuple(alg.prepare(n) for alg in self._algorithms) for n in names]
            self._candidates.append((entry.registry_id, prepared))
            for name in names:
                # Smallest registry id wins duplicate names (entries sorted).
                self._exact.setdefault(name, entry.registry_id)

    def match(self, name: str) -> MatchResult:
        normalized = normalize_title(name)
        exact_id = self._exact.get(normalized)
        if exact_id is not None:
            result = MatchResult(name, exact_id, 1.0, "exact")
            self.cache.store(normalized, result)
            return result
        cached = self.cache.lookup(normalized)
        if cached is not None:
            return replace(cached, query_name=name, method="cached")
        result = self._fuzzy_match(name, normalized)
        stored = self.cache.store(normalized, result)
        return replace(stored, query_name=name)

    def _fuzzy_match(self, name: str, normalized: str) -> MatchResult:
        algs = self._algorithms
        n_alg = len(algs)
        query_prepared = [alg.prepare(normalized) for alg in algs]
        best_id: str | None = None
        best_score = -1.0
        for registry_id, prepared_names in self._candidates:
            entry_best = -1.0
            for cand in prepared_names:
                scores: list[float] = []
                ssq = 0.0
                for k, alg in enumerate(algs):
                    # Each remaining ratio is at most 1, so this bounds the
                    # convolved score; candidates that cannot strictly beat
                    # the current best are skipped (ties lose to the
                    # smaller registry id seen first).
                    bound = math.sqrt((ssq + (n_alg - k)) / n_alg)
                    if bound <= best_score:
                        scores = []
                        break
                    s = alg.score_prepared(query_prepared[k], cand[k])
                    scores.append(s)
                    ssq += s * s
                if len(scores) != n_alg:
                    continue
                score = convolve_scores(scores)
                if score > entry_best:
                    entry_best = score
            if entry_best > best_score:
                best_score = entry_best
                best_id = registry_id
        if best_score < self.cfg.min_accept_score:
            return MatchResult(name, None, best_score, "none")
        return MatchResult(name, best_id, best_score, "fuzzy")


def match_institute(
    name: str,
    registry: Iterable[InstituteEntry],
    cache: MatchCache | None = None,
    cfg: FuzzyMatchConfig | None = None,
) -> MatchResult:
    """One-shot lookup; builds a matcher over the registry and matches."""
    return InstituteMatcher(registry, cfg=cfg, cache=cache).match(name)


@dataclass
class LinkReport:
    match_rate: float | None
    counts_by_method: dict[str, int]
    score_histogram: list[int]  # ten equal bins over [0, 1]

    def to_dict(self) -> dict:
        return {
            "match_rate": self.match_rate,
            "counts_by_method": dict(self.counts_by_method),
            "score_histogram": list(self.score_histogram),
        }


@dataclass
class LinkedCorpus:
    papers: list[PaperRecord]
    # per paper id, one MatchResult per affiliation string, in input order
    links: dict[str, tuple[MatchResult, ...]]
    report: LinkReport

    def institute_ids(self, paper_id: str) -> frozenset[str]:
        return frozenset(
            r.matched_id for r in self.links.get(paper_id, ()) if r.matched_id is not None
        )


def link_corpus(
    papers: Sequence[PaperRecord],
    registry: Iterable[InstituteEntry],
    cfg: FuzzyMatchConfig | None = None,
) -> LinkedCorpus:
    """Resolve every affiliation string of every paper to a MatchResult."""
    matcher = InstituteMatcher(registry, cfg=cfg)
    links: dict[str, tuple[MatchResult, ...]] = {}
    counts = {"exact": 0, "cached": 0, "fuzzy": 0, "none": 0}
    histogram = [0] * 10
    total = 0
    matched = 0
    for paper in papers:
        results = tuple(matcher.match(aff) for aff in paper.affiliations)
        links[paper.id] = results
        for res in results:
            total += 1
            counts[res.method] += 1
            if res.matched_id is not None:
                matched += 1
            bin_idx = min(int(res.score * 10), 9)
            histogram[bin_idx] += 1
    rate = matched / total if total else None
    report = LinkReport(match_rate=rate, counts_by_method=counts, score_histogram=histogram)
    return LinkedCorpus(papers=list(papers), links=links, report=report)
