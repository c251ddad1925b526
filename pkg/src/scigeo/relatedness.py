"""Relatedness estimation: subject co-occurrence cosine similarity and a
research-to-industry transfer classifier with its own L1 logistic kernel.

The classifier is one-vs-rest: each sector gets an independent logistic
model over a binary bag-of-words, fitted by proximal gradient descent on
the L1-penalized mean logistic loss (intercept unpenalized).  Sectors are
then assigned to out-of-corpus documents whose sigmoid probability clears
a high threshold.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import CompanyRecord, PaperRecord
from .topics import PreprocessConfig, TokenDocument, preprocess_corpus

__all__ = [
    "UndefinedSimilarityError",
    "cosine_similarity",
    "LabeledSquareMatrix",
    "subject_relatedness",
    "ConvergenceError",
    "L1FitResult",
    "fit_l1_logistic",
    "l1_saturation_bound",
    "CategoryClassifier",
    "train_category_classifier",
    "predict_categories",
    "RelatednessMatrix",
    "research_industry_relatedness",
]

log = logging.getLogger(__name__)


class UndefinedSimilarityError(Exception):
    """Cosine similarity is undefined for a zero vector."""


def cosine_similarity(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    uu = float(u @ u)
    vv = float(v @ v)
    if uu == 0.0 or vv == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero vector is undefined")
    if np.array_equal(u, v):
        return 1.0
    return float(u @ v) / (math.sqrt(uu) * math.sqrt(vv))


@dataclass
class LabeledSquareMatrix:
    ids: tuple[str, ...]
    values: np.ndarray

    def value(self, a: str, b: str) -> float:
        return float(self.values[self.ids.index(a), self.ids.index(b)])

    def row(self, a: str) -> dict[str, float]:
        i = self.ids.index(a)
        return {b: float(self.values[i, j]) for j, b in enumerate(self.ids)}

    def to_long_rows(self) -> list[tuple[str, str, float]]:
        return [
            (ra, rb, float(self.values[i, j]))
            for i, ra in enumerate(self.ids)
            for j, rb in enumerate(self.ids)
        ]


DL_CATEGORY = "_dl"


def subject_relatedness(
    papers: Sequence[PaperRecord],
    dl_flags: Mapping[str, bool] | None = None,
) -> tuple[LabeledSquareMatrix, list[str]]:
    """Pairwise cosine similarity of subjects' paper-incidence vectors.

    Each subject becomes a binary vector over papers; the marked-category
    row (from `dl_flags`) joins as an extra pseudo-subject.  Subjects with
    no papers are excluded and returned in the second element.
    """
    subjects = sorted({s for p in papers for s in p.subjects})
    ids = list(subjects)
    if dl_flags is not None:
        ids.append(DL_CATEGORY)
    vectors: dict[str, np.ndarray] = {}
    n = len(papers)
    for sid in subjects:
        vectors[sid] = np.array([1.0 if sid in p.subjects else 0.0 for p in papers])
    if dl_flags is not None:
        vectors[DL_CATEGORY] = np.array([1.0 if dl_flags.get(p.id, False) else 0.0 for p in papers])
    excluded = [sid for sid in ids if n == 0 or not vectors[sid].any()]
    kept = tuple(sid for sid in ids if sid not in excluded)
    values = np.zeros((len(kept), len(kept)))
    for i, a in enumerate(kept):
        for j, b in enumerate(kept):
            if j < i:
                values[i, j] = values[j, i]
            else:
                values[i, j] = cosine_similarity(vectors[a], vectors[b])
    np.fill_diagonal(values, 1.0)
    return LabeledSquareMatrix(ids=kept, values=values), excluded


class ConvergenceError(Exception):
    def __init__(self, message: str, objective_gap: float):
        super().__init__(message)
        self.objective_gap = objective_gap


@dataclass
class L1FitResult:
    weights: np.ndarray
    intercept: float
    objective: float
    iterations: int

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.intercept

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision(X))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _mean_logistic_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float) -> float:
    z = X @ w + b
    # log(1 + exp(z)) - y*z, stable for large |z|
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def l1_logistic_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    return _mean_logistic_loss(X, y, w, b) + lam * float(np.abs(w).sum())


def l1_saturation_bound(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every feature weight is exactly zero.

    At the intercept-only optimum the predicted probability is the base
    rate, so the bound is the largest absolute feature-residual
    correlation there.
    """
    y = np.asarray(y, dtype=np.float64)
    base = float(np.mean(y))
    grad = np.asarray(X, dtype=np.float64).T @ (base - y) / len(y)
    return float(np.max(np.abs(grad)))


def fit_l1_logistic(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    max_iter: int = 10_000,
    tol: float = 1e-9,
    trace: list[float] | None = None,
) -> L1FitResult:
    """Minimize mean logistic loss + lam * ||w||_1 (intercept unpenalized).

    Proximal gradient descent with backtracking line search; the objective
    is non-increasing across iterations and the soft-threshold step keeps
    inactive weights at exact zeros.  `trace`, when given, collects the
    objective value after every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam <= 0:
        raise ValueError("lam must be strictly positive")
    pos = float(np.sum(y))
    if pos == 0 or pos == len(y):
        raise ValueError("need at least one positive and one negative label")
    n, k = X.shape
    w = np.zeros(k)
    base = pos / len(y)
    b = math.log(base / (1.0 - base))
    step = 1.0
    obj = l1_logistic_objective(X, y, w, b, lam)
    if trace is not None:
        trace.append(obj)
    for iteration in range(1, max_iter + 1):
        z = X @ w + b
        p = _sigmoid(z)
        resid = p - y
        grad_w = X.T @ resid / n
        grad_b = float(np.mean(resid))
        smooth = _mean_logistic_loss(X, y, w, b)
        while True:
            w_new = _soft_threshold(w - step * grad_w, step * lam)
            b_new = b - step * grad_b
            dw = w_new - w
            db = b_new - b
            quad = smooth + float(grad_w @ dw) + grad_b * db
            quad += (float(dw @ dw) + db * db) / (2.0 * step)
            if _mean_logistic_loss(X, y, w_new, b_new) <= quad + 1e-15:
                break
            step *= 0.5
            if step < 1e-18:
                raise ConvergenceError("line search failed", objective_gap=math.inf)
        new_obj = l1_logistic_objective(X, y, w_new, b_new, lam)
        if trace is not None:
            trace.append(new_obj)
        move = max(float(np.max(np.abs(w_new - w))), abs(b_new - b)) if k else abs(b_new - b)
        w, b = w_new, b_new
        if obj - new_obj <= tol * max(1.0, abs(obj)) and move <= math.sqrt(tol):
            return L1FitResult(weights=w, intercept=b, objective=new_obj, iterations=iteration)
        obj = new_obj
        # allow the step to grow back so one early backtrack does not
        # throttle the rest of the run
        step *= 1.2
    gap = _optimality_gap(X, y, w, b, lam)
    raise ConvergenceError(
        f"no convergence within {max_iter} iterations (optimality gap {gap:.3e})",
        objective_gap=gap,
    )


def _soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _optimality_gap(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    """Max violation of the L1 subgradient optimality conditions."""
    n = len(y)
    grad = X.T @ (_sigmoid(X @ w + b) - y) / n
    grad_b = float(np.mean(_sigmoid(X @ w + b) - y))
    viol = np.where(
        w == 0.0,
        np.maximum(np.abs(grad) - lam, 0.0),
        np.abs(grad + lam * np.sign(w)),
    )
    return max(float(np.max(viol)), abs(grad_b))


@dataclass
class SectorModel:
    weights: dict[int, float]  # sparse: vocabulary index -> weight
    intercept: float
    lam: float
    validation_accuracy: float


@dataclass
class CategoryClassifier:
    vocabulary: tuple[str, ...]
    sectors: dict[str, SectorModel]
    skipped_sectors: dict[str, int]  # sector -> positive count below floor
    split_seed: int
    preprocess: PreprocessConfig

    def vectorize(self, tokens: frozenset[str]) -> np.ndarray:
        index = self._vocab_index()
        x = np.zeros(len(self.vocabulary))
        for t in tokens:
            j = index.get(t)
            if j is not None:
                x[j] = 1.0
        return x

    def _vocab_index(self) -> dict[str, int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {t: j for j, t in enumerate(self.vocabulary)}
            self._index_cache = cached
        return cached

    def sector_probability(self, sector: str, tokens: frozenset[str]) -> float:
        model = self.sectors[sector]
        index = self._vocab_index()
        z = model.intercept
        for t in tokens:
            j = index.get(t)
            if j is not None:
                z += model.weights.get(j, 0.0)
        return 0.5 * (1.0 + math.tanh(0.5 * z))

    def to_json_dict(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "sectors": {
                name: {
                    "weights": {str(j): w for j, w in sorted(m.weights.items())},
                    "intercept": m.intercept,
                    "lambda": m.lam,
                    "validation_accuracy": m.validation_accuracy,
                }
                for name, m in sorted(self.sectors.items())
            },
            "skipped_sectors": dict(sorted(self.skipped_sectors.items())),
            "split_seed": self.split_seed,
            "preprocess": {
                "min_tokens": self.preprocess.min_tokens,
                "rare_word_min_count": self.preprocess.rare_word_min_count,
                "ngram_min_count": self.preprocess.ngram_min_count,
                "stemmer": self.preprocess.stemmer,
            },
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "CategoryClassifier":
        pp = doc["preprocess"]
        return cls(
            vocabulary=tuple(doc["vocabulary"]),
            sectors={
                name: SectorModel(
                    weights={int(j): float(w) for j, w in m["weights"].items()},
                    intercept=float(m["intercept"]),
                    lam=float(m["lambda"]),
                    validation_accuracy=float(m["validation_accuracy"]),
                )
                for name, m in doc["sectors"].items()
            },
            skipped_sectors={k: int(v) for k, v in doc.get("skipped_sectors", {}).items()},
            split_seed=int(doc["split_seed"]),
            preprocess=PreprocessConfig(
                min_tokens=int(pp["min_tokens"]),
                rare_word_min_count=int(pp["rare_word_min_count"]),
                ngram_min_count=int(pp["ngram_min_count"]),
                stemmer=pp["stemmer"],
            ),
        )


DEFAULT_LAMBDA_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0)


def train_category_classifier(
    companies: Sequence[CompanyRecord],
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    validation_fraction: float = 0.2,
    min_examples: int = 50,
    seed: int = 0,
    preprocess: PreprocessConfig | None = None,
) -> CategoryClassifier:
    """One-vs-rest sector models over binary bag-of-words descriptions.

    The train/validation split is a seeded permutation, so two runs with
    the same seed pick the same lambda per sector.  Sectors with fewer
    positives than `min_examples` are skipped and reported on the
    classifier.  Each sector's lambda maximizes held-out accuracy (ties
    prefer the smaller lambda); the final model is refitted on all rows.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie strictly between 0 and 1")
    if any(l <= 0 for l in lambda_grid):
        raise ValueError("lambda grid values must be strictly positive")
    preprocess = preprocess or PreprocessConfig(min_tokens=1)
    trainable = [c for c in companies if c.trainable]
    processed = preprocess_corpus([(c.id, c.description) for c in trainable], preprocess)
    docs = processed.by_id()
    usable = [c for c in trainable if c.id in docs]
    if not usable:
        raise ValueError("no trainable companies survived preprocessing")
    vocabulary = tuple(sorted({t for c in usable for t in docs[c.id].tokens}))
    vocab_index = {t: j for j, t in enumerate(vocabulary)}
    X = np.zeros((len(usable), len(vocabulary)))
    for i, c in enumerate(usable):
        for t in docs[c.id].tokens:
            X[i, vocab_index[t]] = 1.0

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(usable))
    n_val = max(1, int(round(validation_fraction * len(usable))))
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])

    all_sectors = sorted({s for c in usable for s in c.categories})
    sectors: dict[str, SectorModel] = {}
    skipped: dict[str, int] = {}
    grid = sorted(lambda_grid)
    for sector in all_sectors:
        y = np.array([1.0 if sector in c.categories else 0.0 for c in usable])
        positives = int(y.sum())
        if positives < min_examples:
            skipped[sector] = positives
            log.info("sector %r skipped: %d positives < %d", sector, positives, min_examples)
            continue
        y_train, y_val = y[train_idx], y[val_idx]
        if y_train.sum() in (0, len(y_train)) or len(y_val) == 0:
            skipped[sector] = positives
            continue
        best_lam = None
        best_acc = -1.0
        for lam in grid:
            fit = fit_l1_logistic(X[train_idx], y_train, lam)
            pred = (fit.probabilities(X[val_idx]) >= 0.5).astype(float)
            acc = float(np.mean(pred == y_val))
            if acc > best_acc:
                best_acc = acc
                best_lam = lam
        final = fit_l1_logistic(X, y, best_lam)
        weights = {j: float(wj) for j, wj in enumerate(final.weights) if wj != 0.0}
        sectors[sector] = SectorModel(
            weights=weights,
            intercept=final.intercept,
            lam=best_lam,
            validation_accuracy=best_acc,
        )
    return CategoryClassifier(
        vocabulary=vocabulary,
        sectors=sectors,
        skipped_sectors=skipped,
        split_seed=seed,
        preprocess=preprocess,
    )


def predict_categories(
    tokens: frozenset[str],
    classifier: CategoryClassifier,
    threshold: float = 0.99,
) -> dict[str, float]:
    """Sectors whose sigmoid probability reaches the threshold (inclusive)."""
    out: dict[str, float] = {}
    for sector in sorted(classifier.sectors):
        p = classifier.sector_probability(sector, tokens)
        if p >= threshold:
            out[sector] = p
    return out


@dataclass
class RelatednessMatrix:
    row_ids: tuple[str, ...]  # research subjects (+ the marked category)
    col_ids: tuple[str, ...]  # company sectors
    values: np.ndarray  # shares in [0, 1]

    def value(self, row: str, col: str) -> float:
        return float(self.values[self.row_ids.index(row), self.col_ids.index(col)])

    def row(self, row: str) -> dict[str, float]:
        i = self.row_ids.index(row)
        return {c: float(self.values[i, j]) for j, c in enumerate(self.col_ids)}

    def to_long_rows(self) -> list[tuple[str, str, float]]:
        return [
            (r, c, float(self.values[i, j]))
            for i, r in enumerate(self.row_ids)
            for j, c in enumerate(self.col_ids)
        ]


def research_industry_relatedness(
    papers: Sequence[PaperRecord],
    documents: Mapping[str, TokenDocument],
    classifier: CategoryClassifier,
    threshold: float = 0.99,
    dl_flags: Mapping[str, bool] | None = None,
) -> tuple[RelatednessMatrix, list[str]]:
    """Share of a subject's papers predicted to belong to each sector.

    Papers without a preprocessed document are skipped.  The marked
    category (from `dl_flags`) joins as an extra row.  Subjects with zero
    scored papers are excluded and reported.
    """
    sectors = tuple(sorted(classifier.sectors))
    predictions: dict[str, set[str]] = {}
    for paper in papers:
        doc = documents.get(paper.id)
        if doc is None:
            continue
        predictions[paper.id] = set(predict_categories(doc.tokens, classifier, threshold))
    subjects = sorted({s for p in papers for s in p.subjects})
    rows = list(subjects)
    if dl_flags is not None:
        rows.append(DL_CATEGORY)
    values = []
    kept_rows = []
    excluded = []
    for sid in rows:
        if sid == DL_CATEGORY:
            members = [p for p in papers if p.id in predictions and dl_flags.get(p.id, False)]
        else:
            members = [p for p in papers if p.id in predictions and sid in p.subjects]
        if not members:
            excluded.append(sid)
            continue
        kept_rows.append(sid)
        counts = [sum(1 for p in members if c in predictions[p.id]) for c in sectors]
        values.append([n / len(members) for n in counts])
    matrix = RelatednessMatrix(
        row_ids=tuple(kept_rows),
        col_ids=sectors,
        values=np.array(values) if values else np.zeros((0, len(sectors))),
    )
    return matrix, excluded
