"""Independent oracle implementations used to cross-check the engine.

Each oracle is written from the mathematical definition with a different
algorithm or representation than the production code: bit-parallel edit
distance, winding numbers, explicit normal equations, dense grid scans.
They are deliberately kept free of scigeo imports except for plain data
types.
"""
from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# string similarity


def lev_dp(a: str, b: str) -> int:
    """Textbook full-matrix edit distance."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            d[i][j] = min(
                d[i - 1][j] + 1,
                d[i][j - 1] + 1,
                d[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return d[m][n]


def myers_lev(a: str, b: str) -> int:
    """Myers/Hyyroe bit-parallel edit distance (pattern up to 64 chars)."""
    if len(a) > len(b):
        a, b = b, a
    m = len(a)
    if m == 0:
        return len(b)
    if m > 64:
        return lev_dp(a, b)
    peq: dict[str, int] = {}
    for i, ch in enumerate(a):
        peq[ch] = peq.get(ch, 0) | (1 << i)
    mask = (1 << m) - 1
    high = 1 << (m - 1)
    pv = mask
    mv = 0
    score = m
    for ch in b:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & high:
            score += 1
        if mh & high:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def oracle_normalize(raw: str) -> str:
    out = []
    for ch in raw.lower():
        out.append(ch if ch.isalnum() else " ")
    return " ".join("".join(out).split())


def oracle_token_sort(a: str, b: str) -> float:
    sa = " ".join(sorted(a.split()))
    sb = " ".join(sorted(b.split()))
    return 1.0 - myers_lev(sa, sb) / max(len(sa), len(sb), 1)


def oracle_partial(a: str, b: str) -> float:
    s, l = (a, b) if len(a) <= len(b) else (b, a)
    if not s:
        return 1.0
    m = len(s)
    best = min(myers_lev(s, l[i : i + m]) for i in range(len(l) - m + 1))
    return 1.0 - best / m


def oracle_convolve(scores: list[float]) -> float:
    # literal quadratic-mean form: (1/sqrt(N)) * sqrt(sum F_n^2)
    return (1.0 / math.sqrt(len(scores))) * math.sqrt(sum(f * f for f in scores))


def oracle_best_match(query: str, candidates: dict[str, list[str]], algorithms=("ts", "pr")):
    """Brute force: score every candidate string of every entry, take the
    argmax entry; ties go to the smallest entry id.  Returns (id, score)."""
    qn = oracle_normalize(query)
    fns = {"ts": oracle_token_sort, "pr": oracle_partial}
    best_id = None
    best = -1.0
    for entry_id in sorted(candidates):
        entry_score = max(
            oracle_convolve([fns[a](qn, oracle_normalize(name)) for a in algorithms])
            for name in candidates[entry_id]
        )
        if entry_score > best:
            best = entry_score
            best_id = entry_id
    return best_id, best


# ---------------------------------------------------------------------------
# geometry


def winding_number(point, ring) -> int:
    """Winding number of a closed ring around a point (nonzero = inside)."""
    x, y = point
    wn = 0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        is_left = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if y1 <= y:
            if y2 > y and is_left > 0:
                wn += 1
        else:
            if y2 <= y and is_left < 0:
                wn -= 1
    return wn


def winding_inside(point, rings) -> bool:
    """Even-odd containment from winding parities across all rings."""
    return sum(abs(winding_number(point, ring)) for ring in rings) % 2 == 1


# ---------------------------------------------------------------------------
# regression


def normal_equations_ols(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.inv(X.T @ X) @ (X.T @ y)


def cluster_sandwich_se(X: np.ndarray, e: np.ndarray, labels) -> np.ndarray:
    """Per-cluster outer-product sandwich with the CR1 factor, written
    directly from the formula."""
    n, k = X.shape
    groups: dict = {}
    for i, g in enumerate(labels):
        groups.setdefault(g, []).append(i)
    G = len(groups)
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    for idx in groups.values():
        Xg = X[idx]
        eg = e[idx]
        meat += Xg.T @ np.outer(eg, eg) @ Xg
    cov = (G / (G - 1)) * ((n - 1) / (n - k)) * bread @ meat @ bread
    return np.sqrt(np.diag(cov))


def hc1_se(X: np.ndarray, e: np.ndarray) -> np.ndarray:
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = X.T @ np.diag(e**2) @ X
    cov = (n / (n - k)) * bread @ meat @ bread
    return np.sqrt(np.diag(cov))


# ---------------------------------------------------------------------------
# L1 logistic


def logistic_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    z = X @ w + b
    loss = np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - y * z)
    return float(loss + lam * np.sum(np.abs(w)))


def grid_scan_l1(X: np.ndarray, y: np.ndarray, lam: float, lo=-4.0, hi=4.0, steps=81):
    """Dense scan over (w1, w2, b); returns the best objective found."""
    grid = np.linspace(lo, hi, steps)
    best = math.inf
    for w1 in grid:
        for w2 in grid:
            for b in grid:
                obj = logistic_objective(X, y, np.array([w1, w2]), b, lam)
                if obj < best:
                    best = obj
    return best


# ---------------------------------------------------------------------------
# quantiles


def nearest_rank_oracle(values, p: float) -> float:
    ordered = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[rank - 1]
