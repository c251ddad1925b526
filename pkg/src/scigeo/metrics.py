"""Descriptive and analytical measures: citation filters, revealed
comparative advantage (RCA), relatedness-weighted specialization, trend
shares and dispersion/concentration diagnostics.

Quantiles use the nearest-rank method throughout so every cut-off is
reproducible from sorted values without interpolation.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import PaperRecord
from .geo import ActivityMatrix

__all__ = [
    "UndefinedRcaError",
    "UndefinedScoreError",
    "nearest_rank",
    "above_median_citations",
    "highly_cited_flags",
    "rca",
    "RcaTable",
    "rca_table",
    "related_specialization",
    "dl_share_timeseries",
    "subject_share_before_after",
    "impact_overrepresentation",
    "concentration_top_k",
    "rca_dispersion",
    "DispersionSummary",
    "PeriodSplit",
]


class UndefinedRcaError(Exception):
    """RCA has a zero denominator for this location or category."""


class UndefinedScoreError(Exception):
    """Weighted specialization with an all-zero similarity vector."""


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("nearest_rank of empty sequence")
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must lie in [0, 100]")
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class PeriodSplit:
    """Two-period partition of the corpus: t0 = year <= t0_max_year."""

    t0_max_year: int = 2012

    def period(self, year: int) -> str:
        return "t0" if year <= self.t0_max_year else "t1"


def above_median_citations(
    papers: Sequence[PaperRecord],
) -> tuple[list[PaperRecord], list[int]]:
    """Papers strictly above their publication year's citation median.

    Years with fewer than two papers cannot support a meaningful median;
    their papers are dropped and the years reported.
    """
    by_year: dict[int, list[PaperRecord]] = {}
    for p in papers:
        by_year.setdefault(p.pub_year, []).append(p)
    kept: list[PaperRecord] = []
    dropped_years: list[int] = []
    medians: dict[int, float] = {}
    for year, group in by_year.items():
        if len(group) < 2:
            dropped_years.append(year)
            continue
        medians[year] = statistics.median(p.citations for p in group)
    for p in papers:
        if p.pub_year in medians and p.citations > medians[p.pub_year]:
            kept.append(p)
    return kept, sorted(dropped_years)


def highly_cited_flags(papers: Sequence[PaperRecord]) -> dict[str, bool]:
    """True when citations reach the year's nearest-rank 75th percentile."""
    by_year: dict[int, list[int]] = {}
    for p in papers:
        by_year.setdefault(p.pub_year, []).append(p.citations)
    cutoffs = {year: nearest_rank(cites, 75.0) for year, cites in by_year.items()}
    return {p.id: p.citations >= cutoffs[p.pub_year] for p in papers}


def rca(matrix: ActivityMatrix, location: str, category: str) -> float:
    """(location share of category) over (global share of category).

    Values above 1 mean the location is relatively specialized in the
    category.  Zero denominators make the ratio undefined and raise.
    """
    if location not in matrix.row_ids:
        raise KeyError(f"unknown location {location!r}")
    if category not in matrix.col_ids:
        raise KeyError(f"unknown category {category!r}")
    i = matrix.row_ids.index(location)
    j = matrix.col_ids.index(category)
    row_total = int(matrix.counts[i].sum())
    col_total = int(matrix.counts[:, j].sum())
    grand = matrix.total()
    if row_total == 0:
        raise UndefinedRcaError(f"location {location!r} has zero activity")
    if col_total == 0:
        raise UndefinedRcaError(f"category {category!r} has zero global activity")
    return (int(matrix.counts[i, j]) / row_total) / (col_total / grand)


@dataclass
class RcaTable:
    """RCA values per period with the filters that produced them."""

    periods: tuple[str, ...]
    # period -> location -> category -> value
    values: dict[str, dict[str, dict[str, float]]]
    excluded_locations: dict[str, list[str]]
    excluded_categories: dict[str, list[str]]
    filters: dict

    def value(self, period: str, location: str, category: str) -> float:
        return self.values[period][location][category]

    def locations(self, period: str) -> list[str]:
        return sorted(self.values[period])

    def vector(self, period: str, location: str) -> dict[str, float]:
        return dict(self.values[period][location])


def rca_table(
    matrices: Mapping[str, ActivityMatrix],
    activity_floor_percentile: float = 0.0,
    filters: dict | None = None,
) -> RcaTable:
    """RCA for every retained location and category, per period.

    Locations whose total activity falls below the nearest-rank percentile
    floor (inclusive: >= the floor value survives) are excluded and
    reported; marginals are recomputed over the retained rows so the
    activity-share-weighted mean of RCA stays exactly 1 per category.
    """
    values: dict[str, dict[str, dict[str, float]]] = {}
    excluded_locations: dict[str, list[str]] = {}
    excluded_categories: dict[str, list[str]] = {}
    for period in sorted(matrices):
        matrix = matrices[period]
        totals = matrix.row_marginals()
        excluded: list[str] = []
        keep_idx: list[int] = []
        if len(matrix.row_ids) == 0:
            values[period] = {}
            excluded_locations[period] = []
            excluded_categories[period] = list(matrix.col_ids)
            continue
        floor = nearest_rank(totals.tolist(), activity_floor_percentile)
        for i, loc in enumerate(matrix.row_ids):
            if totals[i] >= floor and totals[i] > 0:
                keep_idx.append(i)
            else:
                excluded.append(loc)
        sub = matrix.counts[keep_idx, :]
        kept_locs = [matrix.row_ids[i] for i in keep_idx]
        col_totals = sub.sum(axis=0)
        row_totals = sub.sum(axis=1)
        grand = int(sub.sum())
        bad_cols = [j for j, c in enumerate(matrix.col_ids) if col_totals[j] == 0]
        excluded_categories[period] = [matrix.col_ids[j] for j in bad_cols]
        period_values: dict[str, dict[str, float]] = {}
        for r, loc in enumerate(kept_locs):
            row: dict[str, float] = {}
            for j, cat in enumerate(matrix.col_ids):
                if j in bad_cols:
                    continue
                row[cat] = (int(sub[r, j]) / int(row_totals[r])) / (int(col_totals[j]) / grand)
            period_values[loc] = row
        values[period] = period_values
        excluded_locations[period] = excluded
    return RcaTable(
        periods=tuple(sorted(matrices)),
        values=values,
        excluded_locations=excluded_locations,
        excluded_categories=excluded_categories,
        filters=dict(filters or {}) | {"activity_floor_percentile": activity_floor_percentile},
    )


def related_specialization(
    rca_vector: Mapping[str, float],
    similarity_vector: Mapping[str, float],
    target: str,
) -> float:
    """Similarity-weighted mean of a location's RCAs across categories.

    The target category is excluded from its own weighted sum; weights are
    the similarity of each category to the target.
    """
    cats = sorted(set(rca_vector) & set(similarity_vector) - {target})
    total_sim = sum(similarity_vector[c] for c in cats)
    if not cats or total_sim == 0.0:
        raise UndefinedScoreError("similarity weights are all zero")
    return sum(similarity_vector[c] * rca_vector[c] for c in cats) / total_sim


def dl_share_timeseries(
    papers: Sequence[PaperRecord],
    flags: Mapping[str, bool],
    window: int = 3,
) -> list[dict]:
    """Yearly flagged share with a centered moving average.

    Edge years use a truncated window over the observed year sequence.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    totals: dict[int, int] = {}
    flagged: dict[int, int] = {}
    for p in papers:
        totals[p.pub_year] = totals.get(p.pub_year, 0) + 1
        flagged[p.pub_year] = flagged.get(p.pub_year, 0) + int(flags.get(p.id, False))
    years = sorted(totals)
    shares = [flagged[y] / totals[y] for y in years]
    half = window // 2
    rows = []
    for idx, year in enumerate(years):
        lo = max(0, idx - half)
        hi = min(len(years), idx + half + 1)
        ma = sum(shares[lo:hi]) / (hi - lo)
        rows.append(
            {
                "year": year,
                "n_total": totals[year],
                "n_flagged": flagged[year],
                "share": shares[idx],
                "moving_avg": ma,
            }
        )
    return rows


def subject_share_before_after(
    papers: Sequence[PaperRecord],
    flags: Mapping[str, bool],
    split: PeriodSplit,
) -> list[dict]:
    """Flagged share within each subject before and after the split year.

    A subject absent from a period gets a None share (absence is not a
    zero share).  Rows are sorted by total subject activity, descending.
    """
    counts: dict[str, dict[str, list[int]]] = {}
    for p in papers:
        period = split.period(p.pub_year)
        for s in p.subjects:
            slot = counts.setdefault(s, {"t0": [0, 0], "t1": [0, 0]})[period]
            slot[0] += 1
            slot[1] += int(flags.get(p.id, False))
    rows = []
    for subject in counts:
        t0_total, t0_flagged = counts[subject]["t0"]
        t1_total, t1_flagged = counts[subject]["t1"]
        rows.append(
            {
                "subject": subject,
                "share_t0": t0_flagged / t0_total if t0_total else None,
                "share_t1": t1_flagged / t1_total if t1_total else None,
                "total": t0_total + t1_total,
            }
        )
    rows.sort(key=lambda r: (-r["total"], r["subject"]))
    return rows


def impact_overrepresentation(
    papers: Sequence[PaperRecord],
    flags: Mapping[str, bool],
    hc_flags: Mapping[str, bool],
    min_year: int,
) -> tuple[list[dict], list[str]]:
    """Per subject: flagged share of all papers vs of highly cited papers.

    Only papers published in `min_year` or later count.  Subjects with no
    papers after the filter are excluded and reported; a subject with no
    highly cited papers keeps a None second share.
    """
    recent = [p for p in papers if p.pub_year >= min_year]
    subjects = sorted({s for p in papers for s in p.subjects})
    rows = []
    excluded = []
    for subject in subjects:
        members = [p for p in recent if subject in p.subjects]
        if not members:
            excluded.append(subject)
            continue
        flagged = sum(1 for p in members if flags.get(p.id, False))
        hc = [p for p in members if hc_flags.get(p.id, False)]
        hc_flagged = sum(1 for p in hc if flags.get(p.id, False))
        rows.append(
            {
                "subject": subject,
                "min_year": min_year,
                "share_all": flagged / len(members),
                "share_highly_cited": hc_flagged / len(hc) if hc else None,
            }
        )
    return rows, excluded


def concentration_top_k(activity: Mapping[str, float], k: int) -> float:
    """Share of total activity held by the k largest locations."""
    if not activity:
        raise ValueError("activity must be non-empty")
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return 0.0
    total = float(sum(activity.values()))
    if total <= 0.0:
        raise ValueError("total activity must be positive")
    if k >= len(activity):
        return 1.0
    top = sorted(activity.values(), reverse=True)[:k]
    return min(1.0, sum(top) / total)


@dataclass
class DispersionSummary:
    year: int
    n: int
    sd: float
    quartiles: tuple[float, float, float, float, float]  # min, q25, q50, q75, max
    values: dict[str, float]


def rca_dispersion(
    yearly_rca: Mapping[int, Mapping[str, float]],
    yearly_activity: Mapping[int, Mapping[str, float]],
    top_n: int,
) -> tuple[list[DispersionSummary], list[int]]:
    """Per-year RCA distribution over the top-n locations by activity.

    Standard deviation is the population form; quartiles use nearest
    rank.  Years with no retained locations are omitted and reported.
    """
    summaries: list[DispersionSummary] = []
    omitted: list[int] = []
    for year in sorted(yearly_rca):
        rcas = yearly_rca[year]
        activity = yearly_activity.get(year, {})
        ranked = sorted(activity, key=lambda loc: (-activity[loc], loc))[:top_n]
        retained = {loc: rcas[loc] for loc in ranked if loc in rcas}
        if not retained:
            omitted.append(year)
            continue
        vals = list(retained.values())
        quartiles = tuple(nearest_rank(vals, p) for p in (0.0, 25.0, 50.0, 75.0, 100.0))
        mean = sum(vals) / len(vals)
        sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
        summaries.append(
            DispersionSummary(year=year, n=len(vals), sd=sd, quartiles=quartiles, values=retained)
        )
    return summaries, omitted
