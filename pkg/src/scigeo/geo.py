"""Point-in-polygon geocoding and location x category activity counting.

Containment uses even-odd ray casting over all rings of a polygon, so
interior (hole) rings are excluded automatically; points that lie exactly
on any ring edge or vertex count as inside.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import Polygon, Region, Ring

__all__ = [
    "InvalidGeometryError",
    "point_in_polygon",
    "assign_region",
    "ActivityMatrix",
    "aggregate_activity",
]

log = logging.getLogger(__name__)

Point = tuple[float, float]  # (latitude, longitude)


class InvalidGeometryError(Exception):
    """Degenerate ring: fewer than four vertices or not closed."""


def _validate_ring(ring: Ring) -> None:
    if len(ring) < 4:
        raise InvalidGeometryError(f"ring has {len(ring)} vertices, need at least 4")
    if ring[0] != ring[-1]:
        raise InvalidGeometryError("ring is not closed (first vertex != last vertex)")


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if cross != 0.0:
        return False
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _ring_crossings(point: Point, ring: Ring) -> int:
    """Number of times a ray cast in +longitude direction crosses the ring."""
    lat, lon = point
    crossings = 0
    for (lat1, lon1), (lat2, lon2) in zip(ring, ring[1:]):
        if (lat1 > lat) != (lat2 > lat):
            lon_at = (lon2 - lon1) * (lat - lat1) / (lat2 - lat1) + lon1
            if lon < lon_at:
                crossings += 1
    return crossings


def point_in_polygon(point: Point, polygon: Polygon) -> bool:
    """Even-odd containment test; edge and vertex hits count as inside."""
    for ring in polygon:
        _validate_ring(ring)
    for ring in polygon:
        for a, b in zip(ring, ring[1:]):
            if _on_segment(point, a, b):
                return True
    total = sum(_ring_crossings(point, ring) for ring in polygon)
    return total % 2 == 1


def assign_region(point: Point, regions: Sequence[Region]) -> str | None:
    """The unique region containing the point, or None.

    Overlapping boundaries resolve deterministically to the smallest
    region id; the ambiguity is logged.
    """
    hits = [
        region.region_id
        for region in regions
        if any(point_in_polygon(point, poly) for poly in region.polygons)
    ]
    if not hits:
        return None
    if len(hits) > 1:
        winner = min(hits)
        log.warning("point %s falls in %d regions %s; keeping %s", point, len(hits), sorted(hits), winner)
        return winner
    return hits[0]


@dataclass
class ActivityMatrix:
    """Counts of records by location (rows) and category (columns)."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    counts: np.ndarray  # shape (len(row_ids), len(col_ids)), non-negative ints
    level: str  # "country" | "region"
    unlocated_records: int = 0

    def __post_init__(self) -> None:
        if self.level not in ("country", "region"):
            raise ValueError(f"unknown aggregation level: {self.level!r}")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise ValueError("duplicate row ids")
        if len(set(self.col_ids)) != len(self.col_ids):
            raise ValueError("duplicate column ids")
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("counts shape does not match id axes")
        if (self.counts < 0).any():
            raise ValueError("activity counts must be non-negative")

    def row_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, location: str, category: str) -> int:
        return int(self.counts[self.row_ids.index(location), self.col_ids.index(category)])

    def to_payload(self) -> dict:
        return {
            "level": self.level,
            "row_ids": list(self.row_ids),
            "col_ids": list(self.col_ids),
            "counts": self.counts.tolist(),
            "unlocated_records": self.unlocated_records,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "ActivityMatrix":
        rows = tuple(payload["row_ids"])
        cols = tuple(payload["col_ids"])
        counts = np.array(payload["counts"], dtype=np.int64).reshape(len(rows), len(cols))
        return cls(
            row_ids=rows,
            col_ids=cols,
            counts=counts,
            level=payload["level"],
            unlocated_records=int(payload.get("unlocated_records", 0)),
        )

    def to_long_rows(self) -> list[tuple[str, str, int]]:
        return [
            (row_id, col_id, int(self.counts[i, j]))
            for i, row_id in enumerate(self.row_ids)
            for j, col_id in enumerate(self.col_ids)
        ]


def aggregate_activity(
    records: Iterable,
    level: str,
    category_extractor: Callable[[object], Iterable[str]],
    location_extractor: Callable[[object], Iterable[str]],
    region_to_country: Mapping[str, str] | None = None,
) -> ActivityMatrix:
    """Count records into a location x category matrix.

    A record counts once per distinct location it touches, for every
    category it carries: two institutes in the same region add one, and
    institutes in two regions add one per region.  Records with no
    resolved location are tallied in `unlocated_records` so corpus totals
    stay auditable.
    """
    if level == "country" and region_to_country is None:
        raise ValueError("country-level aggregation needs a region_to_country map")
    cells: dict[tuple[str, str], int] = {}
    unlocated = 0
    for record in records:
        locations = set(location_extractor(record))
        if level == "country":
            locations = {region_to_country[r] for r in locations if r in region_to_country}
        if not locations:
            unlocated += 1
            continue
        categories = set(category_extractor(record))
        for loc in locations:
            for cat in categories:
                cells[(loc, cat)] = cells.get((loc, cat), 0) + 1
    row_ids = tuple(sorted({loc for loc, _ in cells}))
    col_ids = tuple(sorted({cat for _, cat in cells}))
    counts = np.zeros((len(row_ids), len(col_ids)), dtype=np.int64)
    row_index = {r: i for i, r in enumerate(row_ids)}
    col_index = {c: j for j, c in enumerate(col_ids)}
    for (loc, cat), n in cells.items():
        counts[row_index[loc], col_index[cat]] = n
    return ActivityMatrix(
        row_ids=row_ids,
        col_ids=col_ids,
        counts=counts,
        level=level,
        unlocated_records=unlocated,
    )
