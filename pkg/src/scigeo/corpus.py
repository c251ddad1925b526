"""Domain types and validated ingestion for the three input corpora.

Input formats are file-based: JSONL for papers, institute registries and
company directories, GeoJSON for region boundaries.  Every row either
satisfies its type invariants or is rejected with a stable reason code;
rejected rows never abort a run.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

__all__ = [
    "PaperRecord",
    "InstituteEntry",
    "CompanyRecord",
    "Region",
    "IngestConfig",
    "Rejection",
    "IngestResult",
    "IngestError",
    "ingest_dataset",
    "write_rejection_report",
]

DATASET_KINDS = ("papers", "registry", "companies", "boundaries")


class IngestError(Exception):
    """Fatal ingestion failure: unreadable file or wrong top-level format."""


@dataclass(frozen=True)
class PaperRecord:
    """One publication with the features needed downstream."""

    id: str
    title: str
    abstract: str
    subjects: frozenset[str]
    pub_year: int
    citations: int
    affiliations: tuple[str, ...]
    resolved_regions: frozenset[str] | None = None

    def with_regions(self, regions: Iterable[str]) -> "PaperRecord":
        return replace(self, resolved_regions=frozenset(regions))


@dataclass(frozen=True)
class InstituteEntry:
    """Registry row: canonical name, aliases and a point location."""

    registry_id: str
    canonical_name: str
    aliases: tuple[str, ...]
    location: tuple[float, float]  # (latitude, longitude), degrees


@dataclass(frozen=True)
class CompanyRecord:
    id: str
    description: str
    categories: frozenset[str]
    founded_year: int | None
    location: tuple[float, float]
    resolved_region: str | None = None

    def with_region(self, region_id: str | None) -> "CompanyRecord":
        return replace(self, resolved_region=region_id)

    @property
    def trainable(self) -> bool:
        """Usable as a classifier training row (non-empty text and labels)."""
        return bool(self.description.strip()) and bool(self.categories)


# A ring is a closed sequence of (lat, lon) vertices; a polygon is an
# exterior ring followed by zero or more interior (hole) rings.
Ring = tuple[tuple[float, float], ...]
Polygon = tuple[Ring, ...]


@dataclass(frozen=True)
class Region:
    region_id: str
    country_code: str
    polygons: tuple[Polygon, ...]


@dataclass(frozen=True)
class IngestConfig:
    min_year: int = 1990
    max_year: int = 2030


@dataclass(frozen=True)
class Rejection:
    line_no: int
    reason_code: str


@dataclass
class IngestResult:
    kind: str
    records: list
    rejections: list[Rejection]

    @property
    def counts(self) -> dict[str, int]:
        return {"retained": len(self.records), "rejected": len(self.rejections)}


def ingest_dataset(kind: str, path: str | Path, config: IngestConfig | None = None) -> IngestResult:
    """Load and validate one input file.

    Per-row invariant violations reject the row (with a reason code) and the
    run continues; an unreadable file or a top-level schema mismatch raises
    :class:`IngestError`.
    """
    config = config or IngestConfig()
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind: {kind!r}")
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"input file not found: {path}")
    if kind == "boundaries":
        return _ingest_boundaries(path)
    validators: dict[str, Callable[[dict, IngestConfig], Any]] = {
        "papers": _validate_paper,
        "registry": _validate_institute,
        "companies": _validate_company,
    }
    validate = validators[kind]
    records: list = []
    rejections: list[Rejection] = []
    seen_ids: set[str] = set()
    id_field = {"papers": "id", "registry": "registry_id", "companies": "id"}[kind]
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            rejections.append(Rejection(line_no, "invalid_json"))
            continue
        if not isinstance(row, dict):
            rejections.append(Rejection(line_no, "invalid_json"))
            continue
        try:
            record = validate(row, config)
        except _RowError as exc:
            rejections.append(Rejection(line_no, exc.code))
            continue
        rid = getattr(record, id_field)
        if rid in seen_ids:
            rejections.append(Rejection(line_no, "duplicate_id"))
            continue
        seen_ids.add(rid)
        records.append(record)
    return IngestResult(kind=kind, records=records, rejections=rejections)


def write_rejection_report(result: IngestResult, path: str | Path) -> None:
    """Write the rejection report CSV with columns (line_no, reason_code)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["line_no", "reason_code"])
        for rej in result.rejections:
            writer.writerow([rej.line_no, rej.reason_code])


class _RowError(Exception):
    def __init__(self, code: str):
        super().__init__(code)
        self.code = code


def _require(row: dict, name: str, types) -> Any:
    if name not in row:
        raise _RowError(f"missing_{name}")
    value = row[name]
    if not isinstance(value, types) or isinstance(value, bool):
        raise _RowError(f"invalid_{name}")
    return value


def _string_list(row: dict, name: str) -> list[str]:
    value = _require(row, name, list)
    if not all(isinstance(v, str) for v in value):
        raise _RowError(f"invalid_{name}")
    return value


def _validate_paper(row: dict, config: IngestConfig) -> PaperRecord:
    pid = _require(row, "id", str)
    if not pid:
        raise _RowError("invalid_id")
    title = _require(row, "title", str)
    abstract = _require(row, "abstract", str)
    subjects = _string_list(row, "subjects")
    if not subjects:
        raise _RowError("empty_subjects")
    pub_year = _require(row, "pub_year", int)
    if not (config.min_year <= pub_year <= config.max_year):
        raise _RowError("year_out_of_range")
    citations = _require(row, "citations", int)
    if citations < 0:
        raise _RowError("negative_citations")
    affiliations = _string_list(row, "affiliations")
    return PaperRecord(
        id=pid,
        title=title,
        abstract=abstract,
        subjects=frozenset(subjects),
        pub_year=pub_year,
        citations=citations,
        affiliations=tuple(affiliations),
    )


def _validate_latlon(row: dict) -> tuple[float, float]:
    lat = _require(row, "lat", (int, float))
    lon = _require(row, "lon", (int, float))
    if not -90.0 <= lat <= 90.0:
        raise _RowError("invalid_latitude")
    if not -180.0 <= lon <= 180.0:
        raise _RowError("invalid_longitude")
    return (float(lat), float(lon))


def _validate_institute(row: dict, config: IngestConfig) -> InstituteEntry:
    rid = _require(row, "registry_id", str)
    if not rid:
        raise _RowError("invalid_registry_id")
    name = _require(row, "name", str)
    if not name.strip():
        raise _RowError("empty_name")
    aliases = _string_list(row, "aliases")
    location = _validate_latlon(row)
    return InstituteEntry(registry_id=rid, canonical_name=name, aliases=tuple(aliases), location=location)


def _validate_company(row: dict, config: IngestConfig) -> CompanyRecord:
    cid = _require(row, "id", str)
    if not cid:
        raise _RowError("invalid_id")
    description = _require(row, "description", str)
    categories = _string_list(row, "categories")
    founded = row.get("founded_year")
    if founded is not None and (not isinstance(founded, int) or isinstance(founded, bool)):
        raise _RowError("invalid_founded_year")
    location = _validate_latlon(row)
    return CompanyRecord(
        id=cid,
        description=description,
        categories=frozenset(categories),
        founded_year=founded,
        location=location,
    )


def _ingest_boundaries(path: Path) -> IngestResult:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"boundaries file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError("boundaries file is not a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise IngestError("FeatureCollection has no features list")
    records: list[Region] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    for idx, feature in enumerate(features, start=1):
        try:
            region = _validate_feature(feature)
        except _RowError as exc:
            rejections.append(Rejection(idx, exc.code))
            continue
        if region.region_id in seen:
            rejections.append(Rejection(idx, "duplicate_id"))
            continue
        seen.add(region.region_id)
        records.append(region)
    return IngestResult(kind="boundaries", records=records, rejections=rejections)


def _validate_feature(feature: Any) -> Region:
    if not isinstance(feature, dict):
        raise _RowError("invalid_feature")
    props = feature.get("properties")
    if not isinstance(props, dict):
        raise _RowError("missing_properties")
    region_id = props.get("region_id")
    if not isinstance(region_id, str) or not region_id:
        raise _RowError("invalid_region_id")
    country = props.get("country_code")
    if not isinstance(country, str) or len(country) != 2:
        raise _RowError("invalid_country_code")
    geometry = feature.get("geometry")
    if not isinstance(geometry, dict):
        raise _RowError("missing_geometry")
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Polygon":
        raw_polygons = [coords]
    elif gtype == "MultiPolygon":
        raw_polygons = coords
    else:
        raise _RowError("unsupported_geometry_type")
    if not isinstance(raw_polygons, list) or not raw_polygons:
        raise _RowError("invalid_coordinates")
    polygons: list[Polygon] = []
    for raw_poly in raw_polygons:
        if not isinstance(raw_poly, list) or not raw_poly:
            raise _RowError("invalid_coordinates")
        rings: list[Ring] = []
        for raw_ring in raw_poly:
            rings.append(_validate_ring(raw_ring))
        polygons.append(tuple(rings))
    return Region(region_id=region_id, country_code=country, polygons=tuple(polygons))


def _validate_ring(raw_ring: Any) -> Ring:
    if not isinstance(raw_ring, list):
        raise _RowError("invalid_coordinates")
    ring: list[tuple[float, float]] = []
    for pt in raw_ring:
        if (
            not isinstance(pt, (list, tuple))
            or len(pt) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pt)
        ):
            raise _RowError("invalid_coordinates")
        # GeoJSON stores [lon, lat]; internally we keep (lat, lon).
        lon, lat = float(pt[0]), float(pt[1])
        if not -90.0 <= lat <= 90.0:
            raise _RowError("invalid_latitude")
        if not -180.0 <= lon <= 180.0:
            raise _RowError("invalid_longitude")
        ring.append((lat, lon))
    if len(ring) < 4:
        raise _RowError("ring_too_short")
    if ring[0] != ring[-1]:
        raise _RowError("ring_not_closed")
    lons = [lon for _, lon in ring]
    if max(lons) - min(lons) > 180.0:
        # Antimeridian-crossing rings must be pre-split by the caller.
        raise _RowError("ring_spans_antimeridian")
    return tuple(ring)
