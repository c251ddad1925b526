"""Persisted pipeline artifacts with content digests and schema versioning.

Artifacts are canonical JSON: keys sorted, no insignificant whitespace
variation, so identical content always produces identical bytes and the
sha256 digest doubles as a cache key for stage skipping.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

__all__ = [
    "ARTIFACT_KINDS",
    "SCHEMA_VERSIONS",
    "PipelineArtifact",
    "IncompatibleSchemaError",
    "ArtifactError",
    "persist_artifact",
    "load_artifact",
    "artifact_digest",
    "file_digest",
]

ARTIFACT_KINDS = (
    "linked_corpus",
    "labeled_corpus",
    "activity_matrix",
    "relatedness_matrix",
    "feature_table",
    "model_report",
)

# Current schema version per kind; bump on payload layout changes.
SCHEMA_VERSIONS = {kind: 1 for kind in ARTIFACT_KINDS}


class ArtifactError(Exception):
    pass


class IncompatibleSchemaError(ArtifactError):
    """Raised when a stored artifact's schema version does not match."""

    code = "incompatible_schema"


@dataclass
class PipelineArtifact:
    kind: str
    payload: dict[str, Any]
    provenance: dict[str, Any]
    schema_version: int = 0  # 0 = fill from SCHEMA_VERSIONS

    def __post_init__(self) -> None:
        if self.kind not in ARTIFACT_KINDS:
            raise ArtifactError(f"unknown artifact kind: {self.kind!r}")
        if self.schema_version == 0:
            self.schema_version = SCHEMA_VERSIONS[self.kind]


def _canonical_bytes(artifact: PipelineArtifact) -> bytes:
    doc = asdict(artifact)
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def artifact_digest(artifact: PipelineArtifact) -> str:
    return hashlib.sha256(_canonical_bytes(artifact)).hexdigest()


def persist_artifact(artifact: PipelineArtifact, path: str | Path) -> str:
    """Write the artifact as canonical JSON; returns its sha256 digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _canonical_bytes(artifact)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_artifact(path: str | Path, expected_kind: str | None = None) -> PipelineArtifact:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"artifact {path} is not valid JSON: {exc}") from exc
    for key in ("kind", "schema_version", "payload", "provenance"):
        if key not in doc:
            raise ArtifactError(f"artifact {path} is missing field {key!r}")
    kind = doc["kind"]
    if kind not in ARTIFACT_KINDS:
        raise ArtifactError(f"artifact {path} has unknown kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise ArtifactError(f"artifact {path} has kind {kind!r}, expected {expected_kind!r}")
    version = doc["schema_version"]
    if version != SCHEMA_VERSIONS[kind]:
        raise IncompatibleSchemaError(
            f"artifact {path} has schema_version {version}, "
            f"engine supports {SCHEMA_VERSIONS[kind]} for kind {kind!r}"
        )
    return PipelineArtifact(
        kind=kind,
        schema_version=version,
        payload=doc["payload"],
        provenance=doc["provenance"],
    )


def file_digest(path: str | Path) -> str:
    """sha256 of a file's raw bytes (used for input provenance)."""
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
