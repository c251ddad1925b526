"""Run configuration: a single JSON file, environment overrides and the
parameter hash that keys stage skipping.

The hash covers parameter blocks and the seed but not file paths or the
output directory, so two runs over byte-identical inputs hash the same
wherever the files live.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

__all__ = ["ConfigError", "RunConfig", "load_config", "ENV_PREFIX"]

ENV_PREFIX = "SCIGEO_"


class ConfigError(Exception):
    pass


@dataclass
class IngestBlock:
    min_year: int = 1990
    max_year: int = 2030


@dataclass
class PreprocessBlock:
    min_tokens: int = 20
    rare_word_min_count: int = 5
    ngram_min_count: int = 10
    stemmer: str = "suffix"
    stop_words_path: str | None = None


@dataclass
class MatchingBlock:
    algorithms: list[str] = field(default_factory=lambda: ["token_sort_ratio", "partial_ratio"])
    min_accept_score: float = 0.75


@dataclass
class LabelingBlock:
    topic_model_path: str = ""
    gamma: float = 0.5
    dl_topic_ids: list[str] = field(default_factory=list)
    require_positive_score: bool = True
    dl_rule: str = "any"  # "any" (broad) or "all" (strict preset)


@dataclass
class SplitBlock:
    t0_max_year: int = 2012


@dataclass
class FiltersBlock:
    citation_filter: str = "above_median"  # or "none"
    country_floor_percentile: float = 0.0
    region_floor_percentile: float = 0.0
    top_k_countries: int = 10
    top_k_regions: int = 30
    dispersion_top_countries: int = 50
    dispersion_top_regions: int = 150
    impact_min_years: list[int] = field(default_factory=lambda: [2009, 2012, 2015])
    moving_average_window: int = 3


@dataclass
class ClassifierBlock:
    lambda_grid: list[float] = field(default_factory=lambda: [0.0001, 0.001, 0.01, 0.1, 1.0])
    validation_fraction: float = 0.2
    min_examples: int = 50
    prediction_threshold: float = 0.99
    min_description_tokens: int = 1
    company_founded_max_year: int | None = None


@dataclass
class RegressionBlock:
    sample_floor_percentile: float | None = 75.0
    china_country_code: str = "CN"
    per_subject_top_n: int = 10


_BLOCKS = {
    "ingest": IngestBlock,
    "preprocess": PreprocessBlock,
    "matching": MatchingBlock,
    "labeling": LabelingBlock,
    "split": SplitBlock,
    "filters": FiltersBlock,
    "classifier": ClassifierBlock,
    "regression": RegressionBlock,
}

_PATH_KEYS = ("papers", "registry", "companies", "boundaries")


@dataclass
class RunConfig:
    papers_path: Path
    registry_path: Path
    companies_path: Path
    boundaries_path: Path
    output_dir: Path
    seed: int = 0
    ingest: IngestBlock = field(default_factory=IngestBlock)
    preprocess: PreprocessBlock = field(default_factory=PreprocessBlock)
    matching: MatchingBlock = field(default_factory=MatchingBlock)
    labeling: LabelingBlock = field(default_factory=LabelingBlock)
    split: SplitBlock = field(default_factory=SplitBlock)
    filters: FiltersBlock = field(default_factory=FiltersBlock)
    classifier: ClassifierBlock = field(default_factory=ClassifierBlock)
    regression: RegressionBlock = field(default_factory=RegressionBlock)

    def input_paths(self) -> dict[str, Path]:
        paths = {
            "papers": self.papers_path,
            "registry": self.registry_path,
            "companies": self.companies_path,
            "boundaries": self.boundaries_path,
        }
        if self.labeling.topic_model_path:
            paths["topic_model"] = Path(self.labeling.topic_model_path)
        return paths

    def parameter_hash(self) -> str:
        """Hash of all parameter blocks and the seed; paths excluded."""
        doc: dict[str, Any] = {"seed": self.seed}
        for name in _BLOCKS:
            block = asdict(getattr(self, name))
            block.pop("topic_model_path", None)
            block.pop("stop_words_path", None)
            doc[name] = block
        data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(data).hexdigest()

    def validate(self) -> None:
        missing = [str(p) for p in self.input_paths().values() if not Path(p).is_file()]
        if missing:
            raise ConfigError(f"input files not found: {missing}")
        if not self.labeling.topic_model_path:
            raise ConfigError("labeling.topic_model_path is required")
        if not self.labeling.dl_topic_ids:
            raise ConfigError("labeling.dl_topic_ids must be non-empty")
        if self.filters.citation_filter not in ("above_median", "none"):
            raise ConfigError(f"unknown citation_filter {self.filters.citation_filter!r}")


def _env_overrides(environ: Mapping[str, str]) -> dict:
    """SCIGEO_SEED=7 sets seed; SCIGEO_LABELING__GAMMA=0.6 sets a block key."""
    out: dict[str, Any] = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        tail = key[len(ENV_PREFIX) :].lower()
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if "__" in tail:
            block, item = tail.split("__", 1)
            out.setdefault(block, {})[item] = value
        else:
            out[tail] = value
    return out


def _merge(base: dict, override: Mapping) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    path: str | Path,
    output_dir: str | Path | None = None,
    seed: int | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Parse the JSON config, apply env overrides, then CLI overrides."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    doc = _merge(doc, _env_overrides(environ if environ is not None else os.environ))

    inputs = doc.get("inputs")
    if not isinstance(inputs, dict):
        raise ConfigError("config needs an 'inputs' object with the four input paths")
    missing = [k for k in _PATH_KEYS if k not in inputs]
    if missing:
        raise ConfigError(f"inputs is missing {missing}")
    base_dir = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base_dir / candidate

    out_dir = output_dir if output_dir is not None else doc.get("output_dir", "out")
    blocks: dict[str, Any] = {}
    for name, cls in _BLOCKS.items():
        raw = doc.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"config block {name!r} must be an object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown keys in block {name!r}: {sorted(unknown)}")
        try:
            blocks[name] = cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad block {name!r}: {exc}") from exc
    if blocks["labeling"].topic_model_path:
        blocks["labeling"].topic_model_path = str(resolve(blocks["labeling"].topic_model_path))
    cfg = RunConfig(
        papers_path=resolve(inputs["papers"]),
        registry_path=resolve(inputs["registry"]),
        companies_path=resolve(inputs["companies"]),
        boundaries_path=resolve(inputs["boundaries"]),
        output_dir=Path(out_dir) if Path(out_dir).is_absolute() else base_dir / out_dir,
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        **blocks,
    )
    cfg.validate()
    return cfg
