"""Stage orchestration: ingest -> link -> geocode -> label -> relate ->
metrics -> regress -> report, with content-digest skipping.

Every stage persists artifacts whose provenance embeds the parameter hash
and the digests of the stage's inputs; rerunning an unchanged stage is a
no-op.  The report stage turns artifacts into the plot-ready CSV/JSON
file set and a manifest.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import artifacts as art
from . import econometrics as econ
from . import metrics as met
from .config import RunConfig
from .corpus import CompanyRecord, IngestConfig, PaperRecord, Region, ingest_dataset, write_rejection_report
from .geo import ActivityMatrix, aggregate_activity, assign_region
from .linkage import FuzzyMatchConfig, link_corpus
from .metrics import UndefinedScoreError
from .relatedness import (
    DL_CATEGORY,
    research_industry_relatedness,
    subject_relatedness,
    train_category_classifier,
)
from .topics import (
    PreprocessConfig,
    TopicAssignmentConfig,
    label_dl,
    load_topic_model,
    preprocess_corpus,
)

__all__ = ["PipelineRunner", "PipelineError", "MissingPrerequisiteError", "StageValidationError", "STAGES", "REPORT_FILES"]

log = logging.getLogger(__name__)

STAGES = ("ingest", "link", "geocode", "label", "relate", "metrics", "regress", "report")

REPORT_FILES = (
    "rca_by_country.csv",
    "rca_by_region.csv",
    "rca_changes.csv",
    "concentration_timeseries.csv",
    "dispersion_timeseries.csv",
    "dl_share_timeseries.csv",
    "subject_shares.csv",
    "impact_shares.csv",
    "relatedness_subjects.csv",
    "relatedness_industry.csv",
    "regression_table.json",
    "per_subject_coefficients.csv",
    "choropleth.geojson",
    "manifest.json",
)


class PipelineError(Exception):
    pass


class MissingPrerequisiteError(PipelineError):
    def __init__(self, artifact_name: str):
        super().__init__(f"missing prerequisite artifact: {artifact_name}")
        self.artifact_name = artifact_name


class StageValidationError(PipelineError):
    pass


_STAGE_ARTIFACTS: dict[str, tuple[str, ...]] = {
    "link": ("linked_corpus",),
    "geocode": ("geocoded_papers", "geocoded_companies"),
    "label": ("labeled_corpus",),
    "relate": ("subject_relatedness", "industry_relatedness", "classifier"),
    "metrics": ("activity_matrices",),
    "regress": ("feature_table", "regression_report", "per_subject_report"),
}

_ARTIFACT_KINDS: dict[str, str] = {
    "linked_corpus": "linked_corpus",
    "geocoded_papers": "linked_corpus",
    "geocoded_companies": "linked_corpus",
    "labeled_corpus": "labeled_corpus",
    "subject_relatedness": "relatedness_matrix",
    "industry_relatedness": "relatedness_matrix",
    "classifier": "model_report",
    "activity_matrices": "activity_matrix",
    "feature_table": "feature_table",
    "regression_report": "model_report",
    "per_subject_report": "model_report",
}

_STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "link": (),
    "geocode": ("linked_corpus",),
    "label": (),
    "relate": ("labeled_corpus", "geocoded_papers", "geocoded_companies"),
    "metrics": ("labeled_corpus", "geocoded_papers", "geocoded_companies"),
    "regress": ("activity_matrices", "subject_relatedness", "industry_relatedness"),
    "report": ("labeled_corpus", "geocoded_papers", "activity_matrices"),
}

# Artifacts the report stage uses when present; their digests join its
# provenance so changes retrigger the stage.
_STAGE_OPTIONAL_DEPS: dict[str, tuple[str, ...]] = {
    "report": (
        "subject_relatedness",
        "industry_relatedness",
        "regression_report",
        "per_subject_report",
    ),
}

_STAGE_INPUT_FILES: dict[str, tuple[str, ...]] = {
    "ingest": ("papers", "registry", "companies", "boundaries", "topic_model"),
    "link": ("papers", "registry"),
    "geocode": ("papers", "registry", "companies", "boundaries"),
    "label": ("papers", "topic_model"),
    "relate": ("papers", "companies"),
    "metrics": ("papers", "boundaries"),
    "regress": ("boundaries",),
    "report": ("boundaries",),
}


class PipelineRunner:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = Path(config.output_dir)
        self.artifacts_dir = self.out_dir / "artifacts"
        self.reports_dir = self.out_dir / "reports"
        self._input_digest_cache: dict[str, str] = {}

    # ------------------------------------------------------------------
    # plumbing

    def artifact_path(self, name: str) -> Path:
        return self.artifacts_dir / f"{name}.json"

    def _input_digest(self, key: str) -> str:
        if key not in self._input_digest_cache:
            self._input_digest_cache[key] = art.file_digest(self.config.input_paths()[key])
        return self._input_digest_cache[key]

    def _provenance(self, stage: str) -> dict:
        inputs: dict[str, str] = {}
        for key in _STAGE_INPUT_FILES.get(stage, ()):
            inputs[f"file:{key}"] = self._input_digest(key)
        for dep in _STAGE_DEPS.get(stage, ()):
            path = self.artifact_path(dep)
            if not path.is_file():
                raise MissingPrerequisiteError(dep)
            inputs[f"artifact:{dep}"] = art.file_digest(path)
        for dep in _STAGE_OPTIONAL_DEPS.get(stage, ()):
            path = self.artifact_path(dep)
            if path.is_file():
                inputs[f"artifact:{dep}"] = art.file_digest(path)
        return {"config_hash": self.config.parameter_hash(), "inputs": inputs}

    def _write_artifact(self, name: str, payload: dict, provenance: dict) -> None:
        artifact = art.PipelineArtifact(kind=_ARTIFACT_KINDS[name], payload=payload, provenance=provenance)
        art.persist_artifact(artifact, self.artifact_path(name))

    def _load_payload(self, name: str) -> dict:
        path = self.artifact_path(name)
        if not path.is_file():
            raise MissingPrerequisiteError(name)
        return art.load_artifact(path, expected_kind=_ARTIFACT_KINDS[name]).payload

    def is_up_to_date(self, stage: str) -> bool:
        """A stage is current when all outputs exist with the expected provenance."""
        try:
            expected = self._provenance(stage)
        except MissingPrerequisiteError:
            return False
        if stage == "ingest":
            marker = self.reports_dir / "ingest_summary.json"
            if not marker.is_file():
                return False
            try:
                doc = json.loads(marker.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                return False
            return doc.get("provenance") == expected
        if stage == "report":
            marker = self.reports_dir / "manifest.json"
            if not marker.is_file():
                return False
            try:
                doc = json.loads(marker.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                return False
            if doc.get("provenance") != expected:
                return False
            return all((self.reports_dir / f).is_file() for f in doc.get("files", {}))
        for name in _STAGE_ARTIFACTS[stage]:
            path = self.artifact_path(name)
            if not path.is_file():
                return False
            try:
                stored = art.load_artifact(path, expected_kind=_ARTIFACT_KINDS[name])
            except art.ArtifactError:
                return False
            if stored.provenance != expected:
                return False
        return True

    def run_stage(self, stage: str, force: bool = False) -> str:
        """Execute one stage; returns "ran" or "skipped"."""
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        if not force and self.is_up_to_date(stage):
            log.info("stage %s is up to date, skipping", stage)
            return "skipped"
        provenance = self._provenance(stage)
        getattr(self, f"_run_{stage}")(provenance)
        return "ran"

    def run_all(self, force: bool = False) -> dict[str, str]:
        return {stage: self.run_stage(stage, force=force) for stage in STAGES}

    # ------------------------------------------------------------------
    # corpus access (deterministic re-reads of validated inputs)

    def _papers(self) -> list[PaperRecord]:
        cfg = self.config.ingest
        result = ingest_dataset(
            "papers", self.config.papers_path, IngestConfig(cfg.min_year, cfg.max_year)
        )
        return result.records

    def _registry(self):
        return ingest_dataset("registry", self.config.registry_path).records

    def _companies(self) -> list[CompanyRecord]:
        return ingest_dataset("companies", self.config.companies_path).records

    def _regions(self) -> list[Region]:
        return ingest_dataset("boundaries", self.config.boundaries_path).records

    # ------------------------------------------------------------------
    # stages

    def _run_ingest(self, provenance: dict) -> None:
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        summary: dict[str, Any] = {"provenance": provenance, "datasets": {}}
        kinds = {
            "papers": self.config.papers_path,
            "registry": self.config.registry_path,
            "companies": self.config.companies_path,
            "boundaries": self.config.boundaries_path,
        }
        ingest_cfg = IngestConfig(self.config.ingest.min_year, self.config.ingest.max_year)
        for kind, path in kinds.items():
            result = ingest_dataset(kind, path, ingest_cfg)
            write_rejection_report(result, self.reports_dir / f"ingest_rejections_{kind}.csv")
            summary["datasets"][kind] = result.counts
        # the topic model must at least parse
        load_topic_model(self.config.labeling.topic_model_path)
        _write_json(self.reports_dir / "ingest_summary.json", summary)

    def _run_link(self, provenance: dict) -> None:
        papers = self._papers()
        registry = self._registry()
        if not registry:
            raise StageValidationError("registry has no valid entries")
        cfg = FuzzyMatchConfig(
            algorithms=tuple(self.config.matching.algorithms),
            min_accept_score=self.config.matching.min_accept_score,
        )
        linked = link_corpus(papers, registry, cfg)
        rows = [
            [p.id, res.query_name, res.matched_id, res.score, res.method]
            for p in papers
            for res in linked.links[p.id]
        ]
        payload = {
            "columns": ["paper_id", "affiliation", "matched_id", "score", "method"],
            "rows": rows,
            "report": linked.report.to_dict(),
        }
        self._write_artifact("linked_corpus", payload, provenance)
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        with (self.reports_dir / "link_report.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["query_name", "matched_id", "score", "method"])
            for row in rows:
                writer.writerow([row[1], _csv_cell(row[2]), row[3], row[4]])
        _write_json(self.reports_dir / "link_summary.json", linked.report.to_dict())

    def _run_geocode(self, provenance: dict) -> None:
        linked = self._load_payload("linked_corpus")
        papers = {p.id: p for p in self._papers()}
        registry = {e.registry_id: e for e in self._registry()}
        regions = self._regions()
        if not regions:
            raise StageValidationError("boundaries produced no valid regions")
        region_of_institute: dict[str, str | None] = {}
        for rid in sorted(registry):
            region_of_institute[rid] = assign_region(registry[rid].location, regions)
        paper_regions: dict[str, set[str]] = {pid: set() for pid in papers}
        for row in linked["rows"]:
            paper_id, _aff, matched_id = row[0], row[1], row[2]
            if matched_id is None or paper_id not in paper_regions:
                continue
            region = region_of_institute.get(matched_id)
            if region is not None:
                paper_regions[paper_id].add(region)
        paper_rows = [
            [
                pid,
                papers[pid].pub_year,
                papers[pid].citations,
                sorted(papers[pid].subjects),
                sorted(paper_regions[pid]),
            ]
            for pid in papers
        ]
        self._write_artifact(
            "geocoded_papers",
            {
                "columns": ["paper_id", "pub_year", "citations", "subjects", "regions"],
                "rows": paper_rows,
            },
            provenance,
        )
        companies = self._companies()
        company_rows = []
        for c in companies:
            region = assign_region(c.location, regions)
            company_rows.append([c.id, region, sorted(c.categories), c.founded_year, c.trainable])
        self._write_artifact(
            "geocoded_companies",
            {
                "columns": ["company_id", "region_id", "categories", "founded_year", "trainable"],
                "rows": company_rows,
            },
            provenance,
        )

    def _preprocess_config(self) -> PreprocessConfig:
        block = self.config.preprocess
        stop = None
        if block.stop_words_path:
            words = Path(block.stop_words_path).read_text(encoding="utf-8").split()
            stop = frozenset(words)
        return PreprocessConfig(
            stop_words=stop,
            min_tokens=block.min_tokens,
            rare_word_min_count=block.rare_word_min_count,
            ngram_min_count=block.ngram_min_count,
            stemmer=block.stemmer,
        )

    def _labeling_config(self) -> TopicAssignmentConfig:
        block = self.config.labeling
        return TopicAssignmentConfig(
            gamma=block.gamma,
            dl_topic_ids=frozenset(block.dl_topic_ids),
            require_positive_score=block.require_positive_score,
            dl_rule=block.dl_rule,
        )

    def _run_label(self, provenance: dict) -> None:
        papers = self._papers()
        model = load_topic_model(self.config.labeling.topic_model_path)
        processed = preprocess_corpus([(p.id, p.abstract) for p in papers], self._preprocess_config())
        flags, assignments, summary = label_dl(processed.documents, model, self._labeling_config())
        rows = [
            [doc.paper_id, flags[doc.paper_id], sorted(assignments[doc.paper_id]), doc.token_count]
            for doc in processed.documents
        ]
        payload = {
            "columns": ["paper_id", "dl_flag", "assigned_topics", "token_count"],
            "rows": rows,
            "dropped": [[d.paper_id, d.token_count] for d in processed.dropped],
            "summary": {
                "labeled": summary.labeled,
                "flagged": summary.flagged,
                "share": summary.share,
            },
        }
        self._write_artifact("labeled_corpus", payload, provenance)
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        with (self.reports_dir / "label_output.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["paper_id", "dl_flag", "assigned_topics"])
            for row in rows:
                writer.writerow([row[0], row[1], ";".join(row[2])])

    def _dl_flags(self) -> dict[str, bool]:
        labeled = self._load_payload("labeled_corpus")
        return {row[0]: bool(row[1]) for row in labeled["rows"]}

    def _run_relate(self, provenance: dict) -> None:
        papers = self._papers()
        flags = self._dl_flags()
        subject_matrix, excluded_subjects = subject_relatedness(papers, flags)
        self._write_artifact(
            "subject_relatedness",
            {
                "ids": list(subject_matrix.ids),
                "values": subject_matrix.values.tolist(),
                "excluded": excluded_subjects,
            },
            provenance,
        )
        block = self.config.classifier
        companies = self._companies()
        classifier = train_category_classifier(
            companies,
            lambda_grid=tuple(block.lambda_grid),
            validation_fraction=block.validation_fraction,
            min_examples=block.min_examples,
            seed=self.config.seed,
            preprocess=PreprocessConfig(
                min_tokens=block.min_description_tokens,
                rare_word_min_count=1,
                ngram_min_count=self.config.preprocess.ngram_min_count,
                stemmer=self.config.preprocess.stemmer,
            ),
        )
        self._write_artifact("classifier", classifier.to_json_dict(), provenance)
        processed = preprocess_corpus([(p.id, p.abstract) for p in papers], self._preprocess_config())
        documents = processed.by_id()
        matrix, excluded_rows = research_industry_relatedness(
            papers, documents, classifier, threshold=block.prediction_threshold, dl_flags=flags
        )
        self._write_artifact(
            "industry_relatedness",
            {
                "row_ids": list(matrix.row_ids),
                "col_ids": list(matrix.col_ids),
                "values": matrix.values.tolist(),
                "excluded": excluded_rows,
            },
            provenance,
        )

    # -- corpus views over artifacts -----------------------------------

    def _geocoded_paper_view(self) -> list[dict]:
        payload = self._load_payload("geocoded_papers")
        return [
            {
                "paper_id": row[0],
                "pub_year": int(row[1]),
                "citations": int(row[2]),
                "subjects": list(row[3]),
                "regions": list(row[4]),
            }
            for row in payload["rows"]
        ]

    @staticmethod
    def _as_paper_records(view: Sequence[dict]) -> list[PaperRecord]:
        return [
            PaperRecord(
                id=row["paper_id"],
                title="",
                abstract="",
                subjects=frozenset(row["subjects"]),
                pub_year=row["pub_year"],
                citations=row["citations"],
                affiliations=(),
                resolved_regions=frozenset(row["regions"]),
            )
            for row in view
        ]

    def _region_country_map(self) -> dict[str, str]:
        return {r.region_id: r.country_code for r in self._regions()}

    def _run_metrics(self, provenance: dict) -> None:
        view = self._geocoded_paper_view()
        papers = self._as_paper_records(view)
        flags = self._dl_flags()
        region_country = self._region_country_map()
        if self.config.filters.citation_filter == "above_median":
            rca_papers, dropped_years = met.above_median_citations(papers)
        else:
            rca_papers, dropped_years = list(papers), []
        hc_flags = met.highly_cited_flags(papers)
        hc_papers = [p for p in papers if hc_flags[p.id]]
        split = met.PeriodSplit(self.config.split.t0_max_year)

        def dl_cat(paper: PaperRecord) -> list[str]:
            return ["dl"] if flags.get(paper.id, False) else ["non_dl"]

        def subjects_cat(paper: PaperRecord) -> list[str]:
            return sorted(paper.subjects)

        def regions_of(paper: PaperRecord) -> list[str]:
            return sorted(paper.resolved_regions or ())

        matrices: dict[str, ActivityMatrix] = {}
        for level in ("region", "country"):
            kwargs = dict(
                level=level,
                location_extractor=regions_of,
                region_to_country=region_country if level == "country" else None,
            )
            for period in ("t0", "t1"):
                subset = [p for p in rca_papers if split.period(p.pub_year) == period]
                matrices[f"dl_{level}_{period}"] = aggregate_activity(subset, category_extractor=dl_cat, **kwargs)
            for year in sorted({p.pub_year for p in rca_papers}):
                subset = [p for p in rca_papers if p.pub_year == year]
                matrices[f"dl_{level}_year_{year}"] = aggregate_activity(subset, category_extractor=dl_cat, **kwargs)
            for year in sorted({p.pub_year for p in hc_papers}):
                subset = [p for p in hc_papers if p.pub_year == year]
                matrices[f"hc_{level}_year_{year}"] = aggregate_activity(subset, category_extractor=dl_cat, **kwargs)
        for period in ("t0", "t1"):
            subset = [p for p in rca_papers if split.period(p.pub_year) == period]
            matrices[f"subjects_region_{period}"] = aggregate_activity(
                subset,
                level="region",
                category_extractor=subjects_cat,
                location_extractor=regions_of,
            )
        founded_max = self.config.classifier.company_founded_max_year
        company_rows = self._load_payload("geocoded_companies")["rows"]
        company_view = [
            {"id": row[0], "region": row[1], "categories": list(row[2]), "founded": row[3]}
            for row in company_rows
            if founded_max is None or row[3] is None or int(row[3]) <= founded_max
        ]
        matrices["companies_region"] = aggregate_activity(
            company_view,
            level="region",
            category_extractor=lambda c: c["categories"],
            location_extractor=lambda c: [c["region"]] if c["region"] else [],
        )
        payload = {
            "matrices": {name: matrices[name].to_payload() for name in sorted(matrices)},
            "citation_filter": self.config.filters.citation_filter,
            "dropped_years": dropped_years,
            "split_year": self.config.split.t0_max_year,
        }
        self._write_artifact("activity_matrices", payload, provenance)

    def _matrices(self) -> dict[str, ActivityMatrix]:
        payload = self._load_payload("activity_matrices")
        return {name: ActivityMatrix.from_payload(p) for name, p in payload["matrices"].items()}

    def _similarity_rows(self) -> tuple[dict[str, dict[str, float]], dict[str, dict[str, float]]]:
        """Per-target similarity rows over subjects and over sectors."""
        subj = self._load_payload("subject_relatedness")
        ids = list(subj["ids"])
        values = subj["values"]
        subject_rows = {
            a: {b: float(values[i][j]) for j, b in enumerate(ids)} for i, a in enumerate(ids)
        }
        ind = self._load_payload("industry_relatedness")
        industry_rows = {
            r: {c: float(ind["values"][i][j]) for j, c in enumerate(ind["col_ids"])}
            for i, r in enumerate(ind["row_ids"])
        }
        return subject_rows, industry_rows

    def _feature_inputs_for_target(
        self,
        target: str,
        matrices: Mapping[str, ActivityMatrix],
        subject_rows: Mapping[str, Mapping[str, float]],
        industry_rows: Mapping[str, Mapping[str, float]],
    ) -> dict[str, dict[str, float]] | None:
        """Per-region regression inputs for one target category.

        The target is the marked category (DL) or any research subject; its
        RCA comes from the marked-label matrices or the subject matrices
        respectively, and both specialization weights are the target's
        similarity rows.  Returns None when the target cannot be scored.
        """
        if target not in subject_rows or target not in industry_rows:
            return None
        subject_tables = met.rca_table(
            {p: matrices[f"subjects_region_{p}"] for p in ("t0", "t1")},
            activity_floor_percentile=0.0,
        )
        if target == DL_CATEGORY:
            dl_tables = met.rca_table(
                {p: matrices[f"dl_region_{p}"] for p in ("t0", "t1")},
                activity_floor_percentile=0.0,
            )
            target_rca = {
                period: {
                    loc: vec["dl"]
                    for loc, vec in dl_tables.values[period].items()
                    if "dl" in vec
                }
                for period in ("t0", "t1")
            }
        else:
            target_rca = {
                period: {
                    loc: vec[target]
                    for loc, vec in subject_tables.values[period].items()
                    if target in vec
                }
                for period in ("t0", "t1")
            }
        company_table = met.rca_table(
            {"all": matrices["companies_region"]}, activity_floor_percentile=0.0
        )
        sim_subjects = subject_rows[target]
        sim_sectors = industry_rows[target]
        arxiv_sp: dict[str, float] = {}
        for loc, vec in subject_tables.values["t0"].items():
            try:
                arxiv_sp[loc] = met.related_specialization(vec, sim_subjects, target)
            except UndefinedScoreError:
                continue
        crunchbase_sp: dict[str, float] = {}
        for loc, vec in company_table.values["all"].items():
            try:
                crunchbase_sp[loc] = met.related_specialization(vec, sim_sectors, target)
            except UndefinedScoreError:
                continue
        dl_t0 = matrices["dl_region_t0"]
        arxiv_tot = {
            loc: float(total)
            for loc, total in zip(dl_t0.row_ids, dl_t0.row_marginals())
        }
        comp = matrices["companies_region"]
        crunchbase_tot = {
            loc: float(total) for loc, total in zip(comp.row_ids, comp.row_marginals())
        }
        return {
            "rca_t0": target_rca["t0"],
            "rca_t1": target_rca["t1"],
            "arxiv_sp": arxiv_sp,
            "crunchbase_sp": crunchbase_sp,
            "arxiv_tot": arxiv_tot,
            "crunchbase_tot": crunchbase_tot,
        }

    def _build_table_for_target(
        self, target: str, matrices, subject_rows, industry_rows, region_country
    ) -> econ.FeatureTable | None:
        inputs = self._feature_inputs_for_target(target, matrices, subject_rows, industry_rows)
        if inputs is None:
            return None
        return econ.build_feature_table(
            rca_t0=inputs["rca_t0"],
            rca_t1=inputs["rca_t1"],
            arxiv_sp=inputs["arxiv_sp"],
            crunchbase_sp=inputs["crunchbase_sp"],
            arxiv_tot=inputs["arxiv_tot"],
            crunchbase_tot=inputs["crunchbase_tot"],
            region_country=region_country,
            china_country_code=self.config.regression.china_country_code,
            sample_floor_percentile=self.config.regression.sample_floor_percentile,
        )

    def _run_regress(self, provenance: dict) -> None:
        matrices = self._matrices()
        subject_rows, industry_rows = self._similarity_rows()
        region_country = self._region_country_map()
        table = self._build_table_for_target(
            DL_CATEGORY, matrices, subject_rows, industry_rows, region_country
        )
        if table is None or not table.rows:
            raise StageValidationError("feature table for the marked category is empty")
        feature_payload = {
            "columns": [
                "region_id",
                "country_code",
                "rca_t1",
                "rca_t0",
                "arxiv_sp",
                "crunchbase_sp",
                "arxiv_tot",
                "crunchbase_tot",
                "is_china",
            ],
            "rows": [
                [
                    r.region_id,
                    r.country_code,
                    r.rca_t1,
                    r.rca_t0,
                    r.arxiv_sp,
                    r.crunchbase_sp,
                    r.arxiv_tot,
                    r.crunchbase_tot,
                    r.is_china,
                ]
                for r in table.rows
            ],
            "excluded": table.excluded,
            "standardization": table.standardization,
        }
        self._write_artifact("feature_table", feature_payload, provenance)
        suite = econ.run_model_suite(table)
        self._write_artifact("regression_report", suite, provenance)

        # quasi-control runs across the top research subjects
        subjects_t0 = matrices["subjects_region_t0"]
        totals = {
            s: int(t) for s, t in zip(subjects_t0.col_ids, subjects_t0.col_marginals())
        }
        top_n = self.config.regression.per_subject_top_n
        targets = sorted(totals, key=lambda s: (-totals[s], s))[:top_n]
        tables: dict[str, econ.FeatureTable] = {DL_CATEGORY: table}
        unbuildable: dict[str, str] = {}
        for subject in targets:
            sub_table = self._build_table_for_target(
                subject, matrices, subject_rows, industry_rows, region_country
            )
            if sub_table is None:
                unbuildable[subject] = "no relatedness rows for target"
                continue
            tables[subject] = sub_table
        results, skipped = econ.per_subject_models(tables)
        skipped.update(unbuildable)
        self._write_artifact(
            "per_subject_report",
            {"results": results, "skipped": dict(sorted(skipped.items()))},
            provenance,
        )

    # -- report emission ------------------------------------------------

    def _run_report(self, provenance: dict) -> None:
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        emitted: dict[str, str] = {}
        omissions: list[str] = []

        matrices = self._matrices()
        view = self._geocoded_paper_view()
        papers = self._as_paper_records(view)
        flags = self._dl_flags()
        filters = self.config.filters
        region_country = self._region_country_map()

        rca_region = self._emit_rca_level(
            "region", matrices, filters.region_floor_percentile, emitted
        )
        self._emit_rca_level("country", matrices, filters.country_floor_percentile, emitted)
        self._emit_rca_changes(matrices, emitted)
        self._emit_concentration(matrices, emitted)
        self._emit_dispersion(matrices, emitted)
        self._emit_dl_share(papers, flags, emitted)
        self._emit_subject_shares(papers, flags, emitted)
        self._emit_impact(papers, flags, emitted)
        self._emit_relatedness_files(emitted, omissions)
        self._emit_regression_files(emitted, omissions)
        self._emit_choropleth(rca_region, region_country, emitted)

        manifest = {
            "provenance": provenance,
            "seed": self.config.seed,
            "parameter_hash": self.config.parameter_hash(),
            "split_year": self.config.split.t0_max_year,
            "filters": {
                "citation_filter": filters.citation_filter,
                "country_floor_percentile": filters.country_floor_percentile,
                "region_floor_percentile": filters.region_floor_percentile,
            },
            "files": emitted,
            "omissions": sorted(omissions),
        }
        _write_json(self.reports_dir / "manifest.json", manifest)

    def _emit_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence], emitted: dict) -> None:
        path = self.reports_dir / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_csv_cell(v) for v in row])
        emitted[name] = art.file_digest(path)

    def _emit_rca_level(
        self, level: str, matrices, floor: float, emitted: dict
    ) -> met.RcaTable:
        table = met.rca_table(
            {p: matrices[f"dl_{level}_{p}"] for p in ("t0", "t1")},
            activity_floor_percentile=floor,
        )
        rows = []
        for period in ("t0", "t1"):
            matrix = matrices[f"dl_{level}_{period}"]
            totals = dict(zip(matrix.row_ids, matrix.row_marginals()))
            for loc in sorted(table.values[period]):
                vec = table.values[period][loc]
                if "dl" not in vec:
                    continue
                rows.append([loc, period, vec["dl"], int(totals[loc])])
        self._emit_csv(
            f"rca_by_{level}.csv", ["location", "period", "rca_dl", "total_activity"], rows, emitted
        )
        return table

    def _emit_rca_changes(self, matrices, emitted: dict) -> None:
        rows = []
        for level in ("country", "region"):
            table = met.rca_table(
                {p: matrices[f"dl_{level}_{p}"] for p in ("t0", "t1")},
                activity_floor_percentile=0.0,
            )
            dl_totals: dict[str, int] = {}
            for period in ("t0", "t1"):
                matrix = matrices[f"dl_{level}_{period}"]
                if "dl" in matrix.col_ids:
                    j = matrix.col_ids.index("dl")
                    for i, loc in enumerate(matrix.row_ids):
                        dl_totals[loc] = dl_totals.get(loc, 0) + int(matrix.counts[i, j])
            both = sorted(
                loc
                for loc in table.values["t0"]
                if loc in table.values["t1"]
                and "dl" in table.values["t0"][loc]
                and "dl" in table.values["t1"][loc]
            )
            for loc in both:
                r0 = table.values["t0"][loc]["dl"]
                r1 = table.values["t1"][loc]["dl"]
                rows.append([level, loc, r0, r1, r1 - r0, dl_totals.get(loc, 0)])
        self._emit_csv(
            "rca_changes.csv",
            ["level", "location", "rca_t0", "rca_t1", "change", "dl_activity"],
            rows,
            emitted,
        )

    def _emit_concentration(self, matrices, emitted: dict) -> None:
        filters = self.config.filters
        rows = []
        for level, k in (("country", filters.top_k_countries), ("region", filters.top_k_regions)):
            years = sorted(
                int(name.rsplit("_", 1)[1])
                for name in matrices
                if name.startswith(f"hc_{level}_year_")
            )
            for year in years:
                matrix = matrices[f"hc_{level}_year_{year}"]
                all_counts = {
                    loc: int(t) for loc, t in zip(matrix.row_ids, matrix.row_marginals()) if t > 0
                }
                if all_counts:
                    rows.append([year, level, "all", k, met.concentration_top_k(all_counts, k)])
                if "dl" in matrix.col_ids:
                    j = matrix.col_ids.index("dl")
                    dl_counts = {
                        loc: int(matrix.counts[i, j])
                        for i, loc in enumerate(matrix.row_ids)
                        if matrix.counts[i, j] > 0
                    }
                    if dl_counts:
                        rows.append([year, level, "dl", k, met.concentration_top_k(dl_counts, k)])
        self._emit_csv(
            "concentration_timeseries.csv", ["year", "level", "category", "k", "share"], rows, emitted
        )

    def _emit_dispersion(self, matrices, emitted: dict) -> None:
        filters = self.config.filters
        rows = []
        for level, top_n in (
            ("country", filters.dispersion_top_countries),
            ("region", filters.dispersion_top_regions),
        ):
            years = sorted(
                int(name.rsplit("_", 1)[1])
                for name in matrices
                if name.startswith(f"dl_{level}_year_")
            )
            yearly_rca: dict[int, dict[str, float]] = {}
            yearly_activity: dict[int, dict[str, float]] = {}
            for year in years:
                matrix = matrices[f"dl_{level}_year_{year}"]
                table = met.rca_table({"y": matrix}, activity_floor_percentile=0.0)
                yearly_rca[year] = {
                    loc: vec["dl"] for loc, vec in table.values["y"].items() if "dl" in vec
                }
                yearly_activity[year] = {
                    loc: float(t) for loc, t in zip(matrix.row_ids, matrix.row_marginals())
                }
            summaries, _omitted = met.rca_dispersion(yearly_rca, yearly_activity, top_n)
            for s in summaries:
                rows.append([s.year, level, "n", s.n])
                rows.append([s.year, level, "sd", s.sd])
                for key, q in zip(("q0", "q25", "q50", "q75", "q100"), s.quartiles):
                    rows.append([s.year, level, key, q])
                for loc in sorted(s.values):
                    rows.append([s.year, level, f"value:{loc}", s.values[loc]])
        self._emit_csv("dispersion_timeseries.csv", ["year", "level", "key", "value"], rows, emitted)

    def _emit_dl_share(self, papers, flags, emitted: dict) -> None:
        series = met.dl_share_timeseries(
            papers, flags, window=self.config.filters.moving_average_window
        )
        rows = [
            [r["year"], r["n_total"], r["n_flagged"], r["share"], r["moving_avg"]] for r in series
        ]
        self._emit_csv(
            "dl_share_timeseries.csv",
            ["year", "n_total", "n_dl", "share", "moving_avg"],
            rows,
            emitted,
        )

    def _emit_subject_shares(self, papers, flags, emitted: dict) -> None:
        split = met.PeriodSplit(self.config.split.t0_max_year)
        rows = [
            [r["subject"], r["share_t0"], r["share_t1"], r["total"]]
            for r in met.subject_share_before_after(papers, flags, split)
        ]
        self._emit_csv(
            "subject_shares.csv", ["subject", "share_t0", "share_t1", "total"], rows, emitted
        )

    def _emit_impact(self, papers, flags, emitted: dict) -> None:
        hc = met.highly_cited_flags(papers)
        rows = []
        for min_year in self.config.filters.impact_min_years:
            table, _excluded = met.impact_overrepresentation(papers, flags, hc, min_year)
            for r in table:
                rows.append([r["subject"], r["min_year"], r["share_all"], r["share_highly_cited"]])
        self._emit_csv(
            "impact_shares.csv",
            ["subject", "min_year", "dl_share_all", "dl_share_highly_cited"],
            rows,
            emitted,
        )

    def _emit_relatedness_files(self, emitted: dict, omissions: list[str]) -> None:
        try:
            subj = self._load_payload("subject_relatedness")
            ids = subj["ids"]
            rows = [
                [a, b, subj["values"][i][j]]
                for i, a in enumerate(ids)
                for j, b in enumerate(ids)
            ]
            self._emit_csv("relatedness_subjects.csv", ["row_id", "col_id", "value"], rows, emitted)
        except MissingPrerequisiteError:
            omissions.append("relatedness_subjects.csv")
        try:
            ind = self._load_payload("industry_relatedness")
            rows = [
                [r, c, ind["values"][i][j]]
                for i, r in enumerate(ind["row_ids"])
                for j, c in enumerate(ind["col_ids"])
            ]
            self._emit_csv("relatedness_industry.csv", ["row_id", "col_id", "value"], rows, emitted)
        except MissingPrerequisiteError:
            omissions.append("relatedness_industry.csv")

    def _emit_regression_files(self, emitted: dict, omissions: list[str]) -> None:
        try:
            suite = self._load_payload("regression_report")
            path = self.reports_dir / "regression_table.json"
            _write_json(path, suite)
            emitted["regression_table.json"] = art.file_digest(path)
        except MissingPrerequisiteError:
            omissions.append("regression_table.json")
        try:
            report = self._load_payload("per_subject_report")
            rows = []
            for subject in sorted(report["results"]):
                fit = report["results"][subject]
                for reg in econ.REPORT_REGRESSORS:
                    row = fit["rows"].get(reg)
                    if row is None:
                        continue
                    rows.append(
                        [
                            subject,
                            reg,
                            row["coefficient"],
                            row["se"],
                            row["stars"],
                            row["ci_low"],
                            row["ci_high"],
                            fit["r_squared"],
                            fit["n"],
                        ]
                    )
            self._emit_csv(
                "per_subject_coefficients.csv",
                ["subject", "regressor", "coefficient", "se", "stars", "ci_low", "ci_high", "r_squared", "n"],
                rows,
                emitted,
            )
        except MissingPrerequisiteError:
            omissions.append("per_subject_coefficients.csv")

    def _emit_choropleth(self, rca_region: met.RcaTable, region_country, emitted: dict) -> None:
        regions = self._regions()
        features = []
        for region in sorted(regions, key=lambda r: r.region_id):
            t0 = rca_region.values["t0"].get(region.region_id, {}).get("dl")
            t1 = rca_region.values["t1"].get(region.region_id, {}).get("dl")
            change = (t1 - t0) if (t0 is not None and t1 is not None) else None
            geometry = {
                "type": "MultiPolygon",
                "coordinates": [
                    [[[lon, lat] for lat, lon in ring] for ring in polygon]
                    for polygon in region.polygons
                ],
            }
            features.append(
                {
                    "type": "Feature",
                    "geometry": geometry,
                    "properties": {
                        "region_id": region.region_id,
                        "country_code": region.country_code,
                        "rca_dl_t0": t0,
                        "rca_dl_t1": t1,
                        "rca_change": change,
                    },
                }
            )
        path = self.reports_dir / "choropleth.geojson"
        _write_json(path, {"type": "FeatureCollection", "features": features})
        emitted["choropleth.geojson"] = art.file_digest(path)


def _csv_cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
