from __future__ import annotations

import csv
import json

import pytest

from scigeo.cli import main
from scigeo.config import load_config
from scigeo.fixtures import write_fixture
from scigeo.pipeline import REPORT_FILES, PipelineRunner


@pytest.fixture()
def fx(tmp_path):
    return write_fixture(tmp_path / "fx")


def test_missing_prerequisite_names_artifact_and_exits_2(fx, tmp_path, capsys):
    code = main(["metrics", "--config", str(fx.config), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "labeled_corpus" in capsys.readouterr().err


def test_bad_config_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code = main(["all", "--config", str(bad)])
    assert code == 3


def test_lock_file_blocks_concurrent_runs(fx, tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".lock").touch()
    code = main(["ingest", "--config", str(fx.config), "--out", str(out)])
    assert code == 1
    assert "locked" in capsys.readouterr().err
    (out / ".lock").unlink()
    assert main(["ingest", "--config", str(fx.config), "--out", str(out)]) == 0
    assert not (out / ".lock").exists()


def test_stage_by_stage_then_skip(fx, tmp_path, capsys):
    out = str(tmp_path / "out")
    for stage in ("ingest", "link", "geocode", "label", "relate", "metrics", "regress", "report"):
        assert main([stage, "--config", str(fx.config), "--out", out]) == 0
    capsys.readouterr()
    assert main(["all", "--config", str(fx.config), "--out", out]) == 0
    stdout = capsys.readouterr().out
    assert stdout.count("skipped") == 8


def test_stage_force_recomputes(fx, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["ingest", "--config", str(fx.config), "--out", out]) == 0
    capsys.readouterr()
    assert main(["ingest", "--config", str(fx.config), "--out", out, "--stage-force"]) == 0
    assert "ingest: ran" in capsys.readouterr().out


def test_config_change_invalidates_downstream(fx, tmp_path):
    out = tmp_path / "out"
    cfg = load_config(fx.config, output_dir=out)
    runner = PipelineRunner(cfg)
    runner.run_all()
    # same config: everything up to date
    assert all(v == "skipped" for v in PipelineRunner(cfg).run_all().values())
    changed = load_config(fx.config, output_dir=out, environ={"SCIGEO_LABELING__GAMMA": "0.9"})
    outcomes = PipelineRunner(changed).run_all()
    assert outcomes["label"] == "ran"


def test_fixture_subcommand(tmp_path, capsys):
    code = main(["fixture", "--out", str(tmp_path / "fx2")])
    assert code == 0
    assert (tmp_path / "fx2" / "papers.jsonl").is_file()


class TestReportOutputs:
    def test_all_report_files_emitted(self, pipeline_run):
        for name in REPORT_FILES:
            assert (pipeline_run.reports_dir / name).is_file(), name
        manifest = json.loads((pipeline_run.reports_dir / "manifest.json").read_text())
        assert manifest["omissions"] == []
        assert set(manifest["files"]) == set(REPORT_FILES) - {"manifest.json"}

    def test_metrics_only_run_lists_regression_omissions(self, fx, tmp_path):
        cfg = load_config(fx.config, output_dir=tmp_path / "out")
        runner = PipelineRunner(cfg)
        for stage in ("ingest", "link", "geocode", "label", "relate", "metrics", "report"):
            runner.run_stage(stage)
        manifest = json.loads((runner.reports_dir / "manifest.json").read_text())
        assert "regression_table.json" in manifest["omissions"]
        assert "per_subject_coefficients.csv" in manifest["omissions"]
        assert not (runner.reports_dir / "regression_table.json").exists()

    def test_choropleth_round_trips_rca_by_region(self, pipeline_run):
        doc = json.loads((pipeline_run.reports_dir / "choropleth.geojson").read_text())
        by_region = {}
        with (pipeline_run.reports_dir / "rca_by_region.csv").open() as fh:
            for row in csv.DictReader(fh):
                by_region.setdefault(row["location"], {})[row["period"]] = float(row["rca_dl"])
        assert doc["type"] == "FeatureCollection"
        for feature in doc["features"]:
            props = feature["properties"]
            rid = props["region_id"]
            for period, key in (("t0", "rca_dl_t0"), ("t1", "rca_dl_t1")):
                csv_value = by_region.get(rid, {}).get(period)
                assert props[key] == csv_value or (
                    props[key] is None and csv_value is None
                )

    def test_emitted_files_parse(self, pipeline_run):
        for name in REPORT_FILES:
            path = pipeline_run.reports_dir / name
            if name.endswith(".json") or name.endswith(".geojson"):
                json.loads(path.read_text())
            else:
                with path.open() as fh:
                    rows = list(csv.reader(fh))
                assert len(rows) >= 1
                width = len(rows[0])
                assert all(len(r) == width for r in rows)

    def test_cross_file_ids_resolve(self, pipeline_run):
        regions = set()
        with (pipeline_run.reports_dir / "rca_by_region.csv").open() as fh:
            for row in csv.DictReader(fh):
                regions.add(row["location"])
        doc = json.loads((pipeline_run.reports_dir / "choropleth.geojson").read_text())
        geo_ids = {f["properties"]["region_id"] for f in doc["features"]}
        assert regions <= geo_ids

    def test_linked_corpus_report_present(self, pipeline_run):
        summary = json.loads((pipeline_run.reports_dir / "link_summary.json").read_text())
        assert summary["match_rate"] is not None
        assert summary["counts_by_method"]["exact"] > 0
        # two papers carry deliberately alien affiliations
        assert summary["counts_by_method"]["none"] >= 1
