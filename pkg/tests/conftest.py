from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scigeo.config import load_config
from scigeo.fixtures import write_fixture
from scigeo.pipeline import STAGES, PipelineRunner


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    return write_fixture(out)


@pytest.fixture(scope="session")
def pipeline_run(fixture_paths, tmp_path_factory):
    """One full pipeline run over the bundled synthetic corpus."""
    out_dir = tmp_path_factory.mktemp("pipeline_out")
    config = load_config(fixture_paths.config, output_dir=out_dir)
    runner = PipelineRunner(config)
    outcomes = {stage: runner.run_stage(stage) for stage in STAGES}
    assert all(v == "ran" for v in outcomes.values()), outcomes
    return runner
