"""Acceptance suite: one test per criterion, each printing a pass line
with its measured runtime.  Oracles live in oracles.py / oracle_e2e.py
and are independent implementations of the same definitions.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import oracle_e2e
from oracles import (
    grid_scan_l1,
    normal_equations_ols,
    cluster_sandwich_se,
    oracle_best_match,
    winding_inside,
)
from scigeo.config import load_config
from scigeo.corpus import InstituteEntry
from scigeo.econometrics import (
    MODEL_SPECS,
    REPORT_REGRESSORS,
    FeatureTable,
    RegionFeatureRow,
    clustered_se,
    fit_spec,
    ols_fit,
    run_model_suite,
)
from scigeo.fixtures import write_fixture
from scigeo.geo import ActivityMatrix, point_in_polygon
from scigeo.linkage import FuzzyMatchConfig, InstituteMatcher, convolve_scores
from scigeo.metrics import rca
from scigeo.pipeline import REPORT_FILES, STAGES, PipelineRunner
from scigeo.relatedness import (
    fit_l1_logistic,
    l1_saturation_bound,
    predict_categories,
    train_category_classifier,
)
from scigeo.topics import (
    PreprocessConfig,
    TokenDocument,
    Topic,
    TopicAssignmentConfig,
    TopicModel,
    assign_topics,
)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def report(criterion: str, timer: Timer, budget: float) -> None:
    print(f"acceptance {criterion}: pass ({timer.elapsed:.2f}s < {budget:.0f}s)")
    assert timer.elapsed < budget, f"{criterion} exceeded its {budget}s budget"


def test_criterion_01_convolved_score_arithmetic():
    with Timer() as t:
        assert convolve_scores([0.6, 0.8]) == pytest.approx(0.707107, abs=1e-6)
        assert convolve_scores([1.0, 1.0]) == 1.0
        assert convolve_scores([0.0, 0.0]) == 0.0
    report("1 (quadratic-mean score arithmetic)", t, 1.0)


def _typo_registry(rng: random.Random, n_entries: int = 500):
    words = [
        "university", "institute", "national", "technology", "science", "research",
        "center", "laboratory", "academy", "polytechnic", "state", "royal",
        "advanced", "applied", "federal",
    ]
    entries = []
    for i in range(n_entries):
        name = " ".join(rng.choice(words) for _ in range(rng.randint(2, 4))) + f" {i}"
        aliases = (f"{name.split()[0]} {name.split()[-1]}",) if rng.random() < 0.5 else ()
        entries.append(InstituteEntry(f"g{i:04d}", name, aliases, (0.0, 0.0)))
    return entries


def _typo_queries(rng: random.Random, entries, n_queries: int = 60):
    queries = []
    for _ in range(n_queries):
        base = list(rng.choice(entries).canonical_name)
        for _ in range(rng.randint(1, 2)):
            base[rng.randrange(len(base))] = rng.choice("abcdefghijklmnopqrstuvwxyz")
        queries.append("".join(base))
    return queries


def test_criterion_02_linkage_oracle_equivalence():
    with Timer() as t:
        rng = random.Random(42)
        entries = _typo_registry(rng)
        queries = _typo_queries(rng, entries)
        cfg = FuzzyMatchConfig(min_accept_score=0.75)
        matcher = InstituteMatcher(entries, cfg=cfg)
        cold = [matcher.match(q) for q in queries]
        warm = [matcher.match(q) for q in queries]
        fresh = [InstituteMatcher(entries, cfg=cfg).match(q) for q in queries]
        candidates = {e.registry_id: [e.canonical_name, *e.aliases] for e in entries}
        agreements = 0
        for query, got in zip(queries, cold):
            want_id, want_score = oracle_best_match(query, candidates)
            expected = want_id if want_score >= cfg.min_accept_score else None
            if got.matched_id == expected and abs(got.score - want_score) < 1e-12:
                agreements += 1
        assert agreements == len(queries), f"only {agreements}/{len(queries)} agree with oracle"
        for c, w, f in zip(cold, warm, fresh):
            assert (c.matched_id, c.score) == (w.matched_id, w.score) == (f.matched_id, f.score)
            assert w.method == "cached" or c.method == "exact"
    report("2 (linkage equals brute-force oracle, warm/cold deterministic)", t, 30.0)


def test_criterion_03_topic_rule_exhaustive():
    with Timer() as t:
        vocab = ["a", "b", "c", "d", "e", "f"]
        weights = {"a": 0.6, "b": 0.5, "c": 0.4, "d": 0.3, "e": 0.2, "f": 0.1}
        topic = Topic(topic_id="t", terms=tuple(sorted(weights.items(), key=lambda kv: -kv[1])))
        model = TopicModel(topics=(topic,))
        gammas = (0.0, 0.25, 0.5, 0.75, 1.0)
        t_max = max(weights.values())
        for size in range(len(vocab) + 1):
            for subset in itertools.combinations(vocab, size):
                doc = TokenDocument("d", frozenset(subset), len(subset))
                score = sum(weights[w] for w in subset)
                previous = None
                for gamma in gammas:
                    cfg = TopicAssignmentConfig(gamma=gamma, dl_topic_ids=frozenset({"t"}))
                    got = assign_topics(doc, model, cfg)
                    expected = score > 0 and score >= gamma * t_max
                    assert (got == {"t"}) == expected, (subset, gamma)
                    if previous is not None:
                        assert got <= previous  # larger gamma never enlarges
                    previous = got
    report("3 (topic rule exhaustive over subsets x gamma)", t, 5.0)


def test_criterion_04_geocoder_winding_oracle():
    with Timer() as t:
        rng = random.Random(1234)
        disagreements = 0
        for _ in range(10_000):
            cx, cy = rng.uniform(-10, 10), rng.uniform(-10, 10)
            n = rng.randint(3, 12)
            angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
            if rng.random() < 0.5:
                radii = [5.0] * n  # convex
            else:
                radii = [rng.uniform(1.0, 6.0) for _ in range(n)]  # star-shaped
            ring = [
                (cx + r * math.cos(a), cy + r * math.sin(a)) for r, a in zip(radii, angles)
            ]
            ring.append(ring[0])
            point = (rng.uniform(-18, 18), rng.uniform(-18, 18))
            if point_in_polygon(point, (tuple(ring),)) != winding_inside(point, (tuple(ring),)):
                disagreements += 1
        assert disagreements == 0
    report("4 (ray casting equals winding-number oracle on 10^4 pairs)", t, 10.0)


def test_criterion_05_rca_identities():
    with Timer() as t:
        worked = ActivityMatrix(
            row_ids=("here", "elsewhere"),
            col_ids=("dl", "non_dl"),
            counts=np.array([[10, 90], [40, 860]]),
            level="region",
        )
        assert rca(worked, "here", "dl") == 2.0
        rng = np.random.default_rng(99)
        for _ in range(50):
            counts = rng.integers(0, 25, size=(int(rng.integers(2, 9)), int(rng.integers(2, 6))))
            counts[:, 0] += 1
            counts[0, :] += 1
            m = ActivityMatrix(
                row_ids=tuple(f"r{i}" for i in range(counts.shape[0])),
                col_ids=tuple(f"c{j}" for j in range(counts.shape[1])),
                counts=counts,
                level="region",
            )
            scaled = ActivityMatrix(
                row_ids=m.row_ids, col_ids=m.col_ids, counts=counts * 3, level="region"
            )
            grand = counts.sum()
            for j, cat in enumerate(m.col_ids):
                if counts[:, j].sum() == 0:
                    continue
                weighted = 0.0
                for i, loc in enumerate(m.row_ids):
                    if counts[i].sum() == 0:
                        continue
                    value = rca(m, loc, cat)
                    weighted += (counts[i].sum() / grand) * value
                    assert abs(value - rca(scaled, loc, cat)) < 1e-12
                assert abs(weighted - 1.0) < 1e-12
    report("5 (RCA weighted-mean identity and scale invariance)", t, 5.0)


def _random_table(rng: np.random.Generator, n=40) -> FeatureTable:
    rows = []
    for i in range(n):
        rows.append(
            RegionFeatureRow(
                region_id=f"r{i:03d}",
                country_code=f"C{i % 8}",
                rca_t1=float(rng.normal()),
                rca_t0=float(rng.normal()),
                arxiv_sp=float(rng.normal()),
                crunchbase_sp=float(rng.normal()),
                arxiv_tot=float(rng.normal()),
                crunchbase_tot=float(rng.normal()),
                is_china=int(i % 8 == 0),
            )
        )
    return FeatureTable(rows=rows, excluded={}, standardization={})


def test_criterion_06_ols_and_clustered_se_oracles():
    with Timer() as t:
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(12, 80))
            k = int(rng.integers(2, 7))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
            y = rng.normal(size=n)
            fit = ols_fit(X, y)
            want = normal_equations_ols(X, y)
            scale = np.maximum(np.abs(want), 1.0)
            assert np.max(np.abs(fit.coefficients - want) / scale) < 1e-10
            clusters = [int(g) for g in rng.integers(0, max(2, n // 5), size=n)]
            if len(set(clusters)) >= 2:
                got_se = clustered_se(X, fit.residuals, clusters)
                want_se = cluster_sandwich_se(X, fit.residuals, clusters)
                assert np.max(np.abs(got_se - want_se) / np.maximum(want_se, 1e-12)) < 1e-10
        for seed in range(20):
            table = _random_table(np.random.default_rng(seed))
            suite = run_model_suite(table)
            r2 = [m["r_squared"] for m in suite["models"]]
            assert all(a <= b + 1e-12 for a, b in zip(r2, r2[1:]))
    report("6 (OLS + clustered SEs match oracles; nested R^2 monotone)", t, 30.0)


def test_criterion_07_coefficient_recovery():
    with Timer() as t:
        beta = {
            "rca_t0": 0.13,
            "arxiv_sp": 0.02,
            "crunchbase_sp": -0.14,
            "arxiv_sp*crunchbase_sp": 0.23,
            "arxiv_sp*crunchbase_tot": 0.21,
            "arxiv_tot": -0.08,
            "is_china": 1.59,
        }
        spec = MODEL_SPECS[3]
        n_regions, n_countries = 450, 40
        covered = {reg: 0 for reg in beta}
        n_seeds = 100
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            country_of = [i % n_countries for i in range(n_regions)]
            cluster_effect = rng.normal(0.0, 0.4, size=n_countries)
            rows = []
            base = {
                name: rng.normal(size=n_regions)
                for name in ("rca_t0", "arxiv_sp", "crunchbase_sp", "arxiv_tot", "crunchbase_tot")
            }
            is_china = (rng.random(n_regions) < 0.1).astype(int)
            y = np.full(n_regions, 0.05)
            y += beta["rca_t0"] * base["rca_t0"]
            y += beta["arxiv_sp"] * base["arxiv_sp"]
            y += beta["crunchbase_sp"] * base["crunchbase_sp"]
            y += beta["arxiv_sp*crunchbase_sp"] * base["arxiv_sp"] * base["crunchbase_sp"]
            y += beta["arxiv_sp*crunchbase_tot"] * base["arxiv_sp"] * base["crunchbase_tot"]
            y += beta["arxiv_tot"] * base["arxiv_tot"]
            y += beta["is_china"] * is_china
            y += np.array([cluster_effect[g] for g in country_of]) + rng.normal(0.0, 0.5, n_regions)
            for i in range(n_regions):
                rows.append(
                    RegionFeatureRow(
                        region_id=f"r{i:03d}",
                        country_code=f"C{country_of[i]:02d}",
                        rca_t1=float(y[i]),
                        rca_t0=float(base["rca_t0"][i]),
                        arxiv_sp=float(base["arxiv_sp"][i]),
                        crunchbase_sp=float(base["crunchbase_sp"][i]),
                        arxiv_tot=float(base["arxiv_tot"][i]),
                        crunchbase_tot=float(base["crunchbase_tot"][i]),
                        is_china=int(is_china[i]),
                    )
                )
            table = FeatureTable(rows=rows, excluded={}, standardization={})
            fit = fit_spec(table, spec)
            for reg, true_value in beta.items():
                row = fit["rows"][reg]
                if abs(row["coefficient"] - true_value) <= 2.0 * row["se"]:
                    covered[reg] += 1
        for reg, count in covered.items():
            assert count >= 95, f"{reg}: only {count}/{n_seeds} seeds within 2 clustered SEs"
    report("7 (Model-4 coefficient recovery within 2 clustered SEs)", t, 120.0)


FIXTURE_X = np.array([[0.0, 0.2], [0.4, 1.0], [1.0, 0.1], [0.6, 0.9], [1.0, 1.0], [0.1, 0.6]])
FIXTURE_Y = np.array([0.0, 1.0, 0.0, 1.0, 1.0, 0.0])


def test_criterion_08_l1_logistic_kernel():
    with Timer() as t:
        lam = 0.05
        fit = fit_l1_logistic(FIXTURE_X, FIXTURE_Y, lam=lam)
        oracle_best = grid_scan_l1(FIXTURE_X, FIXTURE_Y, lam)
        assert fit.objective <= oracle_best + 1e-4
        bound = l1_saturation_bound(FIXTURE_X, FIXTURE_Y)
        for factor in (1.000001, 10.0, 1000.0):
            sat = fit_l1_logistic(FIXTURE_X, FIXTURE_Y, lam=bound * factor)
            assert np.all(sat.weights == 0.0)
        companies = []
        from scigeo.corpus import CompanyRecord

        for i in range(60):
            companies.append(
                CompanyRecord(f"a{i}", "quantum flux entangled qubits", frozenset({"quantum"}), None, (0.0, 0.0))
            )
            companies.append(
                CompanyRecord(f"b{i}", "soil crops irrigation harvest", frozenset({"agritech"}), None, (0.0, 0.0))
            )
        clf = train_category_classifier(
            companies,
            lambda_grid=(0.001,),
            min_examples=10,
            seed=0,
            preprocess=PreprocessConfig(min_tokens=1, rare_word_min_count=1, stemmer="identity"),
        )
        rng = np.random.default_rng(5)
        vocab = list(clf.vocabulary)
        for _ in range(1000):
            size = int(rng.integers(0, len(vocab) + 1))
            idx = rng.choice(len(vocab), size=size, replace=False)
            tokens = frozenset(vocab[i] for i in idx)
            lo = set(predict_categories(tokens, clf, threshold=0.6))
            hi = set(predict_categories(tokens, clf, threshold=0.95))
            assert hi <= lo
    report("8 (L1 kernel: grid oracle, exact saturation zeros, threshold monotonicity)", t, 60.0)


def _tree_bytes(root: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def test_criterion_09_end_to_end_fixture_oracle(tmp_path):
    with Timer() as t:
        fixture = write_fixture(tmp_path / "fixture")
        inputs = oracle_e2e.load_inputs(fixture.root)

        def run(out_dir: Path) -> PipelineRunner:
            config = load_config(fixture.config, output_dir=out_dir)
            runner = PipelineRunner(config)
            outcomes = {stage: runner.run_stage(stage) for stage in STAGES}
            assert all(v == "ran" for v in outcomes.values())
            return runner

        runner = run(tmp_path / "outA")
        reports = runner.reports_dir

        # rca_by_region.csv: every numeric cell vs the dataframe oracle
        got = pd.read_csv(reports / "rca_by_region.csv")
        want = oracle_e2e.expected_rca_by_level(inputs, "region", split_year=2012)
        merged = got.merge(want, on=["location", "period"], suffixes=("", "_want"), how="outer")
        assert not merged.isna().any().any(), "row sets differ from oracle"
        assert (merged.rca_dl - merged.rca_dl_want).abs().max() < 1e-9
        assert (merged.total_activity - merged.total_activity_want).abs().max() == 0

        got_c = pd.read_csv(reports / "concentration_timeseries.csv")
        want_c = oracle_e2e.expected_concentration(inputs)
        merged_c = got_c.merge(
            want_c, on=["year", "level", "category", "k"], suffixes=("", "_want"), how="outer"
        )
        assert not merged_c.isna().any().any(), "concentration row sets differ"
        assert (merged_c.share - merged_c.share_want).abs().max() < 1e-9

        got_s = pd.read_csv(reports / "dl_share_timeseries.csv")
        want_s = oracle_e2e.expected_dl_share(inputs)
        merged_s = got_s.merge(want_s, on="year", suffixes=("", "_want"), how="outer")
        assert not merged_s.isna().any().any()
        for col in ("n_total", "share", "moving_avg"):
            want_col = {"n_total": "n_total_want", "share": "share_want", "moving_avg": "moving_avg_want"}[col]
            assert (merged_s[col] - merged_s[want_col]).abs().max() < 1e-9
        assert (merged_s.n_dl - merged_s.n_dl_want).abs().max() == 0

        # engine labels must equal the engineered plan
        labeled = runner._load_payload("labeled_corpus")
        truth = inputs["truth"]["papers"]
        for row in labeled["rows"]:
            assert bool(row[1]) == truth[row[0]]["dl"], row[0]
        assert {d[0] for d in labeled["dropped"]} == {
            pid for pid, info in truth.items() if info["dropped"]
        }

        # rerun into a fresh directory: byte-identical output tree
        run(tmp_path / "outB")
        assert _tree_bytes(tmp_path / "outA") == _tree_bytes(tmp_path / "outB")
    report("9 (end-to-end fixture matches dataframe oracle; rerun byte-identical)", t, 120.0)


def test_criterion_10_report_shape_conformance(pipeline_run):
    with Timer() as t:
        suite = json.loads((pipeline_run.reports_dir / "regression_table.json").read_text())
        assert [m["name"] for m in suite["models"]] == [
            "Model 1",
            "Model 2",
            "Model 3",
            "Model 4",
        ]
        expected_rows = [
            "rca_t0",
            "arxiv_sp",
            "crunchbase_sp",
            "arxiv_sp*crunchbase_sp",
            "arxiv_sp*crunchbase_tot",
            "arxiv_tot",
            "is_china",
        ]
        assert suite["regressors"] == expected_rows
        for model in suite["models"]:
            assert list(model["rows"].keys()) == expected_rows
            assert "r_squared" in model and "n" in model
            for reg, cell in model["rows"].items():
                if cell is not None:
                    assert set(cell) == {"coefficient", "se", "stars"}
        present = {p.name for p in pipeline_run.reports_dir.iterdir()}
        missing = set(REPORT_FILES) - present
        assert not missing, f"report files missing: {sorted(missing)}"
    report("10 (published-table shape and full report coverage)", t, 1.0)
