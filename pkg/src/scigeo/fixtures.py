"""Deterministic synthetic corpus for demos and end-to-end tests.

Three countries with six rectangular regions each, ~500 papers over
2008-2017 with five subjects, a 28-topic model with two marked
deep-learning topics, and ~300 companies across ten sectors.  Everything
derives from one seeded RNG; `truth.json` records the planned labels so
an external oracle can recompute the pipeline outputs independently.

Affiliation strings always equal a registry name or alias verbatim (the
few deliberately unmatchable ones are alien strings), so the linkage
outcome is fully determined by construction.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

__all__ = ["FixturePaths", "write_fixture"]

COUNTRIES = ("US", "DE", "CN")
REGIONS_PER_COUNTRY = 6
SUBJECTS = ("cs.CV", "cs.LG", "stat.ML", "cs.CL", "cs.DS")
YEARS = tuple(range(2008, 2018))

PAPER_FILLERS = (
    "algorithm analysis approach bound cluster complexity computation constraint "
    "convergence corpus dataset dimension distribution domain efficiency empirical "
    "estimation evaluation experiment feature framework function graph heuristic "
    "inference iteration kernel latency lemma matrix measure method metric objective "
    "optimization parameter partition performance polynomial probability problem "
    "procedure proof property protocol query result sample scalability scheme search "
    "sequence simulation solution structure system technique theorem theory variable"
).split()

SUBJECT_THEMES = {
    "cs.CV": ("image", "vision"),
    "cs.LG": ("supervised", "regression"),
    "stat.ML": ("bayesian", "likelihood"),
    "cs.CL": ("language", "syntax"),
    "cs.DS": ("sorting", "combinatorial"),
}

# marked topics; term order gives descending weights
DL_TOPIC_1 = (
    ("neural_network", 1.0),
    ("deep_learning", 0.8),
    ("convolutional", 0.6),
    ("backpropagation", 0.4),
    ("perceptron", 0.2),
)
DL_TOPIC_2 = (
    ("embedding", 0.9),
    ("autoencoder", 0.7),
    ("transformer", 0.5),
    ("attention", 0.3),
)

SECTORS = (
    "artificial-intelligence",
    "biotech",
    "cloud",
    "data-analytics",
    "fintech",
    "gaming",
    "mobility",
    "robotics",
    "security",
    "software",
)

SECTOR_KEYWORDS = {
    # exactly the words marked papers share, so the transfer can fire
    "artificial-intelligence": ("neural", "network", "deep", "learning"),
    "data-analytics": ("analytics", "dashboards", "insights", "visualization", "warehouse", "reporting"),
    "software": ("developer", "tools", "coding", "deployment", "testing", "integration"),
    "robotics": ("robots", "actuators", "sensors", "autonomous", "drones", "manipulation"),
    "fintech": ("payments", "banking", "lending", "wallet", "trading", "credit"),
    "biotech": ("genomics", "therapeutics", "clinical", "molecules", "diagnostics", "pharma"),
    "gaming": ("games", "players", "studio", "multiplayer", "esports", "entertainment"),
    "security": ("encryption", "firewall", "threat", "privacy", "malware", "authentication"),
    "mobility": ("vehicles", "transit", "logistics", "fleet", "rides", "delivery"),
    "cloud": ("hosting", "servers", "infrastructure", "storage", "compute", "virtualization"),
}

COMMERCE_FILLERS = (
    "platform solutions services customers products enterprise market clients "
    "industry business digital operations"
).split()

CITY_STEMS = (
    "arden bristow calvert dunmore elkhart fairview granby holloway irvine jasper "
    "kendall lakewood milton norwood oakley pembroke quimby redfield stanton thornby "
    "upton vernon westfall yardley alcott benford corwin dalton ellery fenwick gorham "
    "hartley ingram jessop kirby linden marlow norbury orton penrose quill ravenna "
    "selwyn tilford underhill varnell wexford yarrow zale burnham crandall ashford "
    "delmont keswick"
).split()


@dataclass
class FixturePaths:
    root: Path
    papers: Path
    registry: Path
    companies: Path
    boundaries: Path
    topic_model: Path
    config: Path
    truth: Path


def _region_id(country: str, idx: int) -> str:
    return f"{country.lower()}{idx}"


def _region_bounds(country_idx: int, region_idx: int) -> tuple[float, float, float, float]:
    """(lat_min, lat_max, lon_min, lon_max) of the region rectangle."""
    lat0 = region_idx * 10.0 + 0.5
    lon0 = country_idx * 60.0 + 0.5
    return (lat0, lat0 + 9.0, lon0, lon0 + 59.0)


def write_fixture(out_dir: str | Path, seed: int = 20240) -> FixturePaths:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    paths = FixturePaths(
        root=out,
        papers=out / "papers.jsonl",
        registry=out / "registry.jsonl",
        companies=out / "companies.jsonl",
        boundaries=out / "boundaries.geojson",
        topic_model=out / "topic_model.csv",
        config=out / "config.json",
        truth=out / "truth.json",
    )
    regions = _write_boundaries(paths.boundaries)
    institutes = _write_registry(paths.registry, regions, rng)
    papers_truth = _write_papers(paths.papers, institutes, rng)
    _write_companies(paths.companies, regions, rng)
    _write_topic_model(paths.topic_model)
    _write_config(paths.config)
    truth = {
        "seed": seed,
        "region_country": {r["region_id"]: r["country"] for r in regions},
        "papers": papers_truth,
    }
    paths.truth.write_text(
        json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return paths


def _write_boundaries(path: Path) -> list[dict]:
    regions = []
    features = []
    for ci, country in enumerate(COUNTRIES):
        for ri in range(REGIONS_PER_COUNTRY):
            lat0, lat1, lon0, lon1 = _region_bounds(ci, ri)
            rid = _region_id(country, ri)
            regions.append(
                {"region_id": rid, "country": country, "bounds": (lat0, lat1, lon0, lon1)}
            )
            ring = [
                [lon0, lat0],
                [lon1, lat0],
                [lon1, lat1],
                [lon0, lat1],
                [lon0, lat0],
            ]
            features.append(
                {
                    "type": "Feature",
                    "properties": {"region_id": rid, "country_code": country},
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                }
            )
    doc = {"type": "FeatureCollection", "features": features}
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    return regions


def _write_registry(path: Path, regions: list[dict], rng: random.Random) -> list[dict]:
    institutes = []
    templates = ("{} institute of technology", "university of {}", "{} research center")
    lines = []
    city_iter = iter(CITY_STEMS)
    for region in regions:
        lat0, lat1, lon0, lon1 = region["bounds"]
        for template in templates:
            city = next(city_iter)
            name = template.format(city)
            lat = round(rng.uniform(lat0 + 1.0, lat1 - 1.0), 4)
            lon = round(rng.uniform(lon0 + 1.0, lon1 - 1.0), 4)
            aliases = [f"{city} tech"] if rng.random() < 0.4 else []
            rid = f"g{len(institutes):03d}"
            institutes.append(
                {"registry_id": rid, "name": name, "aliases": aliases, "region": region["region_id"]}
            )
            lines.append(
                json.dumps(
                    {"registry_id": rid, "name": name, "aliases": aliases, "lat": lat, "lon": lon},
                    sort_keys=True,
                )
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return institutes


def _dl_probability(year: int, in_china: bool) -> float:
    base = 0.08 + (year - YEARS[0]) * 0.04
    return min(0.85, base * (1.6 if in_china else 1.0))


def _write_papers(path: Path, institutes: list[dict], rng: random.Random) -> dict:
    by_region: dict[str, list[dict]] = {}
    for inst in institutes:
        by_region.setdefault(inst["region"], []).append(inst)
    region_ids = sorted(by_region)
    # a few hub regions publish more
    weights = [2.5 if rid in ("us0", "cn0", "de0") else 1.0 for rid in region_ids]

    lines = []
    truth: dict[str, dict] = {}
    n_per_year = 50
    pid = 0
    short_ids = {"p0107", "p0233", "p0391"}  # engineered below the token floor
    alien_ids = {"p0059", "p0412"}  # engineered unmatchable affiliations
    for year in YEARS:
        for _ in range(n_per_year):
            paper_id = f"p{pid:04d}"
            pid += 1
            chosen_regions = [rng.choices(region_ids, weights=weights, k=1)[0]]
            if rng.random() < 0.25:
                other = rng.choices(region_ids, weights=weights, k=1)[0]
                if other not in chosen_regions:
                    chosen_regions.append(other)
            affiliations = []
            for rid in chosen_regions:
                inst = rng.choice(by_region[rid])
                affiliations.append(
                    inst["aliases"][0] if inst["aliases"] and rng.random() < 0.3 else inst["name"]
                )
            if rng.random() < 0.15:
                extra = rng.choice(by_region[chosen_regions[0]])
                affiliations.append(extra["name"])
            if paper_id in alien_ids:
                affiliations = ["zzqx vvkk unaffiliated collective"]
                chosen_regions = []
            in_china = any(r.startswith("cn") for r in chosen_regions)
            is_dl = rng.random() < _dl_probability(year, in_china)
            is_short = paper_id in short_ids
            if is_short:
                is_dl = False
            n_subjects = rng.choices((1, 2, 3), weights=(5, 3, 1), k=1)[0]
            subjects = sorted(rng.sample(SUBJECTS, k=n_subjects))
            anchor = pid % 9 == 0  # sprinkle reliably high-cited papers
            if anchor:
                citations = 40 + rng.randrange(60)
            else:
                mean = 12.0 if is_dl else 6.0
                citations = min(200, int(rng.expovariate(1.0 / mean)))
            abstract = _make_abstract(rng, subjects, is_dl, is_short)
            title_words = rng.sample(PAPER_FILLERS, k=5)
            row = {
                "id": paper_id,
                "title": " ".join(title_words),
                "abstract": abstract,
                "subjects": subjects,
                "pub_year": year,
                "citations": citations,
                "affiliations": affiliations,
            }
            lines.append(json.dumps(row, sort_keys=True))
            truth[paper_id] = {
                "dl": bool(is_dl),
                "dropped": bool(is_short),
                "regions": sorted(set(chosen_regions)),
                "year": year,
                "citations": citations,
                "subjects": subjects,
            }
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return truth


def _make_abstract(rng: random.Random, subjects: list[str], is_dl: bool, is_short: bool) -> str:
    if is_short:
        return " ".join(rng.sample(PAPER_FILLERS, k=5))
    words: list[str] = []
    if is_dl:
        for _ in range(3):
            words += ["deep", "learning"]
            words += rng.sample(PAPER_FILLERS, k=2)
            words += ["neural", "network"]
            words += rng.sample(PAPER_FILLERS, k=2)
        words += ["convolutional", "backpropagation"]
        if rng.random() < 0.5:
            words += ["embedding", "autoencoder", "transformer"]
    for s in subjects:
        words += list(SUBJECT_THEMES[s])
    words += rng.choices(PAPER_FILLERS, k=26)
    return " ".join(words)


def _write_companies(path: Path, regions: list[dict], rng: random.Random) -> None:
    lines = []
    n_companies = 300
    untrainable_ids = {f"c{i:04d}" for i in (37, 81, 144, 199, 243, 277, 18, 260)}
    ocean_ids = {"c0050", "c0150"}
    for i in range(n_companies):
        cid = f"c{i:04d}"
        region = regions[i % len(regions)]
        lat0, lat1, lon0, lon1 = region["bounds"]
        lat = round(rng.uniform(lat0 + 1.0, lat1 - 1.0), 4)
        lon = round(rng.uniform(lon0 + 1.0, lon1 - 1.0), 4)
        if cid in ocean_ids:
            lat, lon = 75.0, 10.0 + i / 10.0
        sectors = [SECTORS[i % len(SECTORS)]]
        if rng.random() < 0.2:
            other = rng.choice(SECTORS)
            if other not in sectors:
                sectors.append(other)
        words: list[str] = []
        for sector in sectors:
            kws = SECTOR_KEYWORDS[sector]
            words += list(kws) if len(kws) <= 4 else rng.sample(kws, k=5)
        words += rng.sample(COMMERCE_FILLERS, k=5)
        # shuffled so no keyword chain recurs often enough to become an n-gram
        rng.shuffle(words)
        description = " ".join(words)
        categories = sorted(sectors)
        if cid in untrainable_ids:
            if i % 2 == 0:
                description = ""
            else:
                categories = []
        row = {
            "id": cid,
            "description": description,
            "categories": categories,
            "founded_year": 1995 + rng.randrange(23),
            "lat": lat,
            "lon": lon,
        }
        lines.append(json.dumps(row, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_topic_model(path: Path) -> None:
    rows = ["topic_id,word,weight"]
    for word, weight in DL_TOPIC_1:
        rows.append(f"t01,{word},{weight}")
    for word, weight in DL_TOPIC_2:
        rows.append(f"t02,{word},{weight}")
    for k in range(3, 29):
        n_terms = 4 + (k % 3)
        for j in range(n_terms):
            weight = round(1.0 - 0.15 * j, 2)
            rows.append(f"t{k:02d},topic{k:02d}term{j},{weight}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _write_config(path: Path) -> None:
    config = {
        "inputs": {
            "papers": "papers.jsonl",
            "registry": "registry.jsonl",
            "companies": "companies.jsonl",
            "boundaries": "boundaries.geojson",
        },
        "output_dir": "out",
        "seed": 0,
        "ingest": {"min_year": 1990, "max_year": 2030},
        "preprocess": {
            "min_tokens": 20,
            "rare_word_min_count": 5,
            "ngram_min_count": 10,
            "stemmer": "identity",
        },
        "matching": {
            "algorithms": ["token_sort_ratio", "partial_ratio"],
            "min_accept_score": 0.75,
        },
        "labeling": {
            "topic_model_path": "topic_model.csv",
            "gamma": 0.5,
            "dl_topic_ids": ["t01", "t02"],
            "require_positive_score": True,
            "dl_rule": "any",
        },
        "split": {"t0_max_year": 2012},
        "filters": {
            "citation_filter": "above_median",
            "country_floor_percentile": 0.0,
            "region_floor_percentile": 0.0,
            "top_k_countries": 2,
            "top_k_regions": 5,
            "dispersion_top_countries": 50,
            "dispersion_top_regions": 150,
            "impact_min_years": [2009, 2012, 2015],
            "moving_average_window": 3,
        },
        "classifier": {
            "lambda_grid": [0.0001, 0.001],
            "validation_fraction": 0.2,
            "min_examples": 10,
            "prediction_threshold": 0.99,
            "min_description_tokens": 1,
            "company_founded_max_year": None,
        },
        "regression": {
            "sample_floor_percentile": None,
            "china_country_code": "CN",
            "per_subject_top_n": 5,
        },
    }
    path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n", encoding="utf-8")
