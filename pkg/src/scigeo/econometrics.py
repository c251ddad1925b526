"""The drivers regression: regional feature table construction, OLS via
QR, country-clustered sandwich standard errors and the nested model
suite, plus the per-subject quasi-control runs.

Solves use an orthogonal factorization; the explicit normal-equations
form is reserved for test oracles to avoid conditioning loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .metrics import nearest_rank

__all__ = [
    "RegionFeatureRow",
    "FeatureTable",
    "StandardizationError",
    "build_feature_table",
    "RankDeficiencyError",
    "SingleClusterError",
    "OlsResult",
    "ols_fit",
    "clustered_se",
    "significance_stars",
    "RegressionSpec",
    "MODEL_SPECS",
    "REPORT_REGRESSORS",
    "run_model_suite",
    "per_subject_models",
]

BASE_COLUMNS = ("rca_t1", "rca_t0", "arxiv_sp", "crunchbase_sp", "arxiv_tot", "crunchbase_tot")

REPORT_REGRESSORS = (
    "rca_t0",
    "arxiv_sp",
    "crunchbase_sp",
    "arxiv_sp*crunchbase_sp",
    "arxiv_sp*crunchbase_tot",
    "arxiv_tot",
    "is_china",
)


@dataclass(frozen=True)
class RegionFeatureRow:
    region_id: str
    country_code: str
    rca_t1: float
    rca_t0: float
    arxiv_sp: float
    crunchbase_sp: float
    arxiv_tot: float  # log total, then standardized
    crunchbase_tot: float  # log total, then standardized
    is_china: int

    def column(self, name: str) -> float:
        if name == "is_china":
            return float(self.is_china)
        return float(getattr(self, name))


@dataclass
class FeatureTable:
    rows: list[RegionFeatureRow]
    excluded: dict[str, list[str]]  # reason -> region ids
    standardization: dict[str, dict[str, float]]  # column -> {mean, sd}

    def column(self, name: str) -> np.ndarray:
        if "*" in name:
            a, b = name.split("*")
            return self.column(a) * self.column(b)
        return np.array([r.column(name) for r in self.rows])

    def clusters(self) -> np.ndarray:
        return np.array([r.country_code for r in self.rows])


class StandardizationError(Exception):
    """A column has zero variance and cannot be z-scored."""


def build_feature_table(
    rca_t0: Mapping[str, float],
    rca_t1: Mapping[str, float],
    arxiv_sp: Mapping[str, float],
    crunchbase_sp: Mapping[str, float],
    arxiv_tot: Mapping[str, float],
    crunchbase_tot: Mapping[str, float],
    region_country: Mapping[str, str],
    china_country_code: str = "CN",
    sample_floor_percentile: float | None = 75.0,
) -> FeatureTable:
    """Join per-region inputs into the standardized regression table.

    Regions missing any input are dropped, totals are logged (zero totals
    drop the region), and regions whose raw research-activity total is not
    strictly above the nearest-rank floor percentile are dropped (the
    top-quartile sample restriction; None disables it).  All columns
    except the China dummy are then z-scored over the retained sample.
    """
    inputs = {
        "rca_t0": rca_t0,
        "rca_t1": rca_t1,
        "arxiv_sp": arxiv_sp,
        "crunchbase_sp": crunchbase_sp,
        "arxiv_tot": arxiv_tot,
        "crunchbase_tot": crunchbase_tot,
    }
    excluded: dict[str, list[str]] = {"missing_inputs": [], "zero_total": [], "below_floor": []}
    universe = sorted(region_country)
    joined: list[str] = []
    for region in universe:
        if any(region not in m for m in inputs.values()):
            excluded["missing_inputs"].append(region)
            continue
        if arxiv_tot[region] <= 0 or crunchbase_tot[region] <= 0:
            excluded["zero_total"].append(region)
            continue
        joined.append(region)
    if sample_floor_percentile is not None and joined:
        floor = nearest_rank([arxiv_tot[r] for r in joined], sample_floor_percentile)
        retained = [r for r in joined if arxiv_tot[r] > floor]
        excluded["below_floor"] = [r for r in joined if r not in retained]
        joined = retained
    raw = {
        "rca_t0": [rca_t0[r] for r in joined],
        "rca_t1": [rca_t1[r] for r in joined],
        "arxiv_sp": [arxiv_sp[r] for r in joined],
        "crunchbase_sp": [crunchbase_sp[r] for r in joined],
        "arxiv_tot": [math.log(arxiv_tot[r]) for r in joined],
        "crunchbase_tot": [math.log(crunchbase_tot[r]) for r in joined],
    }
    standardization: dict[str, dict[str, float]] = {}
    standardized: dict[str, list[float]] = {}
    for name, values in raw.items():
        arr = np.array(values, dtype=np.float64)
        mean = float(arr.mean()) if len(arr) else 0.0
        sd = float(arr.std(ddof=0)) if len(arr) else 0.0
        if len(arr) and sd == 0.0:
            raise StandardizationError(f"column {name!r} has zero variance")
        standardization[name] = {"mean": mean, "sd": sd}
        standardized[name] = [float(v) for v in (arr - mean) / sd] if len(arr) else []
    rows = [
        RegionFeatureRow(
            region_id=region,
            country_code=region_country[region],
            rca_t1=standardized["rca_t1"][i],
            rca_t0=standardized["rca_t0"][i],
            arxiv_sp=standardized["arxiv_sp"][i],
            crunchbase_sp=standardized["crunchbase_sp"][i],
            arxiv_tot=standardized["arxiv_tot"][i],
            crunchbase_tot=standardized["crunchbase_tot"][i],
            is_china=int(region_country[region] == china_country_code),
        )
        for i, region in enumerate(joined)
    ]
    return FeatureTable(rows=rows, excluded=excluded, standardization=standardization)


class RankDeficiencyError(Exception):
    def __init__(self, columns: list[int]):
        super().__init__(f"design matrix is rank deficient in columns {columns}")
        self.columns = columns


class SingleClusterError(Exception):
    pass


@dataclass
class OlsResult:
    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    r_squared: float
    n: int
    k: int


def ols_fit(X: np.ndarray, y: np.ndarray) -> OlsResult:
    """Least squares through a QR factorization.

    The design matrix must contain the intercept column and have full
    column rank with more rows than columns; collinear columns raise with
    their indices named.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more rows than columns, got {n} rows x {k} columns")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tol = max(n, k) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
    bad = [j for j in range(k) if diag[j] <= tol]
    if bad:
        raise RankDeficiencyError(bad)
    beta = np.linalg.solve(r, q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(resid @ resid)
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    return OlsResult(coefficients=beta, residuals=resid, fitted=fitted, r_squared=r2, n=n, k=k)


def clustered_se(
    X: np.ndarray,
    residuals: np.ndarray,
    clusters: Sequence,
) -> np.ndarray:
    """Liang-Zeger cluster-robust standard errors with the CR1 factor.

    Sandwich: (X'X)^-1 (sum_g X_g'e_g e_g'X_g) (X'X)^-1 scaled by
    G/(G-1) * (n-1)/(n-k).  Needs at least two clusters.
    """
    X = np.asarray(X, dtype=np.float64)
    e = np.asarray(residuals, dtype=np.float64)
    n, k = X.shape
    labels = list(clusters)
    if len(labels) != n:
        raise ValueError("cluster labels must align with rows")
    groups: dict = {}
    for i, g in enumerate(labels):
        groups.setdefault(g, []).append(i)
    n_groups = len(groups)
    if n_groups < 2:
        raise SingleClusterError("clustered variance needs at least two clusters")
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    for idx in groups.values():
        s = X[idx].T @ e[idx]
        meat += np.outer(s, s)
    factor = (n_groups / (n_groups - 1)) * ((n - 1) / (n - k))
    cov = factor * bread @ meat @ bread
    return np.sqrt(np.diag(cov))


def _normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def significance_stars(coef: float, se: float) -> str:
    """Stars from a two-sided normal reference: * 10%, ** 5%, *** 1%."""
    if se == 0:
        return ""
    p = 2.0 * _normal_sf(abs(coef / se))
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


@dataclass(frozen=True)
class RegressionSpec:
    name: str
    dependent: str
    regressors: tuple[str, ...]
    cluster_column: str = "country_code"
    standardize: bool = True

    def __post_init__(self) -> None:
        if len(set(self.regressors)) != len(self.regressors):
            raise ValueError("duplicate regressors")
        for reg in self.regressors:
            for part in reg.split("*"):
                if part not in BASE_COLUMNS and part != "is_china":
                    raise ValueError(f"unknown column {part!r} in regressor {reg!r}")


MODEL_SPECS: tuple[RegressionSpec, ...] = (
    RegressionSpec("Model 1", "rca_t1", ("rca_t0", "arxiv_sp", "arxiv_tot", "is_china")),
    RegressionSpec(
        "Model 2", "rca_t1", ("rca_t0", "arxiv_sp", "crunchbase_sp", "arxiv_tot", "is_china")
    ),
    RegressionSpec(
        "Model 3",
        "rca_t1",
        ("rca_t0", "arxiv_sp", "crunchbase_sp", "arxiv_sp*crunchbase_sp", "arxiv_tot", "is_china"),
    ),
    RegressionSpec(
        "Model 4",
        "rca_t1",
        (
            "rca_t0",
            "arxiv_sp",
            "crunchbase_sp",
            "arxiv_sp*crunchbase_sp",
            "arxiv_sp*crunchbase_tot",
            "arxiv_tot",
            "is_china",
        ),
    ),
)


def _design(table: FeatureTable, spec: RegressionSpec) -> tuple[np.ndarray, np.ndarray]:
    y = table.column(spec.dependent)
    cols = [np.ones(len(table.rows))]
    cols += [table.column(reg) for reg in spec.regressors]
    return np.column_stack(cols), y


def fit_spec(table: FeatureTable, spec: RegressionSpec) -> dict:
    """Fit one specification: coefficients, clustered SEs, stars, R2, n."""
    X, y = _design(table, spec)
    result = ols_fit(X, y)
    se = clustered_se(X, result.residuals, table.clusters())
    rows = {}
    for pos, reg in enumerate(spec.regressors, start=1):
        coef = float(result.coefficients[pos])
        rows[reg] = {
            "coefficient": coef,
            "se": float(se[pos]),
            "stars": significance_stars(coef, float(se[pos])),
        }
    return {
        "name": spec.name,
        "dependent": spec.dependent,
        "intercept": {"coefficient": float(result.coefficients[0]), "se": float(se[0])},
        "rows": rows,
        "r_squared": result.r_squared,
        "n": result.n,
    }


def run_model_suite(table: FeatureTable, specs: Sequence[RegressionSpec] = MODEL_SPECS) -> dict:
    """The nested model columns, shaped like the published results table.

    Every model reports the same regressor row set; rows not in a model
    are null.
    """
    models = []
    for spec in specs:
        fit = fit_spec(table, spec)
        rows = {reg: fit["rows"].get(reg) for reg in REPORT_REGRESSORS}
        models.append(
            {
                "name": spec.name,
                "dependent": spec.dependent,
                "rows": rows,
                "intercept": fit["intercept"],
                "r_squared": fit["r_squared"],
                "n": fit["n"],
            }
        )
    return {
        "dependent": "rca_t1",
        "regressors": list(REPORT_REGRESSORS),
        "models": models,
        "cluster_column": "country_code",
        "notes": "standard errors clustered by country; stars: * p<0.10, ** p<0.05, *** p<0.01",
    }


def per_subject_models(
    tables: Mapping[str, FeatureTable],
    spec: RegressionSpec | None = None,
    ci_multiplier: float = 1.96,
) -> tuple[dict[str, dict], dict[str, str]]:
    """Fit the shared specification once per target subject.

    Each subject's table must carry that subject's RCA target and
    recomputed relatedness weights.  Tables too small to fit (rows must
    exceed parameters) are skipped and reported with the reason.
    """
    spec = spec or MODEL_SPECS[-1]
    results: dict[str, dict] = {}
    skipped: dict[str, str] = {}
    for subject in sorted(tables):
        table = tables[subject]
        n_params = len(spec.regressors) + 1
        if len(table.rows) <= n_params:
            skipped[subject] = f"{len(table.rows)} rows <= {n_params} parameters"
            continue
        if len(set(table.clusters())) < 2:
            skipped[subject] = "fewer than two clusters"
            continue
        fit = fit_spec(table, spec)
        for row in fit["rows"].values():
            half = ci_multiplier * row["se"]
            row["ci_low"] = row["coefficient"] - half
            row["ci_high"] = row["coefficient"] + half
        results[subject] = fit
    return results, skipped
