"""Synthetic models, population oracles, and the rate experiments.

The benchmark generator is a location-scale model ``Y = m1(X) + m2(X) e``
with covariate and error independent, for which the population conditional
quantile has the closed form ``m1(x) + m2(x) * e_alpha``. The shipped
instance pairs a cubic trend with a boundary-concentrated beta design and
standard normal errors.

The quantized population approximation (project the covariate on a grid,
condition on the cell) has no closed form; it is evaluated by seeded Monte
Carlo conditioning, which is the oracle every rate experiment leans on.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from ._util import atomic_write_text, derive_seed, fmt_float, worker_count
from .core import Dataset, alpha_value, sample_quantile
from .estimator import fit, fit_bootstrap
from .competitors import (
    KernelConfig,
    KnnEstimator,
    knn_predict,
    knn_select_k,
    local_constant_predict,
    local_linear_predict,
    select_h_mean_cv,
    yu_jones_bandwidth,
)
from .quantizer import (
    ClvqConfig,
    Grid,
    assign,
    clvq_train,
    distortion,
    project,
    uniform_optimal_grid,
    zador_reference_d1,
)

__all__ = [
    "LocationScaleModel",
    "ExperimentConfig",
    "MODELS",
    "cubic_beta_model",
    "uniform_linear_model",
    "generate",
    "population_quantile",
    "population_quantile_curve",
    "approx_quantile_qtilde",
    "qtilde_cell_values",
    "run_rate_experiment_zador",
    "run_approximation_rate_experiment",
    "run_consistency_experiment",
    "run_comparison_experiment",
    "ZadorResult",
    "RateResult",
    "ConsistencyResult",
    "ComparisonResult",
    "ZADOR_CSV_HEADER",
    "RATE_CSV_HEADER",
    "CONSISTENCY_CSV_HEADER",
    "COMPARISON_CSV_HEADER",
    "write_metadata",
]

_MASK64 = (1 << 64) - 1

ZADOR_CSV_HEADER = "N,distortion,predicted,slope_flag"
RATE_CSV_HEADER = "N,lp_error"
CONSISTENCY_CSV_HEADER = "n,mean_abs_gap,replications"
COMPARISON_CSV_HEADER = "estimator,alpha,mse,replications"


@dataclass(frozen=True)
class LocationScaleModel:
    """Generator ``Y = m1(X) + m2(X) * e`` with X and e independent.

    ``m1`` and ``m2`` map an (n, d) covariate matrix to n values, with
    ``m2`` strictly positive on the support. ``error_quantile`` is the
    quantile function of the error law (None when unavailable), and
    ``support`` bounds the covariate coordinates.
    """

    name: str
    dim: int
    m1: Callable[[np.ndarray], np.ndarray]
    m2: Callable[[np.ndarray], np.ndarray]
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    sample_error: Callable[[np.random.Generator, int], np.ndarray]
    error_quantile: Callable[[float], float] | None
    support: tuple[float, float]


def cubic_beta_model() -> LocationScaleModel:
    """Cubic trend, boundary-heavy design: Y = X^3/5 + e.

    The covariate is 6 Z - 3 with Z ~ Beta(0.3, 0.3), so mass piles up near
    the interval ends and thins out in the middle; errors are standard
    normal. This is the stress case for global-bandwidth smoothers.
    """
    return LocationScaleModel(
        name="cubic-beta",
        dim=1,
        m1=lambda x: x[:, 0] ** 3 / 5.0,
        m2=lambda x: np.ones(x.shape[0]),
        sample_x=lambda rng, n: (6.0 * rng.beta(0.3, 0.3, size=n) - 3.0).reshape(-1, 1),
        sample_error=lambda rng, n: rng.standard_normal(n),
        error_quantile=lambda a: float(ndtri(a)),
        support=(-3.0, 3.0),
    )


def uniform_linear_model() -> LocationScaleModel:
    """Linear trend on a uniform[0, 1] design with standard normal errors."""
    return LocationScaleModel(
        name="uniform-linear",
        dim=1,
        m1=lambda x: x[:, 0],
        m2=lambda x: np.ones(x.shape[0]),
        sample_x=lambda rng, n: rng.random(n).reshape(-1, 1),
        sample_error=lambda rng, n: rng.standard_normal(n),
        error_quantile=lambda a: float(ndtri(a)),
        support=(0.0, 1.0),
    )


MODELS: dict[str, Callable[[], LocationScaleModel]] = {
    "cubic-beta": cubic_beta_model,
    "uniform-linear": uniform_linear_model,
}


def generate(model: LocationScaleModel, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. pairs; covariates first, then errors, so the stream is
    reproducible under the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(int(seed) & _MASK64)
    x = model.sample_x(rng, n)
    e = model.sample_error(rng, n)
    y = model.m1(x) + model.m2(x) * e
    return Dataset(x, y)


def _as_query_matrix(x, dim: int) -> np.ndarray:
    pt = np.asarray(x, dtype=float).reshape(-1)
    if pt.size != dim:
        raise ValueError(f"query dimension {pt.size} != model dimension {dim}")
    return pt.reshape(1, -1)


def population_quantile(model: LocationScaleModel, x, alpha) -> float:
    """Closed-form conditional quantile ``m1(x) + m2(x) * e_alpha``."""
    a = alpha_value(alpha)
    if model.error_quantile is None:
        raise ValueError("error law lacks a quantile routine")
    xm = _as_query_matrix(x, model.dim)
    return float(model.m1(xm)[0] + model.m2(xm)[0] * model.error_quantile(a))


def population_quantile_curve(model: LocationScaleModel, x_rows, alpha) -> np.ndarray:
    a = alpha_value(alpha)
    if model.error_quantile is None:
        raise ValueError("error law lacks a quantile routine")
    xm = np.asarray(x_rows, dtype=float)
    if xm.ndim == 1:
        xm = xm.reshape(-1, 1)
    return model.m1(xm) + model.m2(xm) * model.error_quantile(a)


def qtilde_cell_values(
    model: LocationScaleModel, grid: Grid, alpha, mc_n: int = 1_000_000, seed: int = 0
) -> np.ndarray:
    """Per-cell quantized population quantiles by Monte Carlo conditioning.

    Generates ``mc_n`` pairs, projects the covariates on the grid, and takes
    the sample quantile of the responses cell by cell. Cells the sample never
    hits come back NaN.
    """
    a = alpha_value(alpha)
    pool = generate(model, mc_n, seed)
    idx = assign(grid, pool.x)
    values = np.full(grid.size, np.nan)
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    sorted_y = pool.y[order]
    starts = np.searchsorted(sorted_idx, np.arange(grid.size), side="left")
    ends = np.searchsorted(sorted_idx, np.arange(grid.size), side="right")
    for j in range(grid.size):
        if ends[j] > starts[j]:
            values[j] = sample_quantile(sorted_y[starts[j] : ends[j]], a)
    return values


def approx_quantile_qtilde(
    model: LocationScaleModel, grid: Grid, x, alpha, mc_n: int = 1_000_000, seed: int = 0
) -> float:
    """Monte Carlo value of the quantized population quantile at one point."""
    j, _ = project(grid, np.asarray(x, dtype=float).reshape(-1))
    values = qtilde_cell_values(model, grid, alpha, mc_n=mc_n, seed=seed)
    v = values[j]
    if math.isnan(v):
        raise ValueError("cell has negligible mass")
    return float(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one seeded simulation run."""

    model: str = "cubic-beta"
    n: int = 300
    n_points: int = 25
    n_boot: int = 50
    alphas: tuple = (0.5,)
    query: tuple | None = None  # (lo, hi, count); None = full support, 300 points
    query_point: float = 0.0
    seed: int = 0
    replications: int = 50
    mc_n: int = 1_000_000
    p: float = 2.0
    sample_n: int = 200_000
    n_list: tuple = (500, 5000, 50000)
    n_points_list: tuple = (4, 8, 16, 32)
    use_clvq_grids: bool = False
    k_grid: tuple = ()
    h_grid: tuple = ()
    cv_folds: int = 5
    include_truth: bool = False

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        for name in ("n", "n_points", "n_boot", "replications", "mc_n", "sample_n", "cv_folds"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for a in self.alphas:
            alpha_value(a)
        if self.query is not None:
            lo, hi, count = self.query
            if not (lo < hi and int(count) >= 1):
                raise ValueError("query grid must be (lo, hi, count) with lo < hi")
            s_lo, s_hi = MODELS[self.model]().support
            if lo < s_lo or hi > s_hi:
                raise ValueError("query grid exceeds the covariate support")

    def resolved_query(self) -> tuple:
        if self.query is not None:
            return self.query
        lo, hi = MODELS[self.model]().support
        return (lo, hi, 300)

    def query_grid(self) -> np.ndarray:
        lo, hi, count = self.resolved_query()
        count = int(count)
        step = (hi - lo) / count
        return lo + (np.arange(count) + 0.5) * step

    def resolved_k_grid(self) -> tuple:
        if self.k_grid:
            return tuple(int(k) for k in self.k_grid)
        top = max(5, self.n // 3)
        return tuple(range(5, top + 1, 5))

    def resolved_h_grid(self) -> tuple:
        if self.h_grid:
            return tuple(float(h) for h in self.h_grid)
        return tuple(np.geomspace(0.05, 2.0, 25))


def _loglog_slope(sizes, errors) -> float | None:
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2 or np.unique(sizes[ok]).size < 2:
        return None
    coef = np.polyfit(np.log(sizes[ok]), np.log(errors[ok]), 1)
    return float(coef[0])


@dataclass(frozen=True)
class ZadorResult:
    n_points: tuple
    distortions: tuple
    predictions: tuple
    slope: float | None
    in_band: bool | None

    def to_csv(self) -> str:
        flag = "" if self.in_band is None else ("ok" if self.in_band else "out")
        lines = [ZADOR_CSV_HEADER]
        for n_pts, d, pred in zip(self.n_points, self.distortions, self.predictions):
            lines.append(f"{n_pts},{fmt_float(d)},{fmt_float(pred)},{flag}")
        return "\n".join(lines) + "\n"


def run_rate_experiment_zador(config: ExperimentConfig) -> ZadorResult:
    """Distortion of (near-)optimal scalar grids versus the asymptotic law.

    Uses the closed-form uniform[0, 1] grids by default (isolating the rate
    from training error); set ``use_clvq_grids`` to train instead. Emits the
    empirical p-th power distortion next to the predicted constant over the
    configured grid sizes, plus the fitted log-log slope.
    """
    rng = np.random.default_rng(derive_seed(config.seed, 101))
    sample = rng.random(config.sample_n)
    dists, preds = [], []
    for n_pts in config.n_points_list:
        if config.use_clvq_grids:
            grid = clvq_train(
                sample, ClvqConfig(n_points=int(n_pts), p=config.p, seed=derive_seed(config.seed, 102, n_pts))
            )
        else:
            grid = uniform_optimal_grid(0.0, 1.0, int(n_pts))
        dists.append(distortion(grid, sample, config.p))
        preds.append(zador_reference_d1(config.p, int(n_pts)))
    slope = _loglog_slope(config.n_points_list, dists)
    band = (-config.p - 0.3, -config.p + 0.3)
    in_band = None if slope is None else bool(band[0] <= slope <= band[1])
    return ZadorResult(tuple(config.n_points_list), tuple(dists), tuple(preds), slope, in_band)


@dataclass(frozen=True)
class RateResult:
    n_points: tuple
    lp_errors: tuple
    slope: float | None

    def to_csv(self) -> str:
        lines = [RATE_CSV_HEADER]
        for n_pts, e in zip(self.n_points, self.lp_errors):
            lines.append(f"{n_pts},{fmt_float(e)}")
        return "\n".join(lines) + "\n"


def run_approximation_rate_experiment(config: ExperimentConfig) -> RateResult:
    """L2 gap between the quantized approximation and the true quantile.

    For each grid size: build a grid (closed form on the uniform design,
    otherwise trained on a large fresh sample), evaluate the Monte Carlo
    cell quantiles, and average the squared gap to the closed-form quantile
    over an independent covariate sample.
    """
    model = MODELS[config.model]()
    alpha = config.alphas[0]
    errors = []
    for n_pts in config.n_points_list:
        n_pts = int(n_pts)
        if config.model == "uniform-linear" and not config.use_clvq_grids:
            grid = uniform_optimal_grid(*model.support, n_pts)
        else:
            train_x = generate(model, config.sample_n, derive_seed(config.seed, 201, n_pts)).x
            grid = clvq_train(
                train_x, ClvqConfig(n_points=n_pts, p=2.0, seed=derive_seed(config.seed, 202, n_pts))
            )
        cells = qtilde_cell_values(model, grid, alpha, config.mc_n, derive_seed(config.seed, 203, n_pts))
        x_eval = generate(model, config.sample_n, derive_seed(config.seed, 204, n_pts)).x
        qt = cells[assign(grid, x_eval)]
        q = population_quantile_curve(model, x_eval, alpha)
        ok = ~np.isnan(qt)
        errors.append(float(np.sqrt(np.mean((qt[ok] - q[ok]) ** 2))))
    slope = _loglog_slope(config.n_points_list, errors)
    return RateResult(tuple(int(v) for v in config.n_points_list), tuple(errors), slope)


@dataclass(frozen=True)
class ConsistencyResult:
    sample_sizes: tuple
    mean_abs_gaps: tuple
    replications: int
    qtilde_reference: float

    def to_csv(self) -> str:
        lines = [CONSISTENCY_CSV_HEADER]
        for n, g in zip(self.sample_sizes, self.mean_abs_gaps):
            lines.append(f"{n},{fmt_float(g)},{self.replications}")
        return "\n".join(lines) + "\n"


def _map_indexed(fn: Callable[[int], object], count: int) -> list:
    workers = min(worker_count(), count)
    if workers <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def run_consistency_experiment(config: ExperimentConfig) -> ConsistencyResult:
    """Fixed-N consistency signature: the fitted estimator approaches the
    quantized population value at the query point as the sample grows.

    The reference value comes from a grid trained on a large fresh sample
    (standing in for the optimal grid, which has no closed form here) and
    the Monte Carlo cell oracle. Gaps are averaged over seeded replications
    for each sample size.
    """
    model = MODELS[config.model]()
    alpha = config.alphas[0]
    x0 = config.query_point
    ref_x = generate(model, config.sample_n, derive_seed(config.seed, 301)).x
    ref_grid = clvq_train(
        ref_x, ClvqConfig(n_points=config.n_points, p=2.0, seed=derive_seed(config.seed, 302))
    )
    q_ref = approx_quantile_qtilde(
        model, ref_grid, x0, alpha, config.mc_n, derive_seed(config.seed, 303)
    )
    gaps = []
    for n in config.n_list:
        n = int(n)

        def one_rep(r: int, n=n) -> float:
            data = generate(model, n, derive_seed(config.seed, 304, n, r))
            est = fit(data, ClvqConfig(n_points=config.n_points, p=2.0, seed=derive_seed(config.seed, 305, n, r)))
            return abs(est.predict(x0, alpha) - q_ref)

        vals = _map_indexed(one_rep, config.replications)
        gaps.append(float(np.mean(vals)))
    return ConsistencyResult(
        tuple(int(v) for v in config.n_list), tuple(gaps), config.replications, q_ref
    )


@dataclass(frozen=True)
class ComparisonResult:
    rows: tuple  # (estimator, alpha, mse)
    replications: int

    def to_csv(self) -> str:
        lines = [COMPARISON_CSV_HEADER]
        for est, a, mse in self.rows:
            lines.append(f"{est},{fmt_float(a)},{fmt_float(mse)},{self.replications}")
        return "\n".join(lines) + "\n"


def _nan_mse(pred: np.ndarray, target: np.ndarray) -> float:
    ok = ~np.isnan(pred)
    if not ok.any():
        return math.nan
    return float(np.mean((pred[ok] - target[ok]) ** 2))


def run_comparison_experiment(config: ExperimentConfig) -> ComparisonResult:
    """Head-to-head mean squared error against the population quantiles.

    Per replication and level: the quantization estimator (fixed N), its
    bootstrap-aggregated variant, nearest neighbors with the infeasible
    truth-based neighbor count, and the two kernel smoothers with the
    cross-validated mean bandwidth rescaled per level. Squared errors are
    averaged over the query grid (skipping unpredictable points) and then
    across replications.
    """
    model = MODELS[config.model]()
    query = config.query_grid()
    levels = tuple(alpha_value(a) for a in config.alphas)
    truths = {a: population_quantile_curve(model, query, a) for a in levels}
    estimators = ["quant", "quant-boot", "knn", "loc-const", "loc-lin"]
    if config.include_truth:
        estimators.append("truth")

    def one_rep(r: int) -> dict:
        data = generate(model, config.n, derive_seed(config.seed, 401, r))
        cfg = ClvqConfig(n_points=config.n_points, p=config.p, seed=derive_seed(config.seed, 402, r))
        single = fit(data, cfg)
        boot = fit_bootstrap(data, cfg, config.n_boot)
        curve_single = single.predict_curve(query, levels)
        curve_boot = boot.predict_curve(query, levels)
        h_mean = select_h_mean_cv(
            data, config.resolved_h_grid(), config.cv_folds, derive_seed(config.seed, 403, r)
        )
        out: dict = {}
        for ci, a in enumerate(levels):
            truth = truths[a]
            out[("quant", a)] = _nan_mse(curve_single.values[:, ci], truth)
            out[("quant-boot", a)] = _nan_mse(curve_boot.values[:, ci], truth)
            k_star = knn_select_k(
                data, lambda x, a=a: population_quantile(model, x, a), query, a, config.resolved_k_grid()
            )
            knn_est = KnnEstimator(data, k_star)
            knn_pred = np.asarray([knn_predict(knn_est, xq, a) for xq in query])
            out[("knn", a)] = _nan_mse(knn_pred, truth)
            kc = KernelConfig(yu_jones_bandwidth(h_mean, a))
            lc = np.empty(query.size)
            ll = np.empty(query.size)
            for i, xq in enumerate(query):
                try:
                    lc[i] = local_constant_predict(data, kc, xq, a)
                except ValueError:
                    lc[i] = math.nan
                try:
                    ll[i] = local_linear_predict(data, kc, xq, a)
                except (ValueError, RuntimeError):
                    ll[i] = math.nan
            out[("loc-const", a)] = _nan_mse(lc, truth)
            out[("loc-lin", a)] = _nan_mse(ll, truth)
            if config.include_truth:
                out[("truth", a)] = _nan_mse(truth, truth)
        return out

    per_rep = _map_indexed(one_rep, config.replications)
    rows = []
    for est in estimators:
        for a in levels:
            vals = [rep[(est, a)] for rep in per_rep]
            rows.append((est, a, float(np.nanmean(vals))))
    return ComparisonResult(tuple(rows), config.replications)


def write_metadata(path: str, experiment: str, config: ExperimentConfig, extra: dict | None = None) -> None:
    """Plain-text sidecar: experiment id, full config, seed, version."""
    from . import __version__

    payload = {
        "experiment": experiment,
        "config": asdict(config),
        "master_seed": config.seed,
        "version": __version__,
    }
    if extra:
        payload.update(extra)
    atomic_write_text(path, json.dumps(payload, indent=2, default=str) + "\n")
