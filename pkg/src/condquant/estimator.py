"""Conditional quantile estimation by quantizing the covariate.

The estimator is two-step: train a codebook on the covariates, then answer
a query ``(x, alpha)`` with the sample alpha-quantile of the responses whose
covariates fall in the same Voronoi cell as ``x``. Localization comes
entirely from the partition, so the effective "bandwidth" adapts to the
covariate density.

The bootstrap variant retrains only the codebooks on resampled covariates
and averages the resulting cell quantiles (computed on the original sample)
across grids, which smooths the piecewise-constant curves considerably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import derive_seed, fmt_float
from .core import Dataset, QuantileCurve, alpha_value, sample_quantile
from .quantizer import ClvqConfig, Grid, assign, clvq_train, clvq_train_bootstrap, project

__all__ = [
    "CellAssignment",
    "EmptyCellError",
    "QuantEstimator",
    "BootstrapEstimator",
    "fit",
    "fit_bootstrap",
    "curve_to_csv_rows",
    "curves_to_csv",
    "CURVE_CSV_HEADER",
]

CURVE_CSV_HEADER = "x,alpha,value,estimator,N,B"


class EmptyCellError(ValueError):
    """Raised when a prediction lands in a quantization cell with no data."""


@dataclass(frozen=True)
class CellAssignment:
    """Per-observation index of the nearest grid point."""

    indices: np.ndarray
    n_cells: int

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be a vector")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_cells):
            raise ValueError("cell index out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)


def _cell_sorted_responses(idx: np.ndarray, y: np.ndarray, n_cells: int) -> list[np.ndarray]:
    cells: list[np.ndarray] = []
    for j in range(n_cells):
        yj = np.sort(y[idx == j])
        yj.setflags(write=False)
        cells.append(yj)
    return cells


def _quantile_from_sorted(ys: np.ndarray, a: float) -> float:
    # Type-1 quantile as a direct index lookup into the pre-sorted cell.
    k = math.ceil(a * ys.size)
    return float(ys[min(max(k, 1), ys.size) - 1])


class QuantEstimator:
    """Single-grid conditional quantile estimator.

    Construct via :func:`fit`. Immutable once built: predictions are pure
    lookups (project the query, index into the pre-sorted cell responses)
    and safe to run concurrently.
    """

    def __init__(self, grid: Grid, data: Dataset):
        self.grid = grid
        self.data = data
        self.assignments = CellAssignment(assign(grid, data.x), grid.size)
        self._cells = _cell_sorted_responses(self.assignments.indices, data.y, grid.size)

    @property
    def n_points(self) -> int:
        return self.grid.size

    def cell_counts(self) -> np.ndarray:
        return np.asarray([c.size for c in self._cells], dtype=np.int64)

    def predict(self, x, alpha) -> float:
        """Sample quantile of the responses sharing the query's cell."""
        a = alpha_value(alpha)
        j, _ = project(self.grid, x)
        ys = self._cells[j]
        if ys.size == 0:
            raise EmptyCellError("empty quantization cell")
        return _quantile_from_sorted(ys, a)

    def predict_curve(self, query, levels) -> QuantileCurve:
        """Evaluate on a grid of query points; empty cells become NaN."""
        return _predict_curve_cells(self.grid, [self._cells], self.data, query, levels)


class BootstrapEstimator:
    """Average of single-grid predictions across B resampled codebooks.

    Every grid is trained on covariates resampled with replacement; the cell
    quantiles always come from the original sample. A query cell that is
    empty under some grids is simply skipped and the mean runs over the
    contributing grids.
    """

    def __init__(self, grids: list[Grid], data: Dataset):
        if not grids:
            raise ValueError("need at least one grid")
        dims = {g.dim for g in grids}
        sizes = {g.size for g in grids}
        if len(dims) != 1 or len(sizes) != 1:
            raise ValueError("all bootstrap grids must share dim and size")
        self.grids = list(grids)
        self.data = data
        self._cells = [
            _cell_sorted_responses(assign(g, data.x), data.y, g.size) for g in grids
        ]

    @property
    def n_replicates(self) -> int:
        return len(self.grids)

    @property
    def n_points(self) -> int:
        return self.grids[0].size

    def predict(self, x, alpha) -> float:
        """Mean over grids of the per-grid cell quantile at the query."""
        a = alpha_value(alpha)
        total = 0.0
        used = 0
        for g, cells in zip(self.grids, self._cells):
            j, _ = project(g, x)
            ys = cells[j]
            if ys.size == 0:
                continue
            total += _quantile_from_sorted(ys, a)
            used += 1
        if used == 0:
            raise EmptyCellError("empty quantization cell in every bootstrap grid")
        return total / used

    def predict_curve(self, query, levels) -> QuantileCurve:
        return _predict_curve_cells(None, self._cells, self.data, query, levels, grids=self.grids)


def _predict_curve_cells(grid, cell_lists, data, query, levels, grids=None) -> QuantileCurve:
    q = np.asarray(query, dtype=float)
    if q.ndim == 1:
        qm = q.reshape(-1, 1)
    else:
        qm = q
    if qm.shape[0] == 0:
        raise ValueError("empty query grid")
    levels = [alpha_value(a) for a in levels]
    m = qm.shape[0]
    acc = np.zeros((m, len(levels)))
    used = np.zeros((m, len(levels)), dtype=np.int64)
    grid_seq = grids if grids is not None else [grid]
    for g, cells in zip(grid_seq, cell_lists):
        idx = assign(g, qm)
        # one quantile per touched (cell, level) pair, then a gather
        touched = np.unique(idx)
        for ci, a in enumerate(levels):
            vals = np.full(g.size, np.nan)
            for j in touched:
                ys = cells[j]
                if ys.size:
                    vals[j] = _quantile_from_sorted(ys, a)
            got = vals[idx]
            ok = ~np.isnan(got)
            acc[ok, ci] += got[ok]
            used[:, ci] += ok
    values = np.where(used > 0, acc / np.maximum(used, 1), np.nan)
    lo, hi = data.x.min(axis=0), data.x.max(axis=0)
    extrapolated = bool(np.any(qm < lo) or np.any(qm > hi))
    return QuantileCurve(q, tuple(levels), values, extrapolated=extrapolated)


def fit(data: Dataset, config: ClvqConfig) -> QuantEstimator:
    """Train the codebook on ``data.x`` and index the responses by cell.

    Requires more observations than grid points (the grid is seeded from
    the sample itself).
    """
    if data.n <= config.n_points:
        raise ValueError(
            f"need n > N, got n={data.n}, N={config.n_points}"
        )
    grid = clvq_train(data.x, config)
    return QuantEstimator(grid, data)


def fit_bootstrap(data: Dataset, config: ClvqConfig, n_boot: int) -> BootstrapEstimator:
    """Train ``n_boot`` codebooks on resampled covariates.

    Each replicate b gets the derived seed ``derive_seed(config.seed, b)``,
    so growing ``n_boot`` never reshuffles earlier replicates.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be >= 1")
    if data.n <= config.n_points:
        raise ValueError(
            f"need n > N, got n={data.n}, N={config.n_points}"
        )
    grids = []
    for b in range(n_boot):
        cfg_b = ClvqConfig(
            n_points=config.n_points,
            p=config.p,
            schedule=config.schedule,
            seed=derive_seed(config.seed, b),
            epochs=config.epochs,
        )
        grids.append(clvq_train_bootstrap(data.x, cfg_b))
    return BootstrapEstimator(grids, data)


def _format_query_point(row: np.ndarray) -> str:
    if row.size == 1:
        return fmt_float(row[0])
    return ";".join(fmt_float(v) for v in row)


def curve_to_csv_rows(curve: QuantileCurve, estimator: str, n_points: int, n_boot: int) -> list[str]:
    """Long-format rows ``x,alpha,value,estimator,N,B``; NaN becomes empty."""
    rows = []
    for i, row in enumerate(curve.query_points):
        xs = _format_query_point(row)
        for j, a in enumerate(curve.levels):
            v = curve.values[i, j]
            val = "" if math.isnan(v) else fmt_float(v)
            rows.append(f"{xs},{fmt_float(a)},{val},{estimator},{n_points},{n_boot}")
    return rows


def curves_to_csv(entries: list[tuple[QuantileCurve, str, int, int]]) -> str:
    lines = [CURVE_CSV_HEADER]
    for curve, label, n_points, n_boot in entries:
        lines.extend(curve_to_csv_rows(curve, label, n_points, n_boot))
    return "\n".join(lines) + "\n"
