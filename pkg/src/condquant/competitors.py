"""Reference estimators: k-NN quantiles and Gaussian-kernel quantile smoothers.

These are the standard baselines the quantization estimator is compared
against. The kernel estimators minimize a locally weighted check loss: the
local constant version over an intercept only, the local linear version
over an intercept and slope. Bandwidths follow the usual two-stage rule:
a cross-validated mean-regression bandwidth rescaled per quantile level.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.special import ndtri

from .core import Dataset, alpha_value, sample_quantile, weighted_check_argmin

__all__ = [
    "KnnEstimator",
    "KernelConfig",
    "knn_predict",
    "knn_select_k",
    "local_constant_predict",
    "local_linear_predict",
    "yu_jones_bandwidth",
    "select_h_mean_cv",
]


@dataclass(frozen=True)
class KnnEstimator:
    """Nearest-neighbor conditional quantiles with a fixed neighbor count."""

    data: Dataset
    k: int

    def __post_init__(self) -> None:
        if not 1 <= self.k <= self.data.n:
            raise ValueError(f"k must lie in [1, n], got k={self.k}, n={self.data.n}")

    def predict(self, x, alpha) -> float:
        return knn_predict(self, x, alpha)


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian-kernel bandwidth; the kernel itself is fixed."""

    h: float

    def __post_init__(self) -> None:
        if not self.h > 0.0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")


def _sq_dist_to(x_rows: np.ndarray, x) -> np.ndarray:
    pt = np.asarray(x, dtype=float).reshape(-1)
    if pt.size != x_rows.shape[1]:
        raise ValueError(f"query dimension {pt.size} != data dimension {x_rows.shape[1]}")
    return ((x_rows - pt) ** 2).sum(axis=1)


def _neighbor_order(data: Dataset, x) -> np.ndarray:
    # stable sort: equal distances keep the smaller observation index first
    return np.argsort(_sq_dist_to(data.x, x), kind="stable")


def knn_predict(est: KnnEstimator, x, alpha) -> float:
    """Sample quantile of the responses of the k nearest covariates."""
    order = _neighbor_order(est.data, x)
    return sample_quantile(est.data.y[order[: est.k]], alpha)


def knn_select_k(data: Dataset, truth, query, alpha, k_grid) -> int:
    """Neighbor count minimizing mean squared error against a known truth.

    ``truth`` is the population conditional quantile function, so this
    selector is only usable inside simulations; ties resolve to the
    smallest k.
    """
    a = alpha_value(alpha)
    k_grid = [int(k) for k in k_grid]
    if not k_grid:
        raise ValueError("empty k grid")
    query = np.asarray(query, dtype=float)
    qm = query.reshape(-1, 1) if query.ndim == 1 else query
    orders = [_neighbor_order(data, row) for row in qm]
    target = np.asarray([float(truth(row if row.size > 1 else row[0])) for row in qm])
    best_k, best_mse = None, math.inf
    for k in k_grid:
        if not 1 <= k <= data.n:
            raise ValueError(f"k={k} outside [1, n]")
        pred = np.asarray(
            [sample_quantile(data.y[order[:k]], a) for order in orders]
        )
        mse = float(np.mean((pred - target) ** 2))
        if mse < best_mse or (mse == best_mse and best_k is not None and k < best_k):
            best_k, best_mse = k, mse
    return int(best_k)


def gaussian_weights(data: Dataset, x, h: float) -> np.ndarray:
    return np.exp(-_sq_dist_to(data.x, x) / (2.0 * h * h))


def local_constant_predict(data: Dataset, cfg: KernelConfig, x, alpha) -> float:
    """Weighted check-loss argmin with Gaussian weights centered at x."""
    w = gaussian_weights(data, x, cfg.h)
    if not np.any(w > 0.0):
        raise ValueError("bandwidth too small at x")
    return weighted_check_argmin(data.y, w, alpha)


_WEIGHT_TRIM = 1e-12


def _solve_weighted_qr_line(y: np.ndarray, u: np.ndarray, w: np.ndarray, alpha: float) -> tuple[float, float]:
    # Exact minimization of sum_i w_i rho_alpha(y_i - a - b u_i) as the
    # standard linear program: split residuals into positive/negative parts
    # priced at alpha*w and (1-alpha)*w. HiGHS returns a vertex solution.
    # Weights below _WEIGHT_TRIM of the maximum are dropped; Gaussian tails
    # span hundreds of orders of magnitude and would wreck the LP scaling
    # while moving the objective by far less than any stated tolerance.
    keep = w > w.max() * _WEIGHT_TRIM
    y, u, w = y[keep], u[keep], w[keep] / w.max()
    n = y.size
    cost = np.concatenate([[0.0, 0.0, 0.0, 0.0], alpha * w, (1.0 - alpha) * w])
    ones = np.ones(n)
    design = sparse.hstack(
        [
            sparse.csc_matrix(np.column_stack([ones, -ones, u, -u])),
            sparse.eye(n, format="csc"),
            -sparse.eye(n, format="csc"),
        ],
        format="csc",
    )
    res = linprog(cost, A_eq=design, b_eq=y, bounds=(0.0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"local linear fit did not converge: {res.message}")
    a = float(res.x[0] - res.x[1])
    b = float(res.x[2] - res.x[3])
    return a, b


def local_linear_predict(data: Dataset, cfg: KernelConfig, x, alpha) -> float:
    """Locally linear check-loss fit at a scalar covariate; returns the level.

    Minimizes ``sum_i w_i rho_alpha(Y_i - a - b (X_i - x))`` over the
    intercept/slope pair and returns the intercept, which is the quantile
    estimate at ``x``. The piecewise-linear program is solved exactly as a
    linear program. Falls back to the local constant estimate, with a
    warning, when fewer than two distinct covariates carry weight.
    """
    if data.dim != 1:
        raise ValueError("local linear smoothing is implemented for d = 1 only")
    a_level = alpha_value(alpha)
    w = gaussian_weights(data, x, cfg.h)
    if not np.any(w > 0.0):
        raise ValueError("bandwidth too small at x")
    xv = float(np.asarray(x, dtype=float).reshape(-1)[0])
    u = data.x[:, 0] - xv
    nz = w > w.max() * _WEIGHT_TRIM
    if np.unique(u[nz]).size < 2:
        warnings.warn(
            "degenerate local design: falling back to the local constant fit",
            RuntimeWarning,
            stacklevel=2,
        )
        return weighted_check_argmin(data.y, w, a_level)
    a, _ = _solve_weighted_qr_line(data.y, u, w, a_level)
    return a


def yu_jones_bandwidth(h_mean: float, alpha) -> float:
    """Quantile-level bandwidth ``alpha (1 - alpha) h_mean / phi(ndtri(alpha))^2``.

    Symmetric in ``alpha`` versus ``1 - alpha`` by construction (computed at
    ``min(alpha, 1 - alpha)``) and linear in ``h_mean``.
    """
    if not h_mean > 0.0:
        raise ValueError(f"h_mean must be positive, got {h_mean}")
    a = alpha_value(alpha)
    a_sym = min(a, 1.0 - a)
    q = float(ndtri(a_sym))
    dens = math.exp(-0.5 * q * q) / math.sqrt(2.0 * math.pi)
    return a * (1.0 - a) * h_mean / (dens * dens)


def _nw_predict(train_x: np.ndarray, train_y: np.ndarray, eval_x: np.ndarray, h: float) -> np.ndarray:
    # Nadaraya-Watson mean with max-shifted exponents: sharp bandwidths
    # degrade gracefully to the 1-NN response instead of 0/0.
    d2 = ((eval_x[:, None, :] - train_x[None, :, :]) ** 2).sum(axis=2)
    logw = -d2 / (2.0 * h * h)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return (w * train_y[None, :]).sum(axis=1) / w.sum(axis=1)


def select_h_mean_cv(data: Dataset, h_grid, folds: int, seed: int = 0) -> float:
    """Cross-validated mean-regression bandwidth (Gaussian Nadaraya-Watson).

    K-fold squared prediction error over the grid; smallest h wins ties.
    The fold partition is a seeded permutation split into ``folds``
    contiguous blocks, so the choice is reproducible.
    """
    h_grid = [float(h) for h in h_grid]
    if not h_grid:
        raise ValueError("empty bandwidth grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    n = data.n
    rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
    perm = rng.permutation(n)
    blocks = np.array_split(perm, folds)
    if any(b.size == 0 for b in blocks):
        raise ValueError("empty fold: more folds than observations")
    sse = np.zeros(len(h_grid))
    for block in blocks:
        mask = np.ones(n, dtype=bool)
        mask[block] = False
        tx, ty = data.x[mask], data.y[mask]
        vx, vy = data.x[block], data.y[block]
        for hi, h in enumerate(h_grid):
            pred = _nw_predict(tx, ty, vx, h)
            sse[hi] += float(((pred - vy) ** 2).sum())
    best = int(np.argmin(sse))
    for hi in range(len(h_grid)):
        if sse[hi] == sse[best] and h_grid[hi] < h_grid[best]:
            best = hi
    return float(h_grid[best])
