"""Core containers and exact (weighted) sample quantiles.

Everything downstream rests on three small pieces: the asymmetric check
loss, the left-continuous sample quantile (the inf-convention inverse of
the empirical distribution function), and the weighted check-loss argmin
that generalizes it to arbitrary nonnegative weights.

Conventions fixed here and relied on everywhere else:

* quantiles are *type 1*: ``inf{y : F_n(y) >= alpha}`` -- always a data
  value, no interpolation;
* ties in any argmin are broken toward the smallest minimizing data value;
* non-finite values are rejected when containers are built, so the numeric
  kernels below stay branch-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantileLevel",
    "Dataset",
    "QuantileCurve",
    "check_loss",
    "sample_quantile",
    "weighted_check_argmin",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuantileLevel:
    """A quantile order restricted to the open interval (0, 1)."""

    alpha: float

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not (0.0 < a < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "alpha", a)


def alpha_value(level: "QuantileLevel | float") -> float:
    """Unwrap a QuantileLevel or validate a bare float level."""
    if isinstance(level, QuantileLevel):
        return level.alpha
    return QuantileLevel(float(level)).alpha


@dataclass(frozen=True)
class Dataset:
    """Paired observations: covariates ``x`` (n x d) and responses ``y`` (n,).

    All entries must be finite; a scalar covariate may be passed as a
    1-d array and is stored as a single-column matrix. The arrays are
    frozen after validation, so a Dataset is safe to share across threads.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ValueError(f"x must be 1-d or 2-d, got shape {np.shape(self.x)}")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class QuantileCurve:
    """Predictions on a query grid, one column per quantile level.

    ``values[i, j]`` is the prediction at ``query_points[i]`` for level
    ``levels[j]``. NaN marks a per-point prediction that could not be made
    (e.g. an empty quantization cell); infinities are rejected.
    ``extrapolated`` flags query points outside the training covariate range.
    """

    query_points: np.ndarray
    levels: tuple
    values: np.ndarray
    extrapolated: bool = False

    def __post_init__(self) -> None:
        q = np.asarray(self.query_points, dtype=float)
        if q.ndim == 1:
            q = q.reshape(-1, 1)
        levels = tuple(alpha_value(a) for a in self.levels)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (q.shape[0], len(levels)):
            raise ValueError(
                f"values shape {v.shape} does not match "
                f"{q.shape[0]} query points x {len(levels)} levels"
            )
        if np.any(np.isinf(v)):
            raise ValueError("curve values must be finite (NaN marks missing)")
        object.__setattr__(self, "query_points", _readonly(q))
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", _readonly(v))


def check_loss(z, alpha):
    """Asymmetric absolute loss ``z * (alpha - 1[z < 0])``.

    Nonnegative, zero exactly at ``z = 0``, and equal to
    ``max(alpha * z, (alpha - 1) * z)``. Accepts scalars or arrays.
    """
    a = alpha_value(alpha)
    z = np.asarray(z, dtype=float)
    out = z * (a - (z < 0.0))
    if out.ndim == 0:
        return float(out)
    return out


def sample_quantile(y, alpha) -> float:
    """Smallest order statistic ``y_(k)`` with ``k = ceil(alpha * n)``.

    This is the left-continuous inverse of the empirical distribution
    function evaluated at ``alpha``; the result is always one of the data
    values. Raises on an empty sample.
    """
    a = alpha_value(alpha)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.size
    if n == 0:
        raise ValueError("empty sample")
    k = math.ceil(a * n)
    k = min(max(k, 1), n)
    return float(np.partition(y, k - 1)[k - 1])


def weighted_check_argmin(y, w, alpha) -> float:
    """Smallest data value minimizing ``sum_i w_i * check_loss(y_i - a)``.

    The objective is convex and piecewise linear in ``a``, so a minimizer
    is always attained at one of the ``y_i``; among minimizing data points
    the smallest is returned. With unit weights this coincides exactly with
    :func:`sample_quantile`. Raises if the weights sum to zero.
    """
    a = alpha_value(alpha)
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if y.shape != w.shape:
        raise ValueError(f"y has {y.size} entries but w has {w.size}")
    total = float(w.sum())
    if not total > 0.0:
        raise ValueError("degenerate weights")
    order = np.argsort(y, kind="stable")
    cw = np.cumsum(w[order])
    k = int(np.searchsorted(cw, a * total, side="left"))
    k = min(k, y.size - 1)
    return float(y[order[k]])
