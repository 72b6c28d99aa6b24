"""Codebook training by competitive learning, plus projection and distortion.

A grid (codebook) of N points discretizes a d-dimensional random vector by
nearest-point projection. Training is the classical winner-take-all
stochastic gradient scheme: each incoming observation moves only the grid
point closest to it, by a step that shrinks like ``a / (b + t)``. For the
squared-error case (``p = 2``) this is the CLVQ algorithm.

Closed-form references for the scalar uniform law (the optimal grid and the
asymptotic distortion constant) live here too; they anchor the rate
experiments and the test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._util import fmt_float

__all__ = [
    "Grid",
    "StepSchedule",
    "ClvqConfig",
    "InsufficientSupportError",
    "default_schedule",
    "project",
    "assign",
    "clvq_step",
    "clvq_train",
    "clvq_train_trace",
    "clvq_train_bootstrap",
    "distortion",
    "uniform_optimal_grid",
    "zador_reference_d1",
    "grid_separation",
    "save_grid",
    "load_grid",
    "grid_to_csv",
    "grid_from_csv",
]

_MASK64 = (1 << 64) - 1


class InsufficientSupportError(ValueError):
    """Raised when the data carry fewer distinct covariate values than N."""


@dataclass(frozen=True)
class Grid:
    """An ordered codebook of N pairwise-distinct points in R^d.

    Storage order is the insertion order from training; nothing is sorted.
    The point array is frozen after validation and safe for concurrent reads.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError(f"grid needs an (N, d) point array, got shape {np.shape(self.points)}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("grid points must be pairwise distinct")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``delta_t = a / (b + t)``, t = 1, 2, ...

    Requires ``0 < a < b + 1`` so every step lies in (0, 1); this family
    automatically satisfies the divergent-sum / summable-squares conditions
    the stochastic gradient scheme needs.
    """

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError("schedule parameters must be positive")
        if not self.a < self.b + 1.0:
            raise ValueError("need a < b + 1 so that every step stays below 1")

    def step(self, t: int) -> float:
        return self.a / (self.b + t)


def default_schedule(n_points: int) -> StepSchedule:
    """Default harmonic-type decay; b scales with N to slow early collapse."""
    b = 10.0 * n_points
    return StepSchedule(a=0.5 * (b + 1.0), b=b)


@dataclass(frozen=True)
class ClvqConfig:
    """Training configuration: grid size, norm exponent, steps, seed.

    ``epochs`` replays the sample that many times (one pass, exactly one
    iteration per observation, is the default and the standard choice).
    """

    n_points: int
    p: float = 2.0
    schedule: StepSchedule | None = None
    seed: int = 0
    epochs: int = 1

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not self.p >= 1.0:
            raise ValueError("p must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def resolved_schedule(self) -> StepSchedule:
        return self.schedule if self.schedule is not None else default_schedule(self.n_points)


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise ValueError(f"expected an (n, d) matrix, got shape {x.shape}")
    return x


def _as_point(x, dim: int) -> np.ndarray:
    pt = np.asarray(x, dtype=float).reshape(-1)
    if pt.size != dim:
        raise ValueError(f"point has dimension {pt.size}, grid has dimension {dim}")
    return pt


def project(grid: Grid, x) -> tuple[int, np.ndarray]:
    """Nearest grid point (Euclidean); ties resolve to the smallest index.

    Returns ``(index, point)`` with ``point`` a copy of the winning row.
    """
    pt = _as_point(x, grid.dim)
    diff = grid.points - pt
    i = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
    return i, grid.points[i].copy()


def assign(grid: Grid, x, chunk: int = 65536) -> np.ndarray:
    """Vectorized projection of many points: index of the nearest grid point.

    Argmin over squared distances with first-occurrence tie-breaking, so the
    result agrees with :func:`project` row by row.
    """
    x = _as_matrix(x)
    if x.shape[1] != grid.dim:
        raise ValueError(f"data dimension {x.shape[1]} != grid dimension {grid.dim}")
    pts = grid.points
    out = np.empty(x.shape[0], dtype=np.int64)
    for s in range(0, x.shape[0], chunk):
        blk = x[s : s + chunk]
        d2 = ((blk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        out[s : s + chunk] = np.argmin(d2, axis=1)
    return out


def _move_winner(g: np.ndarray, j: int, diff_j: np.ndarray, delta: float, p: float) -> None:
    # diff_j = g[j] - xi; the gradient has a single non-zero entry (the winner),
    # and a winner coinciding with xi does not move.
    if p == 2.0:
        g[j] -= delta * diff_j
        return
    r = math.sqrt(float(diff_j @ diff_j))
    if r > 0.0:
        g[j] -= (delta * r ** (p - 1.0)) * (diff_j / r)


def clvq_step(grid: Grid, xi, delta_t: float, p: float = 2.0) -> Grid:
    """One winner-take-all update: move the nearest grid point toward ``xi``.

    For ``p = 2`` the winner moves by ``delta_t * (xi - winner)``; for general
    ``p >= 1`` the displacement is ``delta_t * |winner - xi|^(p-1)`` along the
    unit direction toward ``xi``. All other points are untouched.
    """
    if not (0.0 < delta_t < 1.0):
        raise ValueError(f"delta_t must lie in (0, 1), got {delta_t}")
    if not p >= 1.0:
        raise ValueError("p must be >= 1")
    pt = _as_point(xi, grid.dim)
    g = grid.points.copy()
    diff = g - pt
    j = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
    _move_winner(g, j, diff[j], delta_t, p)
    return Grid(g)


def _distinct_count(x: np.ndarray) -> int:
    return np.unique(x, axis=0).shape[0]


def _init_grid_without_replacement(x: np.ndarray, n_points: int, rng: np.random.Generator) -> np.ndarray:
    # Sample rows without replacement, skipping covariate values already picked.
    seen: set[bytes] = set()
    rows = []
    for i in rng.permutation(x.shape[0]):
        key = x[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        rows.append(i)
        if len(rows) == n_points:
            break
    return x[np.asarray(rows, dtype=np.int64)].copy()


def _init_grid_with_replacement(x: np.ndarray, n_points: int, rng: np.random.Generator) -> np.ndarray:
    # Resample rows with replacement until N pairwise-distinct values are found.
    n = x.shape[0]
    seen: set[bytes] = set()
    rows = []
    while len(rows) < n_points:
        i = int(rng.integers(0, n))
        key = x[i].tobytes()
        if key in seen:
            continue
        seen.add(key)
        rows.append(i)
    return x[np.asarray(rows, dtype=np.int64)].copy()


def _run_iterations(
    g: np.ndarray,
    x: np.ndarray,
    order: np.ndarray | None,
    schedule: StepSchedule,
    p: float,
    trace_every: int = 0,
) -> list[float]:
    # Sequential by construction: iterate t depends on iterate t-1.
    separations: list[float] = []
    a, b = schedule.a, schedule.b
    n_points = g.shape[0]
    if order is None:
        stream = x
    else:
        stream = x[order]
    t = 0
    if g.shape[1] == 1:
        # Scalar fast path: plain-float inner loop avoids array overhead.
        gl = [float(v) for v in g[:, 0]]
        for xi in stream[:, 0]:
            t += 1
            delta = a / (b + t)
            xv = float(xi)
            best = 0
            bestd = abs(gl[0] - xv)
            for j in range(1, n_points):
                dj = abs(gl[j] - xv)
                if dj < bestd:
                    best = j
                    bestd = dj
            if bestd > 0.0:
                if p == 2.0:
                    gl[best] -= delta * (gl[best] - xv)
                else:
                    gl[best] -= delta * bestd ** (p - 1.0) * math.copysign(1.0, gl[best] - xv)
            if trace_every and t % trace_every == 0:
                separations.append(min(abs(u - v) for i, u in enumerate(gl) for v in gl[i + 1 :]))
        g[:, 0] = gl
    else:
        for xi in stream:
            t += 1
            delta = a / (b + t)
            diff = g - xi
            j = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            _move_winner(g, j, diff[j], delta, p)
            if trace_every and t % trace_every == 0:
                separations.append(grid_separation(Grid(g.copy())))
    return separations


def clvq_train(data_x, config: ClvqConfig) -> Grid:
    """Train a codebook on the sample, one winner update per observation.

    The initial grid is drawn without replacement from the rows themselves
    (duplicate covariate values cannot be picked twice); iterations then
    consume the observations in dataset order, one pass per epoch. The
    result is deterministic given (data, config).
    """
    grid, _ = _train_impl(data_x, config, bootstrap=False, trace_every=0)
    return grid


def clvq_train_trace(data_x, config: ClvqConfig, trace_every: int = 1000) -> tuple[Grid, np.ndarray]:
    """As :func:`clvq_train`, also recording the grid-separation trajectory."""
    grid, seps = _train_impl(data_x, config, bootstrap=False, trace_every=max(1, trace_every))
    return grid, np.asarray(seps, dtype=float)


def clvq_train_bootstrap(data_x, config: ClvqConfig) -> Grid:
    """Train on a resampled stream: init and iterates drawn with replacement.

    The initial grid is still constrained to pairwise-distinct values; the
    iteration inputs are unconstrained draws with replacement from the rows.
    """
    grid, _ = _train_impl(data_x, config, bootstrap=True, trace_every=0)
    return grid


def _train_impl(data_x, config: ClvqConfig, bootstrap: bool, trace_every: int) -> tuple[Grid, list[float]]:
    x = _as_matrix(data_x)
    n = x.shape[0]
    n_points = config.n_points
    if n < n_points or _distinct_count(x) < n_points:
        raise InsufficientSupportError(
            f"insufficient distinct support: need {n_points} distinct covariate values"
        )
    rng = np.random.default_rng(int(config.seed) & _MASK64)
    if bootstrap:
        g = _init_grid_with_replacement(x, n_points, rng)
        order = rng.integers(0, n, size=n * config.epochs)
    else:
        g = _init_grid_without_replacement(x, n_points, rng)
        order = None if config.epochs == 1 else np.tile(np.arange(n), config.epochs)
    seps = _run_iterations(g, x, order, config.resolved_schedule(), config.p, trace_every)
    return Grid(g), seps


def distortion(grid: Grid, data_x, p: float = 2.0, chunk: int = 65536) -> float:
    """Empirical p-th power distortion: mean over rows of min_j |x - g_j|^p."""
    x = _as_matrix(data_x)
    if x.shape[0] == 0:
        raise ValueError("empty data")
    if x.shape[1] != grid.dim:
        raise ValueError(f"data dimension {x.shape[1]} != grid dimension {grid.dim}")
    pts = grid.points
    total = 0.0
    for s in range(0, x.shape[0], chunk):
        blk = x[s : s + chunk]
        d2 = ((blk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        m = d2.min(axis=1)
        if p == 2.0:
            total += float(m.sum())
        else:
            total += float((m ** (p / 2.0)).sum())
    return total / x.shape[0]


def uniform_optimal_grid(a: float, b: float, n_points: int) -> Grid:
    """The distortion-minimizing scalar grid for the uniform law on [a, b].

    Points sit at ``a + (2k - 1) / (2N) * (b - a)``, k = 1..N, ascending.
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    k = np.arange(1, n_points + 1, dtype=float)
    return Grid(a + (2.0 * k - 1.0) / (2.0 * n_points) * (b - a))


def zador_reference_d1(p: float, n_points: int) -> float:
    """Asymptotic distortion prediction for the uniform law on [0, 1], d = 1.

    The limiting constant is ``1 / (2^p (p + 1))``; the prediction for an
    N-point grid is that constant divided by ``N^p``.
    """
    if not p >= 1.0:
        raise ValueError("p must be >= 1")
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    return 1.0 / (2.0**p * (p + 1.0)) / float(n_points) ** p


def grid_separation(grid: Grid) -> float:
    """Smallest Euclidean distance between two grid points."""
    if grid.size < 2:
        raise ValueError("separation undefined")
    pts = grid.points
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(grid.size, k=1)
    return float(np.sqrt(d2[iu].min()))


def grid_to_csv(grid: Grid) -> str:
    header = ",".join(f"x{j + 1}" for j in range(grid.dim))
    lines = [header]
    for row in grid.points:
        lines.append(",".join(fmt_float(v) for v in row))
    return "\n".join(lines) + "\n"


def grid_from_csv(text: str) -> Grid:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty grid file")
    header = lines[0].split(",")
    expected = [f"x{j + 1}" for j in range(len(header))]
    if header != expected:
        raise ValueError(f"bad grid header: {lines[0]!r}")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return Grid(np.asarray(rows, dtype=float))


def save_grid(grid: Grid, path: str) -> None:
    from ._util import atomic_write_text

    atomic_write_text(path, grid_to_csv(grid))


def load_grid(path: str) -> Grid:
    with open(path, "r", encoding="utf-8") as fh:
        return grid_from_csv(fh.read())
