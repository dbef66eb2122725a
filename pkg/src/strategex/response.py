"""Strategic best responses and effective classifiers.

The effective label of ``x`` is 1 iff some point within cost ``alpha`` of
``x`` is labeled positive by ``h``.  On grids this is a distance transform
of the positive cells thresholded at ``alpha``; for a single point it is a
closed form (linear rules, norm balls) or a dense ray scan of the ball.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import (
    BallUnion,
    Classifier,
    CostModel,
    GridSampled,
    LabelGrid,
    Linear,
    Norm,
    grid_for_box,
)

INF = np.inf


class EmptyPositiveRegionWarning(UserWarning):
    """The rasterized classifier has no positive cell; the effective grid is all zero."""


@dataclass(frozen=True)
class BestResponseResult:
    moved: int
    target: np.ndarray
    cost_paid: float


# ---------------------------------------------------------------------------
# distance transform kernels (units: cells)


@njit(cache=True)
def _lower_envelope_rows(f):
    """Squared-distance transform of every row: ``min_p f[p] + (q - p)^2``.

    Felzenszwalb-Huttenlocher lower envelope of parabolas; rows without any
    finite site come back as +inf.
    """
    rows, n = f.shape
    out = np.empty_like(f)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for r in range(rows):
        k = -1
        for q in range(n):
            fq = f[r, q]
            if fq == INF:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -INF
                z[1] = INF
                continue
            s = 0.0
            while k >= 0:
                p = v[k]
                s = ((fq + q * q) - (f[r, p] + p * p)) / (2.0 * q - 2.0 * p)
                if s <= z[k]:
                    k -= 1
                else:
                    break
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -INF
                z[1] = INF
            else:
                k += 1
                v[k] = q
                z[k] = s
                z[k + 1] = INF
        if k < 0:
            for q in range(n):
                out[r, q] = INF
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            d = q - v[j]
            out[r, q] = d * d + f[r, v[j]]
    return out


@njit(cache=True)
def _chamfer(D, interior, forward, backward):
    """Two raster passes with unit weights over a padded flat array.

    With axis neighbors this is exact for the l1 (city block) metric and
    with the full 3^d neighborhood exact for l-inf (chessboard).
    """
    n = D.size
    for i in range(n):
        if not interior[i]:
            continue
        best = D[i]
        for o in forward:
            c = D[i + o] + 1.0
            if c < best:
                best = c
        D[i] = best
    for i in range(n - 1, -1, -1):
        if not interior[i]:
            continue
        best = D[i]
        for o in backward:
            c = D[i + o] + 1.0
            if c < best:
                best = c
        D[i] = best
    return D


def _sq_edt_cells(mask: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance (in cells) to the nearest True cell."""
    out = np.where(mask, 0.0, INF)
    for axis in range(mask.ndim):
        moved = np.moveaxis(out, axis, -1)
        shape = moved.shape
        rows = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
        out = np.moveaxis(_lower_envelope_rows(rows).reshape(shape), -1, axis)
    return np.ascontiguousarray(out)


def _chamfer_cells(mask: np.ndarray, norm: Norm) -> np.ndarray:
    d = mask.ndim
    padded = np.pad(np.where(mask, 0.0, INF), 1, constant_values=INF)
    interior = np.pad(np.ones(mask.shape, dtype=bool), 1, constant_values=False)
    strides = np.array([int(np.prod(padded.shape[a + 1 :])) for a in range(d)], dtype=np.int64)
    if norm is Norm.L1:
        steps = [tuple(int(a == b) for b in range(d)) for a in range(d)]
        steps = steps + [tuple(-s for s in st) for st in steps]
    else:
        import itertools

        steps = [s for s in itertools.product((-1, 0, 1), repeat=d) if any(s)]
    flat = np.array([int(np.dot(s, strides)) for s in steps], dtype=np.int64)
    forward = np.sort(flat[flat < 0])
    backward = np.sort(flat[flat > 0])
    D = _chamfer(padded.ravel().copy(), interior.ravel(), forward, backward)
    return D.reshape(padded.shape)[tuple(slice(1, -1) for _ in range(d))].copy()


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distance from every cell center to the nearest positive cell center.

    ``cells`` holds the exact integer-valued metric in cell units (squared
    for l2), ``distances`` the same in feature-space units.
    """

    grid: LabelGrid
    norm: Norm
    cells: np.ndarray

    @property
    def distances(self) -> np.ndarray:
        if self.norm is Norm.L2:
            return np.sqrt(self.cells) * self.grid.cell_size
        return self.cells * self.grid.cell_size

    def within(self, alpha: float) -> np.ndarray:
        """Cells whose nearest positive cell center lies at cost <= ``alpha``."""
        r = alpha / self.grid.cell_size
        if self.norm is Norm.L2:
            return self.cells <= r * r + 1e-9
        return self.cells <= r + 1e-9

    def at(self, X) -> np.ndarray:
        """Distance of the cell containing each point (points clipped to the grid)."""
        idx = self.grid.index_of(X, clip=True)
        return self.distances[tuple(idx.T)]


def distance_field(grid: LabelGrid, cost: CostModel | Norm = Norm.L2, *, target: bool = True) -> DistanceField:
    """Exact nearest-positive distance transform of ``grid``.

    ``target=False`` measures the distance to the negative cells instead.
    """
    norm = cost.norm if isinstance(cost, CostModel) else Norm.parse(cost)
    mask = grid.labels if target else ~grid.labels
    if mask.size == 0:
        raise ValueError("empty grid")
    if norm is Norm.L2:
        cells = _sq_edt_cells(mask)
    else:
        cells = _chamfer_cells(mask, norm)
    return DistanceField(grid, norm, cells)


# ---------------------------------------------------------------------------
# effective grids


def _pad_cells(alpha: float, cell_size: float) -> int:
    return int(math.ceil(alpha / cell_size - 1e-9))


def effective_of_grid(grid: LabelGrid, cost: CostModel) -> LabelGrid:
    """Effective labels on the same raster; cells outside ``grid`` count as negative."""
    if not grid.labels.any():
        warnings.warn("no positive cell in the grid", EmptyPositiveRegionWarning, stacklevel=2)
        return grid.with_labels(np.zeros(grid.shape, dtype=bool))
    return grid.with_labels(distance_field(grid, cost).within(cost.alpha))


def effective_grid(h: Classifier, box, cell_size: float, cost: CostModel) -> LabelGrid:
    """Rasterized effective classifier of ``h`` over ``box``.

    ``h`` is rasterized on the box padded by ``alpha`` (whole cells) on all
    sides so positives just outside the box still pull cells inside it.
    """
    if cost.alpha < 2 * cell_size - 1e-12:
        raise ValueError(f"alpha={cost.alpha} is below two cells ({cell_size}); refine the grid")
    origin, shape = grid_for_box(box, cell_size)
    if len(shape) != h.dim:
        raise ValueError("box dimension does not match the classifier")
    if isinstance(h, GridSampled):
        raise TypeError("use effective_of_grid for grid-sampled classifiers")
    pad = _pad_cells(cost.alpha, cell_size)
    big = LabelGrid(origin - pad * cell_size, cell_size, np.zeros(tuple(s + 2 * pad for s in shape), dtype=bool))
    raster = big.with_labels(h.score(big.centers()) >= 0)
    if not raster.labels.any():
        warnings.warn("classifier has no positive cell near the box", EmptyPositiveRegionWarning, stacklevel=2)
        return LabelGrid(origin, cell_size, np.zeros(shape, dtype=bool))
    eff = distance_field(raster, cost).within(cost.alpha)
    inner = tuple(slice(pad, pad + s) for s in shape)
    return LabelGrid(origin, cell_size, eff[inner])


# ---------------------------------------------------------------------------
# point-level responses


def best_response_linear(h: Linear, x, cost: CostModel) -> BestResponseResult:
    """Closed-form conditional projection for a linear rule under l2 cost."""
    if cost.norm is not Norm.L2:
        raise ValueError("the projection form holds for l2 cost only; use best_response_generic")
    x = np.asarray(x, dtype=float).reshape(-1)
    s = float(h.score(x[None, :])[0])
    if s >= 0:
        return BestResponseResult(0, x.copy(), 0.0)
    w = h.w
    proj = x - (s / float(w @ w)) * w
    c = abs(s) / float(np.linalg.norm(w))
    if c <= cost.alpha + 1e-12:
        return BestResponseResult(1, proj, c)
    return BestResponseResult(0, x.copy(), 0.0)


def _check_resolution(cost: CostModel, resolution: float) -> None:
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if resolution > cost.alpha / 2 + 1e-12:
        raise ValueError(f"resolution {resolution} is coarser than alpha/2; the ball would be undersampled")


def unit_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in ``R^dim`` (l2)."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        i = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * i / count)
        theta = np.pi * (1 + 5**0.5) * i
        return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    raise ValueError("ball sampling supports d <= 3")


def ball_directions(dim: int, norm: Norm, radius: float, resolution: float) -> np.ndarray:
    """Directions with unit cost: ``x + s * v`` costs exactly ``s``.

    Neighboring directions end at most about ``resolution`` apart on the
    sphere of the given radius.
    """
    if dim == 2:
        count = max(16, int(math.ceil(2 * np.pi * radius / resolution)))
    elif dim == 3:
        count = max(64, int(math.ceil(4 * np.pi * (radius / resolution) ** 2)))
    else:
        count = 2
    U = unit_directions(dim, count)
    return U / norm(U)[:, None]


def sphere_points(x, cost: CostModel, resolution: float, radius: float | None = None) -> np.ndarray:
    """Samples of the cost sphere ``S_radius(x)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    r = cost.alpha if radius is None else radius
    return x + r * ball_directions(x.size, cost.norm, r, resolution)


def _ray_scan(h: Classifier, x: np.ndarray, norm: Norm, radius: float, resolution: float):
    """First positive cost along every ray of the ball, refined by bisection.

    Returns ``(costs, targets)`` for rays that meet the positive region,
    sorted by cost and then lexicographically by target.
    """
    V = ball_directions(x.size, norm, radius, resolution)
    steps = np.linspace(0.0, radius, int(math.ceil(radius / resolution)) + 1)
    P = x[None, None, :] + steps[None, :, None] * V[:, None, :]
    pos = (h.score(P.reshape(-1, x.size)) >= 0).reshape(len(V), len(steps))
    hit = pos.any(axis=1)
    if not hit.any():
        return np.empty(0), np.empty((0, x.size))
    V = V[hit]
    first = pos[hit].argmax(axis=1)
    hi = steps[first]
    lo = np.where(first > 0, steps[np.maximum(first - 1, 0)], 0.0)
    refine = first > 0
    for _ in range(40):
        if not refine.any():
            break
        mid = 0.5 * (lo + hi)
        ok = h.score(x + mid[:, None] * V) >= 0
        hi = np.where(refine & ok, mid, hi)
        lo = np.where(refine & ~ok, mid, lo)
    targets = x + hi[:, None] * V
    costs = norm(targets - x)
    order = np.lexsort((*targets.T[::-1], np.round(costs, 12)))
    return costs[order], targets[order]


def _exact_effective(h: Classifier, X: np.ndarray, cost: CostModel) -> np.ndarray | None:
    if isinstance(h, Linear):
        slack = cost.alpha * float(cost.norm.dual(h.w))
        return h.score(X) + slack >= -1e-12
    if isinstance(h, BallUnion) and h.norm is cost.norm:
        gap = h.depth(X)
        if h.positive_inside:
            return gap.min(axis=1) <= cost.alpha + 1e-12
        if h.pairwise_disjoint():
            deep = gap < -cost.alpha - 1e-12
            return ~deep.any(axis=1)
    return None


def effective_labels(h: Classifier, X, cost: CostModel, resolution: float) -> np.ndarray:
    """Vectorized ``effective_label`` over the rows of ``X``."""
    _check_resolution(cost, resolution)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != h.dim:
        raise ValueError(f"dimension mismatch: classifier has d={h.dim}, points have d={X.shape[1]}")
    exact = _exact_effective(h, X, cost)
    if exact is not None:
        return exact.astype(np.int8)
    out = np.empty(len(X), dtype=np.int8)
    V = ball_directions(h.dim, cost.norm, cost.alpha, resolution)
    steps = np.linspace(0.0, cost.alpha, int(math.ceil(cost.alpha / resolution)) + 1)
    offsets = (steps[None, :, None] * V[:, None, :]).reshape(-1, h.dim)
    for i, x in enumerate(X):
        out[i] = bool((h.score(x + offsets) >= 0).any())
    return out


def effective_label(h: Classifier, x, cost: CostModel, resolution: float) -> int:
    """1 iff some ``x'`` with ``c(x, x') <= alpha`` has ``h(x') = 1``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return int(effective_labels(h, x, cost, resolution)[0])


def best_response_generic(h: Classifier, x, cost: CostModel, resolution: float) -> BestResponseResult:
    """Minimum-cost positive point in the ball (ties: lowest cost, then lexicographic)."""
    _check_resolution(cost, resolution)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != h.dim:
        raise ValueError(f"dimension mismatch: classifier has d={h.dim}, point has d={x.size}")
    if h.predict(x):
        return BestResponseResult(0, x.copy(), 0.0)
    costs, targets = _ray_scan(h, x, cost.norm, cost.alpha, resolution)
    if costs.size == 0 or costs[0] > cost.alpha + 1e-12:
        return BestResponseResult(0, x.copy(), 0.0)
    return BestResponseResult(1, targets[0], float(costs[0]))


def cost_to_positive(h: Classifier, x, norm: Norm | CostModel, max_cost: float, resolution: float) -> float:
    """Minimum cost for ``x`` to reach ``h``'s positive region (inf beyond ``max_cost``)."""
    norm = norm.norm if isinstance(norm, CostModel) else Norm.parse(norm)
    x = np.asarray(x, dtype=float).reshape(-1)
    s = float(h.score(x[None, :])[0])
    if s >= 0:
        return 0.0
    if isinstance(h, Linear):
        c = -s / float(norm.dual(h.w))
    elif isinstance(h, BallUnion) and h.positive_inside and h.norm is norm:
        c = float(h.depth(x[None, :]).min())
    else:
        costs, _ = _ray_scan(h, x, norm, max_cost, resolution)
        c = float(costs[0]) if costs.size else INF
    return c if c <= max_cost + 1e-12 else INF
