"""Expressivity and approximation experiments at desk scale.

Expressivity: sample a verified full-degree polynomial, rasterize its
effective classifier, and find the lowest polynomial degree that fits the
effective boundary.  Approximation: best linear versus best strategic
accuracy on two-class Gaussian data.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .accuracy import max_linear_accuracy, max_strategic_accuracy
from .boundary import BoundarySet, extract_boundary
from .core import CostModel, LabelGrid, Norm, Polynomial, make_gaussian_dataset, monomial_count, monomial_features, rasterize, rng_for
from .response import effective_grid

log = logging.getLogger(__name__)

FULL_DEGREE_ACCURACY = 0.98
LOW_DEGREE_ACCURACY = 0.9
MAX_ATTEMPTS = 20
DEFAULT_BOX = ((-100.0, 100.0), (-100.0, 100.0))


class DegreeGateError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExpressivityRow:
    k: int
    alpha: float
    k_delta: int
    instance_seed: int


@dataclass(frozen=True)
class ApproximationRow:
    mu: float
    alpha: float
    max_linear: float
    max_strategic: float
    seed: int


@dataclass(frozen=True)
class EffectiveDegree:
    degree: int
    overflow: bool
    accuracies: dict = field(default_factory=dict)


def instance_seed(seed: int, *key: int) -> int:
    """A 31-bit seed derived from ``(seed, key...)``."""
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(state.generate_state(1)[0] & 0x7FFFFFFF)


# ---------------------------------------------------------------------------
# polynomial fitting


def _box_scale(box) -> float:
    return float(max(abs(v) for pair in box for v in pair)) or 1.0


def fit_polynomial(X: np.ndarray, targets: np.ndarray, degree: int, scale: float, ridge: float = 1e-8) -> np.ndarray:
    """Ridge least squares on monomials of ``X / scale``; returns coefficients."""
    F = monomial_features(np.asarray(X, dtype=float) / scale, degree)
    A = F.T @ F
    A[np.diag_indices_from(A)] += ridge * max(1.0, float(np.trace(A)) / len(A))
    return np.linalg.solve(A, F.T @ targets)


def fit_separator(X, labels: np.ndarray, degree: int, scale: float, ridge: float = 1e-10, iterations: int = 50) -> np.ndarray:
    """Squared-hinge SVM on monomials of ``X / scale`` by active-set Newton steps.

    Each step is a ridge least-squares solve on the points violating the
    unit margin; it stops when the active set repeats.
    """
    F = monomial_features(np.asarray(X, dtype=float) / scale, degree)
    y = np.where(labels.astype(bool), 1.0, -1.0)
    reg = ridge * len(F) * np.eye(F.shape[1])
    reg[0, 0] = 0.0  # leave the constant term free
    active = np.ones(len(F), dtype=bool)
    coef = np.zeros(F.shape[1])
    for _ in range(iterations):
        Fa = F[active]
        coef = np.linalg.lstsq(Fa.T @ Fa + reg, Fa.T @ y[active], rcond=None)[0]
        nxt = y * (F @ coef) < 1
        if np.array_equal(nxt, active) or not nxt.any():
            break
        active = nxt
    return coef


def _fit_accuracy(X, labels: np.ndarray, degree: int, scale: float) -> float:
    """Accuracy of the best degree-``degree`` separator, degree 0 meaning a constant."""
    y = labels.astype(bool)
    if degree == 0:
        return float(max(y.mean(), 1 - y.mean()))
    coef = fit_separator(X, y, degree, scale)
    pred = monomial_features(np.asarray(X) / scale, degree) @ coef >= 0
    return float((pred == y).mean())


def verification_grid(box, count: int = 200) -> np.ndarray:
    axes = [np.linspace(lo, hi, count) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_polynomial(k: int, seed: int, box=DEFAULT_BOX, verify_count: int = 200) -> Polynomial:
    """Random degree-``k`` separator through ``C(k+2, 2)`` random labeled anchors.

    The fit must reach ``FULL_DEGREE_ACCURACY`` on a verification grid while
    the best degree ``k - 1`` fit stays at or below ``LOW_DEGREE_ACCURACY``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scale = _box_scale(box)
    n = monomial_count(2, k)
    G = verification_grid(box, verify_count)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    for attempt in range(MAX_ATTEMPTS):
        rng = rng_for(seed, k, attempt)
        anchors = rng.uniform(lo, hi, size=(n, 2))
        signs = rng.choice([-1.0, 1.0], size=n)
        if abs(signs.sum()) == n:
            signs[0] = -signs[0]
        h = Polynomial(2, k, fit_polynomial(anchors, signs, k, scale), scale)
        Y = h.score(G) >= 0
        if Y.all() or not Y.any():
            continue
        full = _fit_accuracy(G, Y, k, scale)
        low = _fit_accuracy(G, Y, k - 1, scale)
        if full >= FULL_DEGREE_ACCURACY and low <= LOW_DEGREE_ACCURACY:
            return h
    raise DegreeGateError(f"no verified degree-{k} polynomial after {MAX_ATTEMPTS} attempts (seed {seed})")


def subsample(grid: LabelGrid, stride: int) -> LabelGrid:
    """Every ``stride``-th cell, with the coarse centers on the sampled fine centers."""
    if stride <= 1:
        return grid
    sl = tuple(slice(0, None, stride) for _ in range(grid.dim))
    origin = grid.origin + 0.5 * grid.cell_size * (1 - stride)
    return LabelGrid(origin, grid.cell_size * stride, grid.labels[sl])


def fit_stride(box, cell: float, count: int) -> int:
    """Stride that brings a ``cell`` raster of ``box`` down to about ``count`` samples per axis."""
    width = max(hi - lo for lo, hi in box)
    return max(1, int(round(width / count / cell)))


def fit_effective_degree(boundary: BoundarySet, grid: LabelGrid, tolerance: float = 0.9, k_max: int = 10) -> EffectiveDegree:
    """Lowest degree whose separator fit on the boundary cells reaches ``tolerance``.

    The fit uses the same squared-hinge separator as the sampling gate,
    trained and scored on the boundary cells with their effective labels.
    """
    if len(boundary) == 0:
        raise ValueError("boundary is empty")
    X, y = boundary.points, boundary.grid.labels[tuple(boundary.indices.T)]
    scale = float(np.abs(np.vstack([grid.origin, grid.upper])).max()) or 1.0
    accs = {}
    for k in range(1, k_max + 1):
        accs[k] = _fit_accuracy(X, y, k, scale)
        if accs[k] >= tolerance:
            return EffectiveDegree(k, False, accs)
    return EffectiveDegree(k_max, True, accs)


# ---------------------------------------------------------------------------
# runners


@dataclass(frozen=True)
class ExpressivityConfig:
    alphas: tuple[float, ...] = (2.0, 8.0, 24.0)
    ks: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    instances: int = 10
    box: tuple = DEFAULT_BOX
    cell: float = 0.5
    seed: int = 0
    tolerance: float = 0.9
    k_max: int = 10
    verify_count: int = 200

    def __post_init__(self):
        if self.cell > min(self.alphas) / 4 + 1e-12:
            raise ValueError(f"cell {self.cell} exceeds min(alphas)/4")


@dataclass(frozen=True)
class ApproximationConfig:
    alphas: tuple[float, ...] = (0.5, 1.0, 2.0)
    mus: tuple[float, ...] = (0.0, 1.0, 2.5, 5.0)
    instances: int = 10
    n_per_class: int = 25
    seed: int = 0
    grid_step: float | None = None


def _expressivity_job(args) -> ExpressivityRow | None:
    cfg, k, alpha, i = args
    # one polynomial per (k, instance), shared by every alpha
    s = instance_seed(cfg.seed, k, i)
    h = sample_polynomial(k, s, cfg.box, cfg.verify_count)
    fine = effective_grid(h, cfg.box, cfg.cell, CostModel(Norm.L2, alpha))
    # labels come from the fine raster, the degree fit uses the verification-grid density
    grid = subsample(fine, fit_stride(cfg.box, cfg.cell, cfg.verify_count))
    if grid.labels.all() or not grid.labels.any():
        log.warning("effective classifier is constant on the box (k=%d, alpha=%g, seed=%d)", k, alpha, s)
        return None
    fit = fit_effective_degree(extract_boundary(grid), grid, cfg.tolerance, cfg.k_max)
    if fit.overflow:
        log.warning("no degree <= %d passed (k=%d, alpha=%g, seed=%d)", cfg.k_max, k, alpha, s)
    return ExpressivityRow(k, float(alpha), fit.degree, s)


def _approximation_job(args) -> ApproximationRow:
    cfg, mu, alpha, i = args
    s = instance_seed(cfg.seed, int(round(mu * 1000)), i)
    data = make_gaussian_dataset(mu, cfg.n_per_class, s)
    lin = max_linear_accuracy(data)
    strat = max_strategic_accuracy(data, CostModel(Norm.L2, alpha), cfg.grid_step)
    if strat.accuracy < lin.accuracy:
        log.info("max_strategic < max_linear (mu=%g, alpha=%g, seed=%d)", mu, alpha, s)
    return ApproximationRow(float(mu), float(alpha), float(lin.accuracy), float(strat.accuracy), s)


def _run(job: Callable, tasks: list, threads: int) -> list:
    if threads <= 1:
        return [job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, tasks, chunksize=1))


def run_expressivity(config: ExpressivityConfig, threads: int = 1) -> list[ExpressivityRow]:
    tasks = [(config, k, a, i) for k in config.ks for a in config.alphas for i in range(config.instances)]
    return [r for r in _run(_expressivity_job, tasks, threads) if r is not None]


def run_approximation(config: ApproximationConfig, threads: int = 1) -> list[ApproximationRow]:
    tasks = [(config, mu, a, i) for mu in config.mus for a in config.alphas for i in range(config.instances)]
    return _run(_approximation_job, tasks, threads)


def _stats(values: list[float]) -> dict:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return {"mean": float(v.mean()), "stderr": se, "n": int(len(v))}


def aggregate(rows: Iterable, keys: tuple[str, ...], values: tuple[str, ...]) -> list[dict]:
    """Mean and standard error of ``values`` grouped by ``keys`` (sorted by key)."""
    groups: dict[tuple, list] = {}
    for r in rows:
        d = asdict(r)
        groups.setdefault(tuple(d[k] for k in keys), []).append(d)
    out = []
    for key in sorted(groups):
        entry = dict(zip(keys, key))
        for v in values:
            entry[v] = _stats([d[v] for d in groups[key]])
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# figures


def _contour_paths(grid: LabelGrid) -> list[np.ndarray]:
    import contourpy

    xs, ys = grid.axis_centers(0), grid.axis_centers(1)
    gen = contourpy.contour_generator(xs, ys, grid.labels.T.astype(float))
    return [np.asarray(p) for p in gen.lines(0.5)]


def svg_overlay(source: LabelGrid, effective: LabelGrid, size: int = 600) -> str:
    """Standalone SVG with the source boundary (black) and effective boundary (red)."""
    (x0, x1), (y0, y1) = source.box
    sx = size / (x1 - x0)

    def path(lines):
        parts = []
        for P in lines:
            pts = " L ".join(f"{(x - x0) * sx:.2f},{(y1 - y) * sx:.2f}" for x, y in P)
            parts.append(f"M {pts}")
        return " ".join(parts)

    height = (y1 - y0) * sx
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{height:.0f}" '
        f'viewBox="0 0 {size} {height:.0f}">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
        f'<path id="source" d="{path(_contour_paths(source))}" fill="none" stroke="black" stroke-width="1.5"/>\n'
        f'<path id="effective" d="{path(_contour_paths(effective))}" fill="none" stroke="red" stroke-width="1.5"/>\n'
        "</svg>\n"
    )


def expressivity_svg(k: int, alpha: float, seed: int, box=DEFAULT_BOX, cell: float = 0.5) -> str:
    h = sample_polynomial(k, seed, box)
    return svg_overlay(rasterize(h, box, cell), effective_grid(h, box, cell, CostModel(Norm.L2, alpha)))
