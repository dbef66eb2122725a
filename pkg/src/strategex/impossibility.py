"""Necessary conditions for a classifier ``g`` to be some ``h``'s effective classifier.

Every boundary point of an effective classifier is the image of a point
that paid exactly ``alpha``, so some point of the cost sphere around it is
unreachable from the negative region.  The detectors below test that
condition directly (on the whole sphere, or at the single point
``x + alpha n`` for smooth boundaries) and look for the four shapes that
violate it: positive regions smaller than an ``alpha`` ball, positive
strips thinner than ``2 alpha``, boundaries curving toward the positive side
faster than ``1/alpha``, and convex corners.

All distances are measured on a raster at the given resolution; a point
counts as reachable only if it is reachable with a slack of two cell
diagonals, so rasterization errors never produce an Impossible verdict on
a genuine effective classifier.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .boundary import BoundarySet, boundary_mask, center_side, extract_boundary, fit_circle, fit_line
from .core import Classifier, CostModel, GridSampled, LabelGrid, Norm, grid_for_box
from .response import distance_field, sphere_points

CORNER_ANGLE_DEG = 5.0
# circle-fit RMS (cells) below which a boundary point counts as smooth: looser for
# the shape detectors, stricter for the single-point test, which is blind to mild kinks
FIT_RMS_CELLS = 0.35
SMOOTH_RMS_CELLS = 0.25
CORNER_CIRCLE_RMS_CELLS = 0.6
# angular uncertainty of fitted normals near kinks, in degrees
NORMAL_FAN_DEG = 30.0


class Reason(str, enum.Enum):
    SMALL_POSITIVE_REGION = "SmallPositiveRegion"
    NARROW_POSITIVE_STRIP = "NarrowPositiveStrip"
    LARGE_POSITIVE_CURVATURE = "LargePositiveCurvature"
    CONVEX_PIECEWISE_LINEAR = "ConvexPiecewiseLinear"
    PROP2_REACHABILITY = "Prop2Reachability"
    PROP3_SMOOTH_REACHABILITY = "Prop3SmoothReachability"


@dataclass(frozen=True, eq=False)
class ImpossibilityReport:
    possible: bool
    reason: Reason | None = None
    witness: np.ndarray | None = None
    detail: str = ""

    def __post_init__(self):
        if not self.possible and (self.reason is None or self.witness is None):
            raise ValueError("Impossible verdicts need a reason and a witness point")

    @property
    def verdict(self) -> str:
        return "Possible" if self.possible else "Impossible"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "reason": None if self.reason is None else self.reason.value,
            "witness": None if self.witness is None else np.asarray(self.witness).tolist(),
            "detail": self.detail,
        }


POSSIBLE = ImpossibilityReport(True)


# ---------------------------------------------------------------------------
# shared raster analysis


@dataclass(frozen=True, eq=False)
class _Analysis:
    grid: LabelGrid
    inside: np.ndarray  # cells belonging to the analysis box
    negative_distance: np.ndarray  # distance from every cell center to the nearest negative cell center
    known: np.ndarray  # cells far enough from the raster edge for local fits
    deep: np.ndarray  # cells at least 2 alpha from the raster edge
    cost: CostModel
    slack: float
    window: float

    @property
    def cell(self) -> float:
        return self.grid.cell_size

    def distance_at(self, X: np.ndarray) -> np.ndarray:
        """Negative-region distance at points; +inf outside the raster (unknown counts as unreachable)."""
        X = np.atleast_2d(X)
        idx = np.floor((X - self.grid.origin) / self.cell).astype(np.int64)
        shape = np.asarray(self.grid.shape)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.full(len(X), np.inf)
        out[ok] = self.negative_distance[tuple(idx[ok].T)]
        return out

    def reachable(self, X: np.ndarray) -> np.ndarray:
        return self.distance_at(X) <= self.cost.alpha - self.slack


def _interior(shape, margin: int) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    out[tuple(slice(margin, max(margin, s - margin)) for s in shape)] = True
    return out


def _analyze(g: Classifier, box, cost: CostModel, resolution: float, window: float | None) -> _Analysis:
    window = cost.alpha if window is None else float(window)
    if isinstance(g, GridSampled):
        grid = g.grid
        if abs(grid.cell_size - resolution) > 1e-9 * resolution and resolution > 0:
            resolution = grid.cell_size
        inside = np.ones(grid.shape, dtype=bool)
        margin = int(math.ceil(window / grid.cell_size))
    else:
        if box is None:
            raise ValueError("an analysis box is required for analytic classifiers")
        if cost.alpha < 2 * resolution:
            raise ValueError("resolution must be at most alpha/2")
        origin, shape = grid_for_box(box, resolution)
        pad = int(math.ceil((2 * cost.alpha + window) / resolution))
        blank = LabelGrid(origin - pad * resolution, resolution, np.zeros(tuple(s + 2 * pad for s in shape), bool))
        grid = blank.with_labels(g.score(blank.centers()) >= 0)
        inside = np.zeros(grid.shape, dtype=bool)
        inside[tuple(slice(pad, pad + s) for s in shape)] = True
        margin = int(math.ceil(window / resolution))
    if grid.labels.all() or not grid.labels.any():
        raise ValueError("g has a single label in the analysis region")
    known = _interior(grid.shape, margin)
    deep = _interior(grid.shape, int(math.ceil(2 * cost.alpha / grid.cell_size)))
    dneg = distance_field(grid, cost, target=False).distances
    slack = 2 * grid.cell_size * math.sqrt(grid.dim)
    return _Analysis(grid, inside, dneg, known, deep, cost, slack, window)


def _positive_boundary(an: _Analysis) -> np.ndarray:
    """Indices of positive cells with a negative axis neighbor, inside the box."""
    mask = boundary_mask(an.grid.labels) & an.grid.labels & an.inside
    return np.argwhere(mask)


def _boundary(an: _Analysis, cleaned: bool = False) -> tuple[BoundarySet, np.ndarray]:
    grid = an.grid
    if cleaned:
        # negative slivers under three cells wide (ridges of the distance
        # field) carry no usable shape information
        full = np.ones((3,) * grid.dim, dtype=bool)
        grid = grid.with_labels(~ndimage.binary_opening(~grid.labels, structure=full, border_value=1))
    b = extract_boundary(grid)
    sel = an.inside[tuple(b.indices.T)] & an.known[tuple(b.indices.T)]
    return b, np.flatnonzero(sel)


def _local_fits(b: BoundarySet, i: int, window: float, cell: float):
    """Line and circle fits around boundary point ``i``.

    Returns ``(points, kappa, circle_rms, line_rms, foot, normal)`` where
    ``foot`` is the point projected onto the preferred model and ``normal``
    that model's unit normal oriented toward the positive side.
    """
    x = b.refined[i]
    near = np.sort(b.tree().query_ball_point(x, window))
    P = b.refined[near]
    if len(P) < 5:
        return None
    c0, direction, line_rms = fit_line(P)
    center, radius, circle_rms = fit_circle(P)
    if line_rms - circle_rms < 0.1 * cell:
        kappa = 0.0
        normal = np.array([-direction[1], direction[0]])
        foot = c0 + ((x - c0) @ direction) * direction
        if normal @ b.normals[i] < 0:
            normal = -normal
    else:
        if radius < 2 * cell:
            return None
        radial = x - center
        foot = center + radius * radial / np.linalg.norm(radial)
        side = center_side(b.grid, center, foot, b.normals[i])
        normal = side * (center - foot) / radius
        kappa = side / radius
    return P, kappa, circle_rms, line_rms, foot, normal


# ---------------------------------------------------------------------------
# general reachability tests


def check_prop2(g: Classifier, box, cost: CostModel, resolution: float, *, _an: _Analysis | None = None) -> ImpossibilityReport:
    """Impossible if, for some positive boundary point, the whole cost sphere is reachable from the negatives."""
    an = _an or _analyze(g, box, cost, resolution, None)
    idx = _positive_boundary(an)
    V = sphere_points(np.zeros(an.grid.dim), cost, an.cell) if an.grid.dim > 1 else np.array([[-cost.alpha], [cost.alpha]])
    X = an.grid.origin + (idx + 0.5) * an.cell
    for start in range(0, len(X), 256):
        chunk = X[start : start + 256]
        covered = an.reachable((chunk[:, None, :] + V[None, :, :]).reshape(-1, an.grid.dim)).reshape(len(chunk), -1)
        full = np.flatnonzero(covered.all(axis=1))
        if full.size:
            x = chunk[full[0]]
            return ImpossibilityReport(False, Reason.PROP2_REACHABILITY, x, "every point of the cost sphere is reachable")
    return POSSIBLE


def check_prop3(
    g: Classifier, box, cost: CostModel, resolution: float, *, window: float | None = None, _an: _Analysis | None = None
) -> ImpossibilityReport:
    """Impossible if, at a smooth boundary point, ``x + alpha n`` is reachable from the negatives."""
    an = _an or _analyze(g, box, cost, resolution, window)
    if an.grid.dim != 2:
        raise ValueError("the smooth-point test needs a 2-d boundary")
    if cost.norm is not Norm.L2:
        raise ValueError("the smooth-point test moves along the normal, which is the best response only for l2 cost")
    b, sel = _boundary(an)
    # cheap screen with raster normals; a raster normal is off by at most ~20 degrees
    rough = b.refined + cost.alpha * b.normals / cost.norm(b.normals)[:, None]
    screen = an.distance_at(rough) <= cost.alpha
    for i in sel[screen[sel]]:
        fits = _local_fits(b, i, an.window, an.cell)
        if fits is None or fits[2] > SMOOTH_RMS_CELLS * an.cell:
            continue
        foot, normal = fits[4], fits[5]
        # fire only if the whole fan of plausible normals is reachable
        fan = np.radians(np.arange(-NORMAL_FAN_DEG, NORMAL_FAN_DEG + 1e-9, 4.0))
        rot = np.stack([np.cos(fan) * normal[0] - np.sin(fan) * normal[1], np.sin(fan) * normal[0] + np.cos(fan) * normal[1]], 1)
        if an.reachable(foot + cost.alpha * rot).all():
            return ImpossibilityReport(False, Reason.PROP3_SMOOTH_REACHABILITY, foot, "x + alpha n is reachable")
    return POSSIBLE


# ---------------------------------------------------------------------------
# the four shapes


def min_enclosing_radius(P: np.ndarray, norm: Norm) -> tuple[np.ndarray, float]:
    """Center and radius of the smallest ``norm`` ball containing the points."""
    P = np.asarray(P, dtype=float)
    if norm is Norm.LINF:
        lo, hi = P.min(axis=0), P.max(axis=0)
        return (lo + hi) / 2, float((hi - lo).max() / 2)
    if norm is Norm.L1:
        from scipy.optimize import linprog

        P = _hull_vertices(P)
        n, d = P.shape
        # variables: center (d), radius, per-point per-axis absolute values (n*d)
        nv = d + 1 + n * d
        c = np.zeros(nv)
        c[d] = 1.0
        A, rhs = [], []
        for i in range(n):
            for j in range(d):
                t = d + 1 + i * d + j
                for sgn in (1.0, -1.0):  # |p_ij - c_j| <= t
                    row = np.zeros(nv)
                    row[j] = -sgn
                    row[t] = -1.0
                    A.append(row)
                    rhs.append(-sgn * P[i, j])
            row = np.zeros(nv)
            row[d + 1 + i * d : d + 1 + (i + 1) * d] = 1.0
            row[d] = -1.0
            A.append(row)
            rhs.append(0.0)
        bounds = [(None, None)] * d + [(0, None)] * (1 + n * d)
        res = linprog(c, A_ub=np.array(A), b_ub=np.array(rhs), bounds=bounds, method="highs")
        return res.x[:d], float(res.x[d])
    return _welzl(P)


def _hull_vertices(P: np.ndarray) -> np.ndarray:
    """Convex hull vertices; a convex ball contains ``P`` iff it contains them."""
    from scipy.spatial import ConvexHull, QhullError

    if len(P) <= P.shape[1] + 1:
        return P
    if P.shape[1] == 1:
        return np.array([P.min(axis=0), P.max(axis=0)])
    try:
        return P[ConvexHull(P).vertices]
    except QhullError:
        # flat point sets have no full-dimensional hull; keep them all
        return np.unique(P, axis=0)


def _circle_from(R: list[np.ndarray]) -> tuple[np.ndarray, float]:
    if not R:
        return np.zeros(0), -1.0
    if len(R) == 1:
        return R[0].copy(), 0.0
    if len(R) == 2:
        c = (R[0] + R[1]) / 2
        return c, float(np.linalg.norm(R[0] - c))
    # circumsphere of affinely independent points through the Gram system
    A = np.array([r - R[0] for r in R[1:]])
    rhs = 0.5 * (A * A).sum(axis=1)
    coef, *_ = np.linalg.lstsq(A @ A.T, rhs, rcond=None)
    c = R[0] + coef @ A
    return c, float(np.linalg.norm(R[0] - c))


def _welzl(P: np.ndarray) -> tuple[np.ndarray, float]:
    """Smallest enclosing Euclidean ball (iterative move-to-front Welzl)."""
    d = P.shape[1]
    pts = [p for p in P[np.random.default_rng(0).permutation(len(P))]]
    eps = 1e-10

    def inside(c, r, p):
        return r >= 0 and np.linalg.norm(p - c) <= r + eps

    def solve(points, boundary):
        c, r = _circle_from(boundary)
        if len(boundary) == d + 1:
            return c, r
        for i, p in enumerate(points):
            if not inside(c, r, p):
                c, r = solve(points[:i], boundary + [p])
        return c, r

    return solve(pts, [])


def _small_region(an: _Analysis) -> ImpossibilityReport | None:
    lab, n = ndimage.label(an.grid.labels)
    if n == 0:
        return None
    touching = set(np.unique(np.concatenate([np.take(lab, [0, -1], axis=a).ravel() for a in range(lab.ndim)])))
    for comp in range(1, n + 1):
        if comp in touching:
            continue
        cells = np.argwhere(lab == comp)
        if not an.inside[tuple(cells.T)].any():
            continue
        P = an.grid.origin + (cells + 0.5) * an.cell
        center, radius = min_enclosing_radius(P, an.cost.norm)
        if radius < an.cost.alpha - an.cell:
            return ImpossibilityReport(
                False,
                Reason.SMALL_POSITIVE_REGION,
                P[np.argmax(an.cost.norm(P - center))],
                f"component fits in a ball of radius {radius:.4g} < alpha",
            )
    return None


def _narrow_strip(an: _Analysis) -> ImpossibilityReport | None:
    """A positive component with no cell ``alpha`` away from the negatives.

    Only components reaching at least ``2 alpha`` into the raster are
    judged; a component seen only near the raster edge may continue
    outside it.
    """
    lab, n = ndimage.label(an.grid.labels)
    if n == 0:
        return None
    index = np.arange(1, n + 1)
    depth = ndimage.maximum(an.negative_distance, lab, index=index)
    seen = ndimage.maximum(an.deep & an.inside, lab, index=index)
    for comp, dmax, visible in zip(index, depth, seen):
        if not visible or dmax >= an.cost.alpha - an.slack:
            continue
        cells = np.argwhere((lab == comp) & an.deep & an.inside)
        i = cells[np.argmax(an.negative_distance[tuple(cells.T)])]
        return ImpossibilityReport(
            False, Reason.NARROW_POSITIVE_STRIP, an.grid.center_of(i), f"deepest cell is {dmax:.4g} from the negatives"
        )
    return None


def _large_curvature(an: _Analysis, b: BoundarySet, sel: np.ndarray) -> ImpossibilityReport | None:
    alpha = an.cost.alpha
    limit = (1.0 / alpha) * (1.0 + 3.0 * an.cell / alpha)
    for i in sel:
        fits = _local_fits(b, i, an.window, an.cell)
        if fits is None or fits[2] > FIT_RMS_CELLS * an.cell:
            continue
        if fits[1] > limit:
            return ImpossibilityReport(
                False, Reason.LARGE_POSITIVE_CURVATURE, b.refined[i], f"kappa={fits[1]:.4g} > 1/alpha"
            )
    return None


def _orient(grid: LabelGrid, at: np.ndarray, normal: np.ndarray) -> np.ndarray | None:
    """Flip ``normal`` to point into the positive side; None if the probes disagree."""
    step = 2 * grid.cell_size * normal
    idx = np.floor((np.stack([at + step, at - step]) - grid.origin) / grid.cell_size).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= np.asarray(grid.shape)):
        return None
    ahead, behind = grid.labels[tuple(idx.T)]
    if ahead == behind:
        return None
    return normal if ahead else -normal


def _corner(an: _Analysis, b: BoundarySet, sel: np.ndarray) -> ImpossibilityReport | None:
    cell = an.cell
    gap = 2 * cell
    for i in sel:
        x, n = b.refined[i], b.normals[i]
        near = np.sort(b.tree().query_ball_point(x, an.window))
        P = b.refined[near]
        t = np.array([-n[1], n[0]])
        s = (P - x) @ t
        left, right = P[s < -gap], P[s > gap]
        if len(left) < 5 or len(right) < 5:
            continue
        c1, d1, r1 = fit_line(left)
        c2, d2, r2 = fit_line(right)
        if max(r1, r2) > FIT_RMS_CELLS * cell:
            continue
        n1 = np.array([-d1[1], d1[0]])
        n2 = np.array([-d2[1], d2[0]])
        n1 = _orient(b.grid, c1, n1)
        n2 = _orient(b.grid, c2, n2)
        if n1 is None or n2 is None:
            continue
        angle = math.degrees(math.acos(float(np.clip(n1 @ n2, -1.0, 1.0))))
        # a smooth arc with curvature at most 1/alpha turns by at most
        # (arc length)/alpha between the two side centroids
        smooth_turn = math.degrees(1.2 * float(np.linalg.norm(c2 - c1)) / an.cost.alpha)
        if angle <= max(CORNER_ANGLE_DEG, smooth_turn):
            continue
        # convex toward positive: each side lies on the positive side of the other's line
        if (c2 - c1) @ n1 <= cell or (c1 - c2) @ n2 <= cell:
            continue
        middle = P[(np.abs(s) <= gap) & (np.abs((P - x) @ n) <= gap)]
        _, _, circle_rms = fit_circle(np.vstack([left, middle, right]))
        if circle_rms <= CORNER_CIRCLE_RMS_CELLS * cell:
            continue
        return ImpossibilityReport(
            False, Reason.CONVEX_PIECEWISE_LINEAR, x, f"convex corner of {180 - angle:.3g} degrees"
        )
    return None


def detect_type(
    g: Classifier, box, cost: CostModel, resolution: float, *, window: float | None = None, _an: _Analysis | None = None
) -> ImpossibilityReport:
    """Run the four shape detectors in order and return the first that fires.

    The region-size detectors work for every norm.  The curvature and
    corner detectors assume l2 cost (under l1/l-inf an effective boundary
    legitimately has straight sides and corners) and need d=2.
    """
    an = _an or _analyze(g, box, cost, resolution, window)
    for detector in (_small_region, _narrow_strip):
        found = detector(an)
        if found is not None:
            return found
    if an.grid.dim != 2 or cost.norm is not Norm.L2:
        return POSSIBLE
    b, sel = _boundary(an, cleaned=True)
    for detector in (_large_curvature, _corner):
        found = detector(an, b, sel)
        if found is not None:
            return found
    return POSSIBLE


def check_all(g: Classifier, box, cost: CostModel, resolution: float, *, window: float | None = None) -> ImpossibilityReport:
    """Shape detectors, then the general sphere test, then the smooth-point test."""
    an = _analyze(g, box, cost, resolution, window)
    report = detect_type(g, box, cost, resolution, window=window, _an=an)
    if not report.possible:
        return report
    report = check_prop2(g, box, cost, resolution, _an=an)
    if not report.possible or an.grid.dim != 2 or cost.norm is not Norm.L2:
        return report
    return check_prop3(g, box, cost, resolution, window=window, _an=an)
