"""Decision boundaries on grids: normals, signed curvature and point mappings.

Signed curvature is positive where the boundary bends toward the positive
region (the fitted osculating circle's center lies on the positive side).
Under the best-response map a boundary point with curvature ``k`` becomes
one with curvature ``k / (1 + alpha k)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import Classifier, CostModel, LabelGrid, Norm, rasterize
from .response import ball_directions, best_response_generic, sphere_points

KINK = float("-inf")
# circle-fit window in cells; shorter arcs are dominated by raster staircase noise
DEFAULT_WINDOW_CELLS = 48


class WipedOut(ValueError):
    """Raised when a boundary point has curvature below ``-1/alpha``."""


class Case(str, enum.Enum):
    ONE_TO_ONE = "OneToOne"
    DIRECT_WIPEOUT = "DirectWipeout"
    INDIRECT_WIPEOUT = "IndirectWipeout"
    EXPANSION = "Expansion"
    COLLISION = "Collision"


@dataclass(frozen=True, eq=False)
class MappingCase:
    case: Case
    witness: np.ndarray | None = None

    def __post_init__(self):
        needs = self.case in (Case.EXPANSION, Case.COLLISION)
        has = self.witness is not None and len(self.witness) > 0
        if needs != has:
            raise ValueError(f"{self.case.value} {'requires' if needs else 'takes no'} witness points")


@dataclass(frozen=True, eq=False)
class CurvatureSample:
    point: np.ndarray
    kappa: float
    normal: np.ndarray
    circle_rms: float = 0.0
    line_rms: float = 0.0
    count: int = 0


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Boundary cells of a grid in row-major cell order.

    ``points`` are cell centers, ``refined`` the same cells moved onto the
    0.5 level set of a smoothed label field (sub-cell accurate), and
    ``normals`` unit vectors toward label 1.
    """

    grid: LabelGrid
    indices: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    refined: np.ndarray
    curvatures: np.ndarray | None = None
    components: np.ndarray | None = None
    _tree: object = field(default=None, init=False, repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def tree(self):
        if self._tree is None:
            from scipy.spatial import cKDTree

            object.__setattr__(self, "_tree", cKDTree(self.refined))
        return self._tree

    def nearest(self, at) -> int:
        return int(self.tree().query(np.asarray(at, dtype=float))[1])

    def neighborhood(self, k: int, window: float) -> np.ndarray:
        """Sorted indices within ``window`` of point ``k`` on the same boundary curve."""
        near = np.sort(self.tree().query_ball_point(self.refined[k], window))
        if self.components is not None:
            near = near[self.components[near] == self.components[k]]
        return near

    def to_rows(self) -> list[list]:
        kap = self.curvatures if self.curvatures is not None else np.full(len(self), np.nan)
        return [[*p, *n, k] for p, n, k in zip(self.points, self.normals, kap)]


# ---------------------------------------------------------------------------
# extraction


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Cells with at least one axis neighbor of the opposite label."""
    out = np.zeros(labels.shape, dtype=bool)
    for axis in range(labels.ndim):
        n = labels.shape[axis]
        if n < 2:
            continue
        lo = [slice(None)] * labels.ndim
        hi = [slice(None)] * labels.ndim
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        diff = labels[tuple(lo)] != labels[tuple(hi)]
        out[tuple(lo)] |= diff
        out[tuple(hi)] |= diff
    return out


def _unit_rows(V: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(V, axis=1)
    bad = n < 1e-12
    V = np.where(bad[:, None], fallback, V)
    n = np.where(bad, np.linalg.norm(fallback, axis=1), n)
    return V / n[:, None]


def _level_set_points(field_f: np.ndarray, p: np.ndarray, sigma: float = 2.0, iterations: int = 3) -> np.ndarray:
    """Move index-space points onto the 0.5 level set of a Gaussian-smoothed field."""
    smooth = ndimage.gaussian_filter(field_f, sigma=sigma, mode="nearest")
    grads = np.gradient(smooth) if field_f.ndim > 1 else [np.gradient(smooth)]
    start = p.copy()
    for _ in range(iterations):
        s = ndimage.map_coordinates(smooth, p.T, order=1, mode="nearest")
        g = np.stack([ndimage.map_coordinates(gk, p.T, order=1, mode="nearest") for gk in grads], axis=1)
        g2 = (g * g).sum(axis=1)
        ok = g2 > 1e-9
        p = p + np.where(ok[:, None], ((0.5 - s) / np.where(ok, g2, 1.0))[:, None] * g, 0.0)
        # never wander more than a cell from the source cell
        d = p - start
        length = np.linalg.norm(d, axis=1, keepdims=True)
        p = np.where(length > 1.0, start + d / np.maximum(length, 1e-12), p)
    return p


def extract_boundary(grid: LabelGrid) -> BoundarySet:
    labels = grid.labels
    if labels.all() or not labels.any():
        raise ValueError("grid has a single label; there is no boundary")
    mask = boundary_mask(labels)
    idx = np.argwhere(mask)
    field_f = labels.astype(float)
    box3 = ndimage.uniform_filter(field_f, size=3, mode="nearest")
    grads = np.stack(np.gradient(box3), axis=-1) if labels.ndim > 1 else np.gradient(box3)[..., None]
    G = grads[tuple(idx.T)]
    # degenerate stencils (checkerboards): point toward opposite-label axis neighbors
    fallback = np.zeros_like(G)
    own = labels[tuple(idx.T)]
    for axis in range(labels.ndim):
        for step in (-1, 1):
            nb = idx.copy()
            nb[:, axis] += step
            ok = (nb[:, axis] >= 0) & (nb[:, axis] < labels.shape[axis])
            lab = np.zeros(len(idx), dtype=bool)
            lab[ok] = labels[tuple(nb[ok].T)]
            flip = ok & (lab != own)
            fallback[flip, axis] += step * np.where(own[flip], -1.0, 1.0)
    fallback = np.where(np.linalg.norm(fallback, axis=1, keepdims=True) < 1e-12, np.eye(labels.ndim)[0], fallback)
    normals = _unit_rows(G, fallback)

    refined_idx = _level_set_points(field_f, idx.astype(float))
    centers = grid.origin + (idx + 0.5) * grid.cell_size
    refined = grid.origin + (refined_idx + 0.5) * grid.cell_size
    comp, _ = ndimage.label(mask, structure=np.ones((3,) * labels.ndim, dtype=bool))
    return BoundarySet(grid, idx, centers, normals, refined, components=comp[tuple(idx.T)])


# ---------------------------------------------------------------------------
# curvature


def fit_line(P: np.ndarray):
    """Total least-squares line; returns (centroid, direction, rms)."""
    c = P.mean(axis=0)
    _, s, vt = np.linalg.svd(P - c, full_matrices=False)
    rms = float(s[-1] / math.sqrt(len(P))) if len(s) == P.shape[1] else 0.0
    return c, vt[0], rms


def fit_circle(P: np.ndarray, iterations: int = 10):
    """Algebraic circle fit refined by Gauss-Newton on geometric residuals.

    Returns ``(center, radius, rms)``; flat point sets give a huge radius.
    """
    x, y = P[:, 0], P[:, 1]
    A = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(A, x * x + y * y, rcond=None)
    c = sol[:2]
    r = math.sqrt(max(sol[2] + c @ c, 1e-300))
    for _ in range(iterations):
        D = P - c
        dist = np.linalg.norm(D, axis=1)
        dist = np.maximum(dist, 1e-300)
        res = dist - r
        J = np.column_stack([-D / dist[:, None], -np.ones(len(P))])
        delta, *_ = np.linalg.lstsq(J, -res, rcond=None)
        if not np.all(np.isfinite(delta)):
            break
        c = c + delta[:2]
        r = r + delta[2]
        if np.abs(delta).max() < 1e-12 * max(1.0, abs(r)):
            break
    res = np.linalg.norm(P - c, axis=1) - abs(r)
    return c, abs(r), float(np.sqrt(np.mean(res**2)))


def center_side(grid: LabelGrid | None, center: np.ndarray, at: np.ndarray, normal: np.ndarray) -> float:
    """+1 if a fitted circle's center lies on the positive side of ``at``, else -1.

    Probes the grid label a short step from ``at`` toward the center, which
    stays right for features a few cells wide where stencil normals do not.
    """
    radial = center - at
    r = float(np.linalg.norm(radial))
    if grid is not None and center.size == grid.dim and r > 0:
        probe = at + min(0.5 * r, 2 * grid.cell_size) * radial / r
        idx = np.floor((probe - grid.origin) / grid.cell_size).astype(np.int64)
        if np.all(idx >= 0) and np.all(idx < np.asarray(grid.shape)):
            return 1.0 if grid.labels[tuple(idx)] else -1.0
    return 1.0 if float(radial @ normal) > 0 else -1.0


def _curvature_from_points(P: np.ndarray, at: np.ndarray, normal: np.ndarray, cell: float, grid=None):
    _, _, line_rms = fit_line(P)
    center, radius, circle_rms = fit_circle(P)
    if line_rms - circle_rms < 0.1 * cell or not np.isfinite(radius) or radius <= 0:
        return 0.0, circle_rms, line_rms
    return center_side(grid, center, at, normal) / radius, circle_rms, line_rms


def signed_curvature(boundary: BoundarySet, at, window: float | None = None) -> CurvatureSample:
    """Circle fit over refined boundary points within ``window`` of ``at``.

    ``window`` defaults to ``DEFAULT_WINDOW_CELLS`` cells.
    """
    cell = boundary.grid.cell_size
    if boundary.grid.dim != 2:
        raise ValueError("signed curvature is defined for d=2; use sectional_curvatures in 3-d")
    window = DEFAULT_WINDOW_CELLS * cell if window is None else float(window)
    if window < 3 * cell - 1e-12:
        raise ValueError("curvature window must span at least 3 cells")
    at = np.asarray(at, dtype=float).reshape(-1)
    k = boundary.nearest(at)
    near = boundary.neighborhood(k, window)
    if len(near) < 5:
        raise ValueError(f"only {len(near)} boundary points within the window; need 5")
    P = boundary.refined[near]
    normal = boundary.normals[k]
    kappa, crms, lrms = _curvature_from_points(P, boundary.refined[k], normal, cell, boundary.grid)
    return CurvatureSample(boundary.refined[k].copy(), kappa, normal.copy(), crms, lrms, len(P))


def annotate_curvature(boundary: BoundarySet, window: float | None = None) -> BoundarySet:
    """Copy of ``boundary`` with a curvature per point (nan where the fit is impossible)."""
    out = np.full(len(boundary), np.nan)
    for i, p in enumerate(boundary.refined):
        try:
            out[i] = signed_curvature(boundary, p, window).kappa
        except ValueError:
            pass
    return replace(boundary, curvatures=out)


def sectional_curvatures(boundary: BoundarySet, at, window: float | None = None, directions: int = 16) -> np.ndarray:
    """Planar-section curvatures of a 3-d boundary through the normal at ``at``.

    Each section is the plane spanned by the normal and one of
    ``directions`` tangent vectors; the boundary points within half a cell
    of the plane are fitted by a circle in that plane.  The sup of the
    directional curvature set is the max of the returned array.
    """
    if boundary.grid.dim != 3:
        raise ValueError("sectional curvatures need a 3-d boundary")
    cell = boundary.grid.cell_size
    window = DEFAULT_WINDOW_CELLS * cell if window is None else float(window)
    at = np.asarray(at, dtype=float)
    k = boundary.nearest(at)
    p0, n = boundary.refined[k], boundary.normals[k]
    helper = np.eye(3)[np.argmin(np.abs(n))]
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    near = boundary.neighborhood(k, window)
    Q = boundary.refined[near] - p0
    out = np.full(directions, np.nan)
    for j in range(directions):
        th = np.pi * j / directions
        t = math.cos(th) * t1 + math.sin(th) * t2
        off = np.cross(n, t)
        sel = np.abs(Q @ off) <= 0.5 * cell
        if sel.sum() < 5:
            continue
        P2 = np.column_stack([Q[sel] @ t, Q[sel] @ n])
        out[j] = _curvature_from_points(P2, np.zeros(2), np.array([0.0, 1.0]), cell)[0]
    return out


def effective_curvature(kappa: float, alpha: float) -> float:
    """Curvature of the image of a boundary point under the best-response map.

    Returns ``KINK`` (``-inf``) at ``kappa = -1/alpha`` and raises
    ``WipedOut`` below it.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    denom = 1.0 + alpha * kappa
    if abs(denom) <= 1e-12:
        return KINK
    if denom < 0:
        raise WipedOut(f"kappa={kappa} < -1/alpha={-1 / alpha}: the point leaves no trace")
    return kappa / denom


# ---------------------------------------------------------------------------
# point mappings


def _check_on_boundary(h: Classifier, x: np.ndarray, resolution: float) -> None:
    ring = x + resolution * ball_directions(x.size, Norm.L2, resolution, resolution / 8)
    labs = h.score(np.vstack([x[None, :], ring])) >= 0
    if labs.all() or not labs.any():
        raise ValueError("point is not on the decision boundary (no label change within one cell)")


def preimage_set(h: Classifier, x, cost: CostModel, resolution: float) -> np.ndarray:
    """Sphere points whose best response lands within one cell of ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_on_boundary(h, x, resolution)
    S = sphere_points(x, cost, resolution)
    S = S[h.score(S) < 0]
    keep = []
    for p in S:
        br = best_response_generic(h, p, cost, resolution)
        if br.moved and np.linalg.norm(br.target - x) <= resolution + 1e-9:
            keep.append(p)
    return np.array(keep).reshape(-1, x.size)


def _extent(P: np.ndarray) -> float:
    if len(P) < 2:
        return 0.0
    diff = P[:, None, :] - P[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def local_boundary(h: Classifier, x, half_width: float, resolution: float) -> BoundarySet:
    x = np.asarray(x, dtype=float).reshape(-1)
    box = [(c - half_width, c + half_width) for c in x]
    return extract_boundary(rasterize(h, box, resolution))


def snap_to_zero_set(h: Classifier, P: np.ndarray, normals: np.ndarray, resolution: float):
    """Move raster boundary points onto the zero set of ``h``'s score.

    Bisects along each raster normal within 1.5 cells; normals are then
    taken from the score gradient where it is defined, otherwise kept.
    """
    lo = P - 1.5 * resolution * normals
    hi = P + 1.5 * resolution * normals
    s_lo, s_hi = h.score(lo) >= 0, h.score(hi) >= 0
    ok = ~s_lo & s_hi
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        pos = h.score(mid) >= 0
        hi = np.where((ok & pos)[:, None], mid, hi)
        lo = np.where((ok & ~pos)[:, None], mid, lo)
    Q = np.where(ok[:, None], 0.5 * (lo + hi), P)
    eps = 1e-4 * resolution
    grad = np.stack(
        [(h.score(Q + eps * e) - h.score(Q - eps * e)) / (2 * eps) for e in np.eye(P.shape[1])], axis=1
    )
    norm = np.linalg.norm(grad, axis=1)
    good = ok & np.isfinite(norm) & (norm > 1e-9)
    N = np.where(good[:, None], grad / np.where(good, norm, 1.0)[:, None], normals)
    return Q, N


def classify_boundary_point(
    h: Classifier, x, cost: CostModel, resolution: float, window: float | None = None
) -> MappingCase:
    """Which of the five mapping cases applies to boundary point ``x``.

    Checked in order: direct wipeout (curvature below ``-1/alpha``),
    indirect wipeout (empty preimage), expansion (preimage arc wider than
    three cells), collision (at least three boundary points of ``h`` whose
    one-to-one images ``b - alpha n_b`` fall within a one-cell-wide ball
    around ``x``'s image while the sources spread over more than three
    cells), else one-to-one.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    alpha = cost.alpha
    half = 2 * alpha + 4 * resolution
    local = local_boundary(h, x, half, resolution)
    k = local.nearest(x)
    normal = local.normals[k]
    if x.size == 2:
        sample = signed_curvature(local, x, window)
        if sample.kappa < -1.0 / alpha:
            return MappingCase(Case.DIRECT_WIPEOUT)
    pre = preimage_set(h, x, cost, resolution)
    if len(pre) == 0:
        return MappingCase(Case.INDIRECT_WIPEOUT)
    if _extent(pre) > 3 * resolution:
        return MappingCase(Case.EXPANSION, pre)
    sources, src_normals = snap_to_zero_set(h, local.refined, local.normals, resolution)
    k = int(np.argmin(np.linalg.norm(sources - x, axis=1)))
    image = sources[k] - alpha * src_normals[k]
    images = sources - alpha * src_normals
    hits = np.linalg.norm(images - image, axis=1) <= 0.5 * resolution
    witness = sources[hits]
    if len(witness) >= 3 and _extent(witness) > 3 * resolution:
        return MappingCase(Case.COLLISION, witness)
    return MappingCase(Case.ONE_TO_ONE)


def count_components(grid: LabelGrid, label: int = 1) -> int:
    """Connected components of the cells carrying ``label`` (axis adjacency)."""
    mask = grid.labels if label else ~grid.labels
    _, n = ndimage.label(mask)
    return int(n)
