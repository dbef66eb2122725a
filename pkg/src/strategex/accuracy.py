"""Strategic accuracy and exact maximization on small datasets.

An effective classifier's positive region is a union of cost balls of
radius ``alpha`` (one around every positive point of ``h``), and every such
union is realized by some ``h``.  Maximizing strategic accuracy over all
classifiers therefore means choosing ball centers: a positive is correct
iff some chosen ball covers it, a negative iff none does.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Classifier, CostModel, Dataset, Linear, Norm
from .response import effective_labels

MAX_STRATEGIC_POINTS = 60


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: Fraction
    correct: int
    total: int
    structure: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.total <= 0 or Fraction(self.correct, self.total) != self.accuracy:
            raise ValueError("accuracy must equal correct/total")

    def to_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "accuracy_exact": f"{self.accuracy.numerator}/{self.accuracy.denominator}",
            "correct": self.correct,
            "total": self.total,
            "optimal_structure": self.structure,
        }


def _result(correct: int, total: int, **structure) -> AccuracyResult:
    return AccuracyResult(Fraction(int(correct), int(total)), int(correct), int(total), structure)


def _check_data(data: Dataset) -> None:
    if len(data) == 0:
        raise ValueError("dataset is empty")


def standard_accuracy(h: Classifier, data: Dataset) -> AccuracyResult:
    _check_data(data)
    pred = h.predict_many(data.points)
    return _result(int((pred == data.labels).sum()), len(data))


def strategic_accuracy(h: Classifier, data: Dataset, cost: CostModel, resolution: float) -> AccuracyResult:
    """Fraction of points whose label matches the effective prediction."""
    _check_data(data)
    if data.dim != h.dim:
        raise ValueError(f"dimension mismatch: classifier has d={h.dim}, data has d={data.dim}")
    pred = effective_labels(h, data.points, cost, resolution)
    return _result(int((pred == data.labels).sum()), len(data))


# ---------------------------------------------------------------------------
# best halfplane


def _best_thresholds(S: np.ndarray, y: np.ndarray, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best ``s >= t`` split per row of projections ``S``.

    Returns ``(correct, split, sign)``: the best count, the number of points
    below the threshold in sorted order, and the orientation (``-1`` flips
    the projections).  Splits fall only between values more than ``tol`` apart.
    """
    best = np.full(len(S), -1)
    split = np.zeros(len(S), dtype=np.int64)
    sign = np.ones(len(S), dtype=np.int64)
    for sg in (1, -1):
        T = sg * S
        order = np.argsort(T, axis=1, kind="stable")
        ys = y[order]
        Ts = np.take_along_axis(T, order, axis=1)
        zero = np.zeros((len(S), 1), dtype=np.int64)
        neg_below = np.hstack([zero, np.cumsum(1 - ys, axis=1)])
        pos_above = np.hstack([np.cumsum(ys[:, ::-1], axis=1)[:, ::-1], zero])
        ok = neg_below + pos_above
        gap = np.hstack([np.ones((len(S), 1), bool), Ts[:, 1:] > Ts[:, :-1] + tol, np.ones((len(S), 1), bool)])
        ok = np.where(gap, ok, -1)
        k = ok.argmax(axis=1)
        val = ok[np.arange(len(S)), k]
        better = val > best
        best = np.where(better, val, best)
        split = np.where(better, k, split)
        sign = np.where(better, sg, sign)
    return best, split, sign


def max_linear_accuracy(data: Dataset) -> AccuracyResult:
    """Best standard accuracy over all halfspaces.

    The sorted order of the projections onto a normal ``w`` only changes
    where ``w`` is perpendicular to the difference of two data points, so
    one direction strictly inside each angular cell between consecutive
    critical directions, with every threshold and both orientations, covers
    every labeling a halfplane can produce.  Degenerate data (collinear or
    repeated points) needs no special handling.  The reported anchors are
    the pair whose critical direction opens the winning cell.  In 1-d all
    thresholds between sorted points are tried.
    """
    _check_data(data)
    n = len(data)
    y = data.labels.astype(np.int64)
    if data.dim == 1:
        x = data.points[:, 0]
        best, split, sign = _best_thresholds(x[None, :], y)
        xs = np.sort(sign[0] * x)
        k = int(split[0])
        lo = xs[k - 1] if k > 0 else xs[0] - 1.0
        hi = xs[k] if k < n else xs[-1] + 1.0
        return _result(int(best[0]), n, kind="threshold", threshold=float(sign[0] * (lo + hi) / 2), sign=int(sign[0]))
    if data.dim != 2:
        raise ValueError("max_linear_accuracy supports d <= 2")
    if n < 2:
        raise ValueError("need at least two points")
    P = data.points.astype(float)
    I, J = np.triu_indices(n, 1)
    D = P[J] - P[I]
    keep = np.abs(D).sum(axis=1) > 0
    crit = np.mod(np.arctan2(D[keep, 1], D[keep, 0]) + np.pi / 2, np.pi)
    pairs = np.stack([I[keep], J[keep]], axis=1)
    if crit.size == 0:
        crit, pairs = np.zeros(1), np.zeros((1, 2), dtype=np.int64)
    order = np.argsort(crit, kind="stable")
    crit, pairs = crit[order], pairs[order]
    # directions equal up to rounding form one critical direction
    first = np.flatnonzero(np.r_[True, np.diff(crit) > 1e-12])
    uniq = crit[first]
    nxt = np.r_[uniq[1:], uniq[0] + np.pi]
    mids = (uniq + nxt) / 2
    W = np.stack([np.cos(mids), np.sin(mids)], axis=1)
    scale = max(1.0, float(np.abs(P).max()))
    best, split, sign = _best_thresholds(W @ P.T, y, 1e-12 * scale)
    k = int(np.argmax(best))
    w = sign[k] * W[k]
    proj = np.sort(P @ w)
    s = int(split[k])
    lo = proj[s - 1] if s > 0 else proj[0] - 1.0
    hi = proj[s] if s < n else proj[-1] + 1.0
    return _result(
        int(best[k]),
        n,
        kind="halfplane",
        normal=[float(v) for v in w],
        threshold=float((lo + hi) / 2),
        anchors=[int(v) for v in pairs[first[k]]],
        orientation=int(sign[k]),
    )


# ---------------------------------------------------------------------------
# best effective classifier


def candidate_centers(points: np.ndarray, alpha: float, grid_step: float, norm: Norm = Norm.L2) -> np.ndarray:
    """Ball centers whose coverage sets include every achievable one.

    A grid of step ``grid_step`` over the data range padded by ``alpha``,
    the data points, and, for l2, points just around every intersection of
    two cost spheres; in 1-d the exact events ``p +- alpha`` with midpoints
    between consecutive events.
    """
    P = np.asarray(points, dtype=float)
    d = P.shape[1]
    lo, hi = P.min(axis=0) - alpha, P.max(axis=0) + alpha
    axes = [np.arange(l, h + grid_step / 2, grid_step) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    parts = [np.stack([m.ravel() for m in mesh], axis=1), P]
    eps = 1e-7 * alpha
    if d == 1:
        ev = np.unique(np.concatenate([P[:, 0] - alpha, P[:, 0] + alpha]))
        mids = (ev[1:] + ev[:-1]) / 2
        parts += [ev[:, None], mids[:, None], (ev - eps)[:, None], (ev + eps)[:, None]]
    elif d == 2 and norm is Norm.L2:
        verts = []
        for i, j in itertools.combinations(range(len(P)), 2):
            v = P[j] - P[i]
            dist = float(np.linalg.norm(v))
            if dist == 0 or dist > 2 * alpha + 1e-12:
                continue
            u = v / dist
            mid = P[i] + v / 2
            h = math.sqrt(max(alpha * alpha - dist * dist / 4, 0.0))
            perp = np.array([-u[1], u[0]])
            for s in (1.0, -1.0):
                x = mid + s * h * perp
                a1 = (x - P[i]) / alpha
                a2 = (x - P[j]) / alpha
                verts.append(x)
                for dv in (a1 + a2, a1 - a2, -(a1 + a2), a2 - a1, perp, -perp, u, -u):
                    nv = float(np.linalg.norm(dv))
                    if nv > 1e-12:
                        verts.append(x + eps * dv / nv)
        if verts:
            parts.append(np.array(verts))
    return np.vstack(parts)


def _coverage_masks(P: np.ndarray, centers: np.ndarray, alpha: float, norm: Norm) -> dict[int, np.ndarray]:
    """Distinct nonempty coverage sets as bitmasks, each with one center realizing it."""
    masks: dict[int, np.ndarray] = {}
    tol = 1e-9 * max(1.0, alpha)
    for start in range(0, len(centers), 4096):
        C = centers[start : start + 4096]
        inside = norm(C[:, None, :] - P[None, :, :]) <= alpha + tol
        weights = 1 << np.arange(len(P), dtype=object)
        for c, row in zip(C, inside):
            m = int(sum(weights[row])) if row.any() else 0
            if m and m not in masks:
                masks[m] = c
    return masks


def _bits(m: int) -> list[int]:
    out, i = [], 0
    while m:
        if m & 1:
            out.append(i)
        m >>= 1
        i += 1
    return out


@dataclass
class _Search:
    pos_mask: int
    neg_mask: int
    n_neg: int
    base: int
    cands: list[tuple[int, int]]  # (negatives, positives)
    by_negative: dict[int, list[int]]
    nodes: int = 0

    def positives(self, Z: int) -> int:
        covered = self.base
        for nu, pi in self.cands:
            if nu & ~Z == 0:
                covered |= pi
        return covered

    def value(self, Z: int, covered: int) -> int:
        return covered.bit_count() + self.n_neg - Z.bit_count()

    def bound(self, Z: int, covered: int) -> int:
        """Value plus, per still-forbidden negative, the net positives it can unlock."""
        extra = 0
        for q, ks in self.by_negative.items():
            if Z >> q & 1:
                continue
            unlock = 0
            for k in ks:
                unlock |= self.cands[k][1]
            gain = (unlock & ~covered).bit_count() - 1
            if gain > 0:
                extra += gain
        return self.value(Z, covered) + extra


def max_strategic_accuracy(data: Dataset, cost: CostModel, grid_step: float | None = None) -> AccuracyResult:
    """Exact-within-candidates best strategic accuracy over all classifiers.

    Coverage sets of the candidate balls are deduplicated; balls without
    negatives are always taken (their union is the base), balls dominated
    by another with fewer negatives and more positives are dropped.  The
    search walks allowed-mistake sets ``Z`` (unions of the negative parts
    of chosen balls) smallest first, adding one ball at a time that brings
    new positives, and stops once ``n - |Z|`` cannot beat the best found.
    """
    _check_data(data)
    n = len(data)
    if n > MAX_STRATEGIC_POINTS:
        raise ValueError(f"exact search is capped at {MAX_STRATEGIC_POINTS} points, got {n}")
    if data.dim > 2:
        raise ValueError("exact search supports d <= 2")
    alpha = cost.alpha
    grid_step = alpha / 10 if grid_step is None else float(grid_step)
    P = data.points.astype(float)
    y = data.labels.astype(bool)
    pos_mask = sum(1 << i for i in range(n) if y[i])
    neg_mask = sum(1 << i for i in range(n) if not y[i])
    masks = _coverage_masks(P, candidate_centers(P, alpha, grid_step, cost.norm), alpha, cost.norm)
    base = 0
    raw: dict[int, int] = {}
    for m in sorted(masks):
        nu, pi = m & neg_mask, m & pos_mask
        if nu == 0:
            base |= pi
        elif pi:
            raw[nu] = raw.get(nu, 0) | pi  # same negatives: merge positives
    cands = [(nu, pi) for nu, pi in raw.items() if pi & ~base]
    # dominance: fewer negatives and a superset of new positives
    kept = []
    for a, (nu, pi) in enumerate(cands):
        dom = False
        for b, (nu2, pi2) in enumerate(cands):
            if a != b and nu2 & ~nu == 0 and (pi & ~base) & ~pi2 == 0 and (nu2 != nu or pi2 != pi):
                dom = True
                break
        if not dom:
            kept.append((nu, pi))
    kept.sort(key=lambda c: (c[0].bit_count(), c[0], c[1]))
    by_neg: dict[int, list[int]] = {}
    for k, (nu, _) in enumerate(kept):
        for q in _bits(nu):
            by_neg.setdefault(q, []).append(k)
    S = _Search(pos_mask, neg_mask, n - int(y.sum()), base, kept, by_neg)

    best_Z, best_val = 0, S.value(0, base)
    heap = [(0, 0)]
    seen = {0}
    while heap:
        size, Z = heapq.heappop(heap)
        if n - size <= best_val:
            break
        S.nodes += 1
        covered = S.positives(Z)
        val = S.value(Z, covered)
        if val > best_val:
            best_Z, best_val = Z, val
        if S.bound(Z, covered) <= best_val:
            continue
        for nu, pi in kept:
            if nu & ~Z == 0 or pi & ~covered == 0:
                continue
            Z2 = Z | nu
            if Z2 in seen or n - Z2.bit_count() <= best_val:
                continue
            seen.add(Z2)
            heapq.heappush(heap, (Z2.bit_count(), Z2))
    covered = S.positives(best_Z)
    # a small set of balls realizing the optimum, picked greedily
    usable = [(m & pos_mask, m) for m in sorted(masks) if m & neg_mask & ~best_Z == 0 and m & pos_mask]
    centers, left = [], covered
    while left:
        pi, m = max(usable, key=lambda u: ((u[0] & left).bit_count(), -u[1]))
        centers.append([float(v) for v in masks[m]])
        left &= ~pi
    return _result(
        best_val,
        n,
        kind="ball-union",
        centers=centers,
        allowed_mistakes=_bits(best_Z),
        covered_positives=_bits(covered),
        candidate_sets=len(kept),
        nodes=S.nodes,
    )


# ---------------------------------------------------------------------------
# one dimension


def max_strategic_accuracy_1d(data: Dataset, alpha: float) -> AccuracyResult:
    """Exact best strategic accuracy on the line by dynamic programming.

    Covered points form runs of consecutive coordinates; a run is
    realizable iff the open gap between its uncovered neighbors is longer
    than ``2 alpha`` (room for an interval of length ``2 alpha`` that
    avoids both).  Equal coordinates are covered together.
    """
    _check_data(data)
    if data.dim != 1:
        raise ValueError("max_strategic_accuracy_1d needs 1-d data")
    x = data.points[:, 0]
    u, inv = np.unique(x, return_inverse=True)
    pos = np.bincount(inv, weights=data.labels.astype(float), minlength=len(u)).astype(int)
    cnt = np.bincount(inv, minlength=len(u))
    gain = pos - (cnt - pos)
    m = len(u)
    coord = np.concatenate([[-np.inf], u, [np.inf]])
    prefix = np.concatenate([[0], np.cumsum(gain)])
    best = np.full(m + 2, -(10**9), dtype=np.int64)
    back = np.zeros(m + 2, dtype=np.int64)
    best[0] = 0
    for i in range(1, m + 2):
        best[i], back[i] = best[i - 1], i - 1
        for j in range(i - 2, -1, -1):
            if coord[i] - coord[j] > 2 * alpha:
                val = best[j] + prefix[i - 1] - prefix[j]
                if val > best[i]:
                    best[i], back[i] = val, j
    runs, i = [], m + 1
    while i > 0:
        j = int(back[i])
        if j < i - 1:
            runs.append([float(u[j]), float(u[i - 2])])
        i = j
    n_neg = len(data) - int(data.labels.sum())
    return _result(n_neg + int(best[m + 1]), len(data), kind="intervals", covered_runs=runs[::-1])


def repeated_interval_accuracy(data: Dataset, alpha: float) -> AccuracyResult:
    """The periodic construction on integer lattice data, best over phases.

    Covered runs of ``L`` consecutive lattice points alternate with one
    uncovered point.  A run is realizable iff ``L + 1 > 2 alpha``; ``L`` is
    the smallest such odd length, so that on alternating labels a run can
    start and end on positives and every uncovered point is a negative.
    """
    _check_data(data)
    x = data.points[:, 0]
    if data.dim != 1 or not np.allclose(x, np.round(x)):
        raise ValueError("the construction is defined on integer lattice points")
    run = max(int(math.floor(2 * alpha)), 1)
    run += 1 - run % 2
    period = run + 1
    xi = np.round(x).astype(np.int64)
    best, phase_best = -1, 0
    for phase in range(period):
        covered = (xi - phase) % period != run
        ok = int((covered == data.labels.astype(bool)).sum())
        if ok > best:
            best, phase_best = ok, phase
    return _result(best, len(data), kind="repeated-intervals", run=run, period=period, phase=phase_best)


def lattice_bound(alpha: float) -> Fraction:
    """Upper bound ``1/2 + 1/floor(2 alpha + 1)`` on alternating lattices."""
    return Fraction(1, 2) + Fraction(1, int(math.floor(2 * alpha + 1)))


def all_negative_accuracy(data: Dataset) -> AccuracyResult:
    _check_data(data)
    return _result(len(data) - int(data.labels.sum()), len(data), kind="all-negative")


def three_point_dataset() -> Dataset:
    """Three points on the x-axis where strategic accuracy can beat standard accuracy."""
    return Dataset([[-1.0, 0.0], [1.0, 0.0], [3.0, 0.0]], [0, 0, 1])


def three_point_classifiers() -> tuple[Linear, Linear]:
    """The two linear rules ``sign(x1 + x2)`` and ``sign(x1 - x2)``."""
    return Linear([1.0, 1.0], 0.0), Linear([1.0, -1.0], 0.0)
