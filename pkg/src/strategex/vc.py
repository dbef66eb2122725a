"""Brute-force shattering and the canonical VC constructions.

All bounds are exhaustive over declared finite candidate universes, so
they are lower bounds on the VC dimension of the (possibly infinite)
class they sample; the universes travel with the results.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BallUnion,
    Classifier,
    CostModel,
    LabelGrid,
    Linear,
    Norm,
    Polarity,
    Polynomial,
    Polytope,
    ScoreFn,
    rng_for,
)
from .response import cost_to_positive, effective_grid, effective_labels

MAX_SHATTER_POINTS = 12


@dataclass(frozen=True, eq=False)
class FiniteClass:
    classifiers: tuple[Classifier, ...]
    name: str = "class"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        hs = tuple(self.classifiers)
        if not hs:
            raise ValueError("a finite class needs at least one classifier")
        dims = {h.dim for h in hs}
        if len(dims) != 1:
            raise ValueError(f"classifiers disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "classifiers", hs)

    @property
    def dim(self) -> int:
        return self.classifiers[0].dim

    def __len__(self) -> int:
        return len(self.classifiers)


@dataclass(frozen=True)
class ShatterResult:
    shattered: bool
    missing_pattern: tuple[int, ...] | None = None
    patterns: int = 0

    def __post_init__(self):
        if self.shattered != (self.missing_pattern is None):
            raise ValueError("missing_pattern must be set exactly when not shattered")


@dataclass(frozen=True)
class VCBound:
    bound: int
    witness: list
    sets_checked: int
    effective: bool


def constant_classifier(dim: int, label: int) -> ScoreFn:
    value = 1.0 if label else -1.0
    return ScoreFn(lambda X: np.full(len(X), value), dim, name=f"constant_{int(bool(label))}")


def label_matrix(H: FiniteClass, points, effective: bool, cost: CostModel | None, resolution: float | None) -> np.ndarray:
    """Labels of every classifier (rows) on every point (columns)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.size == 0:
        return np.zeros((len(H), 0), dtype=np.int8)
    if P.shape[1] != H.dim:
        raise ValueError(f"dimension mismatch: class has d={H.dim}, points have d={P.shape[1]}")
    if effective:
        if cost is None or resolution is None:
            raise ValueError("effective labels need a cost model and a resolution")
        return np.stack([effective_labels(h, P, cost, resolution) for h in H.classifiers])
    return np.stack([h.predict_many(P) for h in H.classifiers]).astype(np.int8)


def _shatter_columns(L: np.ndarray) -> ShatterResult:
    n = L.shape[1]
    if n > MAX_SHATTER_POINTS:
        raise ValueError(f"shattering is capped at {MAX_SHATTER_POINTS} points, got {n}")
    codes = set((L.astype(np.int64) << np.arange(n)).sum(axis=1).tolist()) if n else {0}
    if len(codes) == 1 << n:
        return ShatterResult(True, None, len(codes))
    missing = next(c for c in range(1 << n) if c not in codes)
    return ShatterResult(False, tuple((missing >> i) & 1 for i in range(n)), len(codes))


def shatters(
    H: FiniteClass, points, effective: bool = False, cost: CostModel | None = None, resolution: float | None = None
) -> ShatterResult:
    """Whether ``H`` (or its effective class) realizes all ``2^n`` patterns."""
    P = np.asarray(points, dtype=float).reshape(-1, H.dim) if len(points) else np.zeros((0, H.dim))
    if len(P) > MAX_SHATTER_POINTS:
        raise ValueError(f"shattering is capped at {MAX_SHATTER_POINTS} points, got {len(P)}")
    return _shatter_columns(label_matrix(H, P, effective, cost, resolution))


def vc_search(
    H: FiniteClass,
    candidate_sets,
    effective: bool = False,
    cost: CostModel | None = None,
    resolution: float | None = None,
) -> VCBound:
    """Largest shattered set among the candidates."""
    sets = [np.asarray(s, dtype=float).reshape(-1, H.dim) for s in candidate_sets]
    if any(len(s) > MAX_SHATTER_POINTS for s in sets):
        raise ValueError(f"shattering is capped at {MAX_SHATTER_POINTS} points")
    # label each distinct point once
    pts = np.unique(np.vstack(sets), axis=0) if sets and any(len(s) for s in sets) else np.zeros((0, H.dim))
    L = label_matrix(H, pts, effective, cost, resolution)
    lookup = {tuple(p): i for i, p in enumerate(pts.tolist())}
    best, witness = 0, []
    for s in sorted(sets, key=len, reverse=True):
        if len(s) <= best:
            break
        cols = [lookup[tuple(p)] for p in s.tolist()]
        if len(set(cols)) == len(cols) and _shatter_columns(L[:, cols]).shattered:
            best, witness = len(s), s.tolist()
    return VCBound(best, witness, len(sets), bool(effective))


def vc_lower_bound(
    H: FiniteClass, candidate_sets, effective: bool = False, cost: CostModel | None = None, resolution: float | None = None
) -> int:
    return vc_search(H, candidate_sets, effective, cost, resolution).bound


def exhaustive_vc(
    H: FiniteClass,
    universe,
    max_size: int,
    effective: bool = False,
    cost: CostModel | None = None,
    resolution: float | None = None,
) -> VCBound:
    """Largest shattered subset of ``universe`` with at most ``max_size`` points.

    Sizes are tried upward and the search stops at the first size with no
    shattered subset (subsets of shattered sets are shattered).
    """
    U = np.asarray(universe, dtype=float).reshape(-1, H.dim)
    if max_size > MAX_SHATTER_POINTS:
        raise ValueError(f"shattering is capped at {MAX_SHATTER_POINTS} points")
    L = label_matrix(H, U, effective, cost, resolution)
    best, witness, checked = 0, [], 0
    for k in range(1, min(max_size, len(U)) + 1):
        if len(H) < 1 << k:
            break
        found = None
        for cols in itertools.combinations(range(len(U)), k):
            checked += 1
            if _shatter_columns(L[:, list(cols)]).shattered:
                found = cols
                break
        if found is None:
            break
        best, witness = k, U[list(found)].tolist()
    return VCBound(best, witness, checked, bool(effective))


# ---------------------------------------------------------------------------
# scaling


def scaled(h: Classifier, a: float) -> Classifier:
    """The classifier ``x -> h(x / a)``, i.e. ``h`` with its geometry stretched by ``a``."""
    if not a > 0:
        raise ValueError("scale must be positive")
    if isinstance(h, Linear):
        return Linear(h.w, h.b * a)
    if isinstance(h, BallUnion):
        return BallUnion(h.centers * a, h.radii * a, h.polarity, h.norm)
    if isinstance(h, Polytope):
        return Polytope(h.vertices * a, h.polarity)
    if isinstance(h, Polynomial):
        return Polynomial(h.dim, h.degree, h.coefficients, h.scale * a)
    if isinstance(h, ScoreFn):
        return ScoreFn(lambda X, f=h.fn: f(np.asarray(X) / a), h.dim, name=f"{h.name}@{a:g}")
    raise ValueError(f"{type(h).__name__} has no scaled variant in its class")


def shattering_witnesses(H: FiniteClass, points) -> list[Classifier]:
    """One classifier per label pattern on ``points`` (standard labels)."""
    P = np.asarray(points, dtype=float).reshape(-1, H.dim)
    L = label_matrix(H, P, False, None, None)
    res = _shatter_columns(L)
    if not res.shattered:
        raise ValueError(f"points are not shattered; missing pattern {res.missing_pattern}")
    chosen: dict[tuple, Classifier] = {}
    for h, row in zip(H.classifiers, L):
        chosen.setdefault(tuple(row.tolist()), h)
    return [chosen[k] for k in sorted(chosen)]


def c_neg(G: list[Classifier], points, cost: CostModel, resolution: float, max_cost: float = 1e6) -> float:
    """Cheapest move of any negatively labeled witness point to positivity."""
    P = np.asarray(points, dtype=float).reshape(-1, G[0].dim)
    best = math.inf
    for h in G:
        for x in P:
            if not h.predict(x):
                best = min(best, cost_to_positive(h, x, cost.norm, max_cost, resolution))
    return best


def scaling_closure_check(H: FiniteClass, points, cost: CostModel, resolution: float, scale_grid) -> dict:
    """Scale a shattered set and its witnesses until no witness point moves.

    ``H`` stands for its closure under ``x -> h(x / a)``; classifiers without
    a scaled variant are rejected.  At ``a* = (alpha + 1) / c_neg`` every
    negatively labeled point needs cost at least ``alpha + 1`` to flip, so
    the effective labels on the scaled set equal the standard ones.
    """
    P = np.asarray(points, dtype=float).reshape(-1, H.dim)
    G = shattering_witnesses(H, P)
    for h in G:
        scaled(h, 1.0)
    cn = c_neg(G, P, cost, resolution)
    a_star = (cost.alpha + 1) / cn if cn > 0 else math.inf
    rows = []
    scales = sorted({float(a) for a in scale_grid} | ({a_star} if math.isfinite(a_star) else set()))
    for a in scales:
        Ga = FiniteClass(tuple(scaled(h, a) for h in G), f"{H.name}@{a:g}")
        std = label_matrix(FiniteClass(tuple(G)), P, False, None, None)
        eff = label_matrix(Ga, P * a, True, cost, resolution)
        rows.append(
            {
                "scale": a,
                "no_point_moves": bool((std == eff).all()),
                "effective_shattered": _shatter_columns(eff).shattered,
            }
        )
    return {"c_neg": cn, "a_star": a_star, "scales": rows, "points": P.tolist()}


# ---------------------------------------------------------------------------
# fixtures


def lattice(lo: float, hi: float, count: int, dim: int = 2) -> np.ndarray:
    axis = np.linspace(lo, hi, count)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _four_balls(alpha: float = 0.75, radius: float = 0.25) -> FiniteClass:
    centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    gaps = [np.linalg.norm(a - b) for a, b in itertools.combinations(centers, 2)]
    if not (min(gaps) > 2 * radius and max(gaps) < 2 * (radius + alpha)):
        raise ValueError("four-balls needs 2r < center gaps < 2(r + alpha)")
    hs = tuple(BallUnion(c[None, :], [radius]) for c in centers)
    return FiniteClass(
        hs,
        "four-balls",
        {
            "alpha": alpha,
            "radius": radius,
            "centers": centers.tolist(),
            "witnesses": [[0.5, -0.5], [-0.5, 0.5]],
            "universe": lattice(-0.5, 1.5, 5).tolist(),
        },
    )


def _wipeout_lattice(alpha: float = 0.9, delta: float = 0.1, side: int = 3, spacing: float = 2.0) -> FiniteClass:
    if not 0 < delta < alpha < 1:
        raise ValueError("wipeout-lattice needs 0 < delta < alpha < 1")
    radius = alpha - delta
    if spacing <= 2 * radius:
        raise ValueError("lattice balls must not overlap")
    S = lattice(0.0, spacing * (side - 1), side)
    hs = []
    for mask in range(1 << len(S)):
        chosen = [i for i in range(len(S)) if mask >> i & 1]
        if chosen:
            hs.append(BallUnion(S[chosen], radius, Polarity.NEGATIVE_INSIDE))
        else:
            hs.append(constant_classifier(2, 1))
    return FiniteClass(
        tuple(hs),
        "wipeout-lattice",
        {"alpha": alpha, "delta": delta, "radius": radius, "spacing": spacing, "universe": S.tolist()},
    )


def _scaled_lattice_balls(alpha: float = 0.75, radius: float = 0.25, delta: float = 0.1, dim: int = 2) -> FiniteClass:
    corners = lattice(0.0, 1.0, 2, dim)
    S = np.vstack([corners[1:], -delta * np.ones((1, dim))])
    hs = tuple(BallUnion(c[None, :], [radius]) for c in S)
    E = np.eye(dim)
    return FiniteClass(
        hs,
        "scaled-lattice-balls",
        {"alpha": alpha, "radius": radius, "delta": delta, "centers": S.tolist(), "witnesses": E.tolist()},
    )


def _negative_polytopes(k: int = 3, s: float = 2.0, count: int = 8, seed: int = 0) -> FiniteClass:
    if k < 3:
        raise ValueError("polytopes need k >= 3 vertices")
    rng = rng_for(seed, k)
    hs = []
    while len(hs) < count:
        center = rng.uniform(-2 * s, 2 * s, 2)
        ang = np.sort(rng.uniform(0, 2 * np.pi, k))
        rad = rng.uniform(0.3 * s, s, k)
        V = center + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        try:
            hs.append(Polytope(V, Polarity.NEGATIVE_INSIDE))
        except Exception:
            continue
    return FiniteClass(tuple(hs), "negative-polytopes", {"k": k, "s": s, "count": count, "seed": seed})


FIXTURES = {
    "four-balls": _four_balls,
    "wipeout-lattice": _wipeout_lattice,
    "scaled-lattice-balls": _scaled_lattice_balls,
    "negative-polytopes": _negative_polytopes,
}


def build_fixture(name: str, **params) -> FiniteClass:
    try:
        return FIXTURES[name](**params)
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None


def multiple_radius_balls(centers, alpha: float, multiples=(1, 2, 3), norm: Norm = Norm.L2) -> FiniteClass:
    """Negative-inside balls with radii ``m * alpha``; effective radii drop by ``alpha``."""
    hs = tuple(
        BallUnion(np.asarray(c, dtype=float)[None, :], [m * alpha], Polarity.NEGATIVE_INSIDE, norm)
        for c in centers
        for m in multiples
    )
    return FiniteClass(hs, "multiple-radius-balls", {"alpha": alpha, "multiples": list(multiples)})


def effective_grids(H: FiniteClass, box, cell: float, cost: CostModel) -> list[LabelGrid]:
    return [effective_grid(h, box, cell, cost) for h in H.classifiers]
