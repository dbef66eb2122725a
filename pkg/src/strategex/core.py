"""Domain types shared by every module.

Classifiers are sign-thresholded score functions ``h(x) = 1[f(x) >= 0]``;
points exactly on the decision boundary are labeled positive.  Everything
here is immutable after construction: numpy arrays are frozen read-only.
"""

from __future__ import annotations

import base64
import csv
import enum
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

SCHEMA = "strategex/v1"


class Norm(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @property
    def order(self) -> float:
        return {Norm.L1: 1, Norm.L2: 2, Norm.LINF: np.inf}[self]

    @property
    def dual(self) -> "Norm":
        return {Norm.L1: Norm.LINF, Norm.L2: Norm.L2, Norm.LINF: Norm.L1}[self]

    def __call__(self, v, axis=-1) -> np.ndarray:
        return np.linalg.norm(np.asarray(v, dtype=float), ord=self.order, axis=axis)

    @classmethod
    def parse(cls, value: "str | Norm") -> "Norm":
        if isinstance(value, Norm):
            return value
        key = str(value).lower().replace("ℓ", "l").replace("-", "")
        aliases = {"l1": cls.L1, "l2": cls.L2, "linf": cls.LINF, "inf": cls.LINF, "max": cls.LINF}
        if key not in aliases:
            raise ValueError(f"unknown norm {value!r}")
        return aliases[key]


class Polarity(str, enum.Enum):
    POSITIVE_INSIDE = "positive-inside"
    NEGATIVE_INSIDE = "negative-inside"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostModel:
    """Norm-induced manipulation cost with budget ``alpha``."""

    norm: Norm = Norm.L2
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be a positive real, got {self.alpha}")

    def cost(self, x, x2) -> np.ndarray:
        return self.norm(np.asarray(x2, dtype=float) - np.asarray(x, dtype=float))

    def in_ball(self, x, x2, tol: float = 1e-12) -> np.ndarray:
        return self.cost(x, x2) <= self.alpha + tol

    def with_alpha(self, alpha: float) -> "CostModel":
        return CostModel(self.norm, alpha)


# ---------------------------------------------------------------------------
# monomials


def monomial_exponents(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials of total degree <= ``degree``.

    Graded lexicographic order: by total degree, then lexicographically
    descending within a degree, so for d=2, k=2 the basis is
    ``1, x, y, x^2, xy, y^2``.
    """
    out: list[tuple[int, ...]] = []
    for total in range(degree + 1):
        block = [e for e in itertools.product(range(total + 1), repeat=dim) if sum(e) == total]
        out.extend(sorted(block, reverse=True))
    return out


def monomial_count(dim: int, degree: int) -> int:
    return math.comb(dim + degree, degree)


def monomial_features(X, degree: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    exps = np.array(monomial_exponents(X.shape[1], degree))
    powers = [X[:, j, None] ** np.arange(degree + 1) for j in range(X.shape[1])]
    feats = np.ones((X.shape[0], len(exps)))
    for j in range(X.shape[1]):
        feats *= powers[j][:, exps[:, j]]
    return feats


# ---------------------------------------------------------------------------
# classifiers


class Classifier:
    """Base class: subclasses implement ``score`` on an ``(n, d)`` array."""

    dim: int

    def score(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.dim > 1 or X.size != 1 else X.reshape(1, 1)
        if X.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: classifier has d={self.dim}, point has d={X.shape[-1]}")
        return X

    def predict(self, x) -> int:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"dimension mismatch: classifier has d={self.dim}, point has d={x.size}")
        return int(self.score(x[None, :])[0] >= 0)

    def predict_many(self, X) -> np.ndarray:
        X = self._check_points(X)
        return (self.score(X) >= 0).astype(np.int8)

    def to_dict(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True, eq=False)
class Linear(Classifier):
    w: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(np.ravel(self.w)))
        object.__setattr__(self, "b", float(self.b))
        if not np.linalg.norm(self.w) > 0:
            raise ValueError("linear classifier needs a nonzero weight vector")

    @property
    def dim(self) -> int:
        return self.w.size

    def score(self, X):
        return np.asarray(X, dtype=float) @ self.w - self.b

    def to_dict(self):
        return {"variant": "linear", "w": self.w.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Polynomial(Classifier):
    """``f(x) = sum_m c_m x^m`` over the graded-lex monomial basis.

    ``scale`` divides coordinates before the monomials are taken; it keeps
    high-degree fits well conditioned on wide boxes.
    """

    dim: int
    degree: int
    coefficients: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(np.ravel(self.coefficients)))
        if self.degree < 1 or self.dim < 1:
            raise ValueError("polynomial needs degree >= 1 and dim >= 1")
        expected = monomial_count(self.dim, self.degree)
        if self.coefficients.size != expected:
            raise ValueError(
                f"degree-{self.degree} polynomial in d={self.dim} needs {expected} coefficients, "
                f"got {self.coefficients.size}"
            )
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def score(self, X):
        return monomial_features(np.asarray(X, dtype=float) / self.scale, self.degree) @ self.coefficients

    def to_dict(self):
        return {
            "variant": "polynomial",
            "dim": self.dim,
            "degree": self.degree,
            "coefficients": self.coefficients.tolist(),
            "scale": self.scale,
        }


@dataclass(frozen=True, eq=False)
class BallUnion(Classifier):
    """Union of norm balls; ``polarity`` says which side is labeled 1."""

    centers: np.ndarray
    radii: np.ndarray
    polarity: Polarity = Polarity.POSITIVE_INSIDE
    norm: Norm = Norm.L2

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        radii = np.ravel(np.asarray(self.radii, dtype=float))
        if radii.size == 1 and centers.shape[0] > 1:
            radii = np.full(centers.shape[0], radii[0])
        if centers.shape[0] != radii.size or centers.shape[0] == 0:
            raise ValueError("need one radius per center and at least one ball")
        if np.any(radii <= 0):
            raise ValueError("radii must be positive")
        object.__setattr__(self, "centers", _frozen(centers))
        object.__setattr__(self, "radii", _frozen(radii))
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        object.__setattr__(self, "norm", Norm.parse(self.norm))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def positive_inside(self) -> bool:
        return self.polarity is Polarity.POSITIVE_INSIDE

    def depth(self, X) -> np.ndarray:
        """Signed gap ``||x - c_i|| - r_i`` for every ball, shape ``(n, k)``."""
        X = np.asarray(X, dtype=float)
        return self.norm(X[:, None, :] - self.centers[None, :, :]) - self.radii

    def score(self, X):
        gap = self.depth(X)
        if self.positive_inside:
            return -gap.min(axis=1)
        return gap.min(axis=1)

    def pairwise_disjoint(self) -> bool:
        k = self.centers.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                if self.norm(self.centers[i] - self.centers[j]) <= self.radii[i] + self.radii[j]:
                    return False
        return True

    def to_dict(self):
        return {
            "variant": "ball_union",
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "polarity": self.polarity.value,
            "norm": self.norm.value,
        }


@dataclass(frozen=True, eq=False)
class Polytope(Classifier):
    """Convex hull of ``vertices``; score is the negated max facet offset."""

    vertices: np.ndarray
    polarity: Polarity = Polarity.POSITIVE_INSIDE
    _facets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "vertices", _frozen(V))
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        if V.shape[1] == 1:
            lo, hi = V.min(), V.max()
            if hi <= lo:
                raise ValueError("degenerate 1-d polytope")
            eq = np.array([[1.0, -hi], [-1.0, lo]])
        else:
            from scipy.spatial import ConvexHull

            if V.shape[0] < V.shape[1] + 1:
                raise ValueError("polytope needs at least d+1 vertices")
            eq = ConvexHull(V).equations
        object.__setattr__(self, "_facets", _frozen(eq))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def score(self, X):
        X = np.asarray(X, dtype=float)
        outside = (X @ self._facets[:, :-1].T + self._facets[:, -1]).max(axis=1)
        return -outside if self.polarity is Polarity.POSITIVE_INSIDE else outside

    def to_dict(self):
        return {"variant": "polytope", "vertices": self.vertices.tolist(), "polarity": self.polarity.value}


@dataclass(frozen=True, eq=False)
class GridSampled(Classifier):
    grid: "LabelGrid"

    @property
    def dim(self) -> int:
        return self.grid.dim

    def score(self, X):
        idx = self.grid.index_of(X)
        return np.where(self.grid.labels[tuple(idx.T)], 1.0, -1.0)

    def to_dict(self):
        return {"variant": "grid_sampled", "grid": self.grid.to_dict()}


@dataclass(frozen=True, eq=False)
class ScoreFn(Classifier):
    """Opaque score function mapping an ``(n, d)`` array to ``(n,)`` scores."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "score_fn"

    def score(self, X):
        return np.asarray(self.fn(np.asarray(X, dtype=float)), dtype=float)


def classifier_from_dict(doc: dict) -> Classifier:
    doc = dict(doc)
    schema = doc.pop("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValueError(f"unsupported schema {schema!r}")
    variant = doc.pop("variant", None)
    builders = {
        "linear": lambda d: Linear(np.asarray(d.pop("w")), d.pop("b", 0.0)),
        "polynomial": lambda d: Polynomial(
            int(d.pop("dim")), int(d.pop("degree")), np.asarray(d.pop("coefficients")), float(d.pop("scale", 1.0))
        ),
        "ball_union": lambda d: BallUnion(
            d.pop("centers"), d.pop("radii"), d.pop("polarity", "positive-inside"), d.pop("norm", "l2")
        ),
        "polytope": lambda d: Polytope(d.pop("vertices"), d.pop("polarity", "positive-inside")),
        "grid_sampled": lambda d: GridSampled(LabelGrid.from_dict(d.pop("grid"))),
    }
    if variant not in builders:
        raise ValueError(f"unknown classifier variant {variant!r}")
    try:
        clf = builders[variant](doc)
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r} for {variant} classifier") from None
    if doc:
        raise ValueError(f"unknown keys for {variant} classifier: {sorted(doc)}")
    return clf


def classifier_to_dict(h: Classifier) -> dict:
    return {"schema": SCHEMA, **h.to_dict()}


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """Axis-aligned raster of binary labels.

    ``labels[i, j, ...]`` is the cell whose center is
    ``origin + (index + 0.5) * cell_size``; axis 0 is the x coordinate.
    """

    origin: np.ndarray
    cell_size: float
    labels: np.ndarray

    def __post_init__(self):
        origin = _frozen(np.ravel(self.origin))
        labels = _frozen(self.labels, dtype=bool)
        if labels.ndim != origin.size or labels.ndim not in (1, 2, 3):
            raise ValueError("grid dimension must be 1, 2 or 3 and match the origin")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def dim(self) -> int:
        return self.labels.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.labels.shape

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.shape) * self.cell_size

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(lo), float(hi)) for lo, hi in zip(self.origin, self.upper))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.cell_size

    def centers(self) -> np.ndarray:
        """All cell centers, row-major, shape ``(n_cells, d)``."""
        mesh = np.meshgrid(*[self.axis_centers(a) for a in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def center_of(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.cell_size

    def index_of(self, X, *, clip: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: grid has d={self.dim}, point has d={X.shape[1]}")
        raw = np.floor((X - self.origin) / self.cell_size).astype(np.int64)
        shape = np.asarray(self.shape)
        # points exactly on the upper edge belong to the last cell
        on_edge = (raw == shape) & np.isclose(X, self.upper, rtol=0, atol=1e-9 * self.cell_size)
        raw = np.where(on_edge, shape - 1, raw)
        if clip:
            return np.clip(raw, 0, shape - 1)
        if np.any(raw < 0) or np.any(raw >= shape):
            raise ValueError("point outside grid bounds")
        return raw

    def with_labels(self, labels) -> "LabelGrid":
        return LabelGrid(self.origin, self.cell_size, np.asarray(labels, dtype=bool).reshape(self.shape))

    def crop(self, lo_index, shape) -> "LabelGrid":
        sl = tuple(slice(int(a), int(a) + int(n)) for a, n in zip(lo_index, shape))
        return LabelGrid(self.origin + np.asarray(lo_index) * self.cell_size, self.cell_size, self.labels[sl])

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        bits = np.packbits(self.labels.ravel(order="C"))
        return {
            "schema": SCHEMA,
            "origin": self.origin.tolist(),
            "cell_size": self.cell_size,
            "shape": list(self.shape),
            "bits": base64.b64encode(bits.tobytes()).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelGrid":
        if doc.get("schema", SCHEMA) != SCHEMA:
            raise ValueError(f"unsupported schema {doc.get('schema')!r}")
        shape = tuple(int(s) for s in doc["shape"])
        n = int(np.prod(shape))
        raw = np.frombuffer(base64.b64decode(doc["bits"]), dtype=np.uint8)
        labels = np.unpackbits(raw)[:n]
        if labels.size != n:
            raise ValueError("bit array shorter than the grid shape")
        return cls(np.asarray(doc["origin"]), float(doc["cell_size"]), labels.reshape(shape).astype(bool))

    def to_csv(self, fh) -> None:
        axes = ["x", "y", "z"][: self.dim]
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*axes, "label"])
        for c, lab in zip(self.centers(), self.labels.ravel()):
            writer.writerow([*(f"{v:.10g}" for v in c), int(lab)])

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, fh) -> "LabelGrid":
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[-1] != "label" or header[:-1] != ["x", "y", "z"][: len(header) - 1]:
            raise ValueError(f"unexpected grid CSV header {header}")
        rows = np.array([[float(v) for v in row] for row in reader if row])
        if rows.size == 0:
            raise ValueError("empty grid CSV")
        coords, labels = rows[:, :-1], rows[:, -1]
        axes = [np.unique(coords[:, a]) for a in range(coords.shape[1])]
        steps = [np.diff(ax) for ax in axes if ax.size > 1]
        if not steps:
            raise ValueError("cannot infer cell size from a single cell")
        cell = float(np.min(np.concatenate(steps)))
        origin = np.array([ax[0] - cell / 2 for ax in axes])
        shape = tuple(int(round((ax[-1] - ax[0]) / cell)) + 1 for ax in axes)
        grid = np.zeros(shape, dtype=bool)
        idx = np.rint((coords - origin - cell / 2) / cell).astype(int)
        grid[tuple(idx.T)] = labels > 0.5
        return cls(origin, cell, grid)


def grid_for_box(box, cell_size: float) -> tuple[np.ndarray, tuple[int, ...]]:
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if np.any(hi <= lo):
        raise ValueError(f"empty box {box}")
    shape = tuple(int(math.ceil((h - l) / cell_size - 1e-9)) for l, h in zip(lo, hi))
    return lo, shape


def rasterize(h: Classifier, box, cell_size: float) -> LabelGrid:
    """Label every cell of ``box`` by ``h`` evaluated at the cell center."""
    origin, shape = grid_for_box(box, cell_size)
    if len(shape) != h.dim:
        raise ValueError("box dimension does not match the classifier")
    blank = LabelGrid(origin, cell_size, np.zeros(shape, dtype=bool))
    return blank.with_labels(h.score(blank.centers()) >= 0)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        labels = np.ravel(np.asarray(self.labels)).astype(np.int8)
        if pts.shape[0] != labels.size:
            raise ValueError("points and labels differ in length")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.int8))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.labels.size

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    @property
    def majority_rate(self):
        from fractions import Fraction

        return Fraction(max(self.n_positive, self.n_negative), len(self))

    def embed(self, dim: int) -> "Dataset":
        """Pad coordinates with zeros up to ``dim`` (e.g. a line inside the plane)."""
        pad = np.zeros((len(self), dim - self.dim))
        return Dataset(np.hstack([self.points, pad]), self.labels)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "dim": self.dim, "points": self.points.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Dataset":
        doc = dict(doc)
        if doc.pop("schema", SCHEMA) != SCHEMA:
            raise ValueError("unsupported schema")
        dim = doc.pop("dim", None)
        pts, labels = doc.pop("points"), doc.pop("labels")
        if doc:
            raise ValueError(f"unknown dataset keys: {sorted(doc)}")
        data = cls(np.asarray(pts, dtype=float).reshape(len(labels), -1), labels)
        if dim is not None and data.dim != int(dim):
            raise ValueError("declared dim does not match the points")
        return data


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; key order matters, call order does not."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def make_gaussian_dataset(mu: float, n_per_class: int, seed: int, dim: int = 2) -> Dataset:
    """Class ``y`` drawn from an isotropic unit Gaussian centered at ``(y*mu, ..., y*mu)``."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    rng = rng_for(seed)
    neg = rng.standard_normal((n_per_class, dim))
    pos = rng.standard_normal((n_per_class, dim)) + mu
    return Dataset(np.vstack([neg, pos]), np.repeat([0, 1], n_per_class))


def make_lattice_dataset(m: int) -> Dataset:
    """Points ``0..m-1`` on the line, labels alternating ``0, 1, 0, ...``."""
    if m < 2:
        raise ValueError("m must be >= 2")
    return Dataset(np.arange(m, dtype=float)[:, None], np.arange(m) % 2)


def regular_simplex(dim: int, circumradius: float = 1.0) -> np.ndarray:
    """``dim + 1`` vertices of a regular simplex centered at the origin."""
    E = np.eye(dim + 1) - 1.0 / (dim + 1)
    # orthonormal basis of the sum-zero hyperplane
    basis = np.linalg.svd(E)[2][:dim]
    V = E @ basis.T
    V *= circumradius / np.linalg.norm(V[0])
    return V[np.lexsort(V.T[::-1])]


def make_tetrahedron_dataset(positives, delta: float) -> Dataset:
    """Surround each positive point with a regular simplex of negatives.

    A flat sequence of numbers is read as 1-d points.
    """
    P = np.asarray(positives, dtype=float)
    P = P.reshape(-1, 1) if P.ndim == 1 else P
    if not delta > 0:
        raise ValueError("delta must be positive")
    dim = P.shape[1]
    for i, j in itertools.combinations(range(len(P)), 2):
        if np.linalg.norm(P[i] - P[j]) <= 2 * delta:
            raise ValueError(f"simplices around {P[i]} and {P[j]} overlap; shrink delta")
    S = regular_simplex(dim, delta)
    negatives = np.concatenate([p + S for p in P])
    return Dataset(np.vstack([P, negatives]), np.r_[np.ones(len(P)), np.zeros(len(negatives))])


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def as_points(X: Iterable[Sequence[float]] | np.ndarray, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    return X
