"""Points of the supported metric spaces, their distances, and outcome embeddings.

Four geometries are supported:

* Euclidean vectors (``ℓ2`` distance),
* univariate distributions, observed either as raw samples or as quantile
  values on a grid (Wasserstein-2 distance = L2 distance of quantile functions),
* compositions, mapped to the positive orthant of the unit sphere by the
  coordinate-wise square root (geodesic distance),
* symmetric positive semi-definite matrices (Frobenius distance).

Distributional objects are carried around as *weighted* quantile coordinates:
the value of the quantile function at each grid level multiplied by the square
root of that level's quadrature weight.  Plain Euclidean inner products of
these coordinates are then discretised L2[0, 1] inner products, so all Gram
algebra downstream is metric-correct without special-casing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, EmptyInputError, GridError, TypeMismatchError

DEFAULT_GRID_SIZE = 100


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    WASSERSTEIN = "wasserstein"
    SPHERE = "sphere"
    FROBENIUS = "frobenius"


def midpoint_grid(m: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Levels ``(k - 0.5) / m`` for ``k = 1..m``."""
    if m < 1:
        raise GridError("grid size must be >= 1")
    return (np.arange(m) + 0.5) / m


def check_grid(levels) -> np.ndarray:
    levels = np.asarray(levels, dtype=float).ravel()
    if levels.size == 0:
        raise GridError("empty quantile grid")
    if not np.all(np.isfinite(levels)) or levels[0] <= 0.0 or levels[-1] >= 1.0:
        raise GridError("quantile levels must lie strictly inside (0, 1)")
    if np.any(np.diff(levels) <= 0):
        raise GridError("quantile levels must be strictly increasing")
    return levels


def quadrature_weights(levels) -> np.ndarray:
    """Midpoint-rule cell widths for ``levels``; they sum to one.

    Cell boundaries sit halfway between neighbouring levels, with 0 and 1 at
    the ends, so the uniform midpoint grid gets weight ``1/m`` everywhere.
    """
    levels = check_grid(levels)
    edges = np.concatenate(([0.0], 0.5 * (levels[1:] + levels[:-1]), [1.0]))
    return np.diff(edges)


def empirical_quantiles(sample, levels) -> np.ndarray:
    """Left-continuous inverse of the empirical CDF evaluated at ``levels``.

    On the midpoint grid of the same size as the sample this returns the order
    statistics exactly.
    """
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise EmptyInputError("empty sample")
    levels = check_grid(levels)
    idx = np.ceil(levels * x.size - 1e-9).astype(int) - 1
    return x[np.clip(idx, 0, x.size - 1)]


# --------------------------------------------------------------------------
# Individual points
# --------------------------------------------------------------------------


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObjectPoint:
    """Base class of a single point in one of the supported spaces."""

    metric: ClassVar[MetricKind]
    variant: ClassVar[str]

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "ObjectPoint":
        kind = d.get("variant")
        cls = _VARIANTS.get(kind)
        if cls is None:
            raise TypeMismatchError(f"unknown point variant {kind!r}")
        if cls is QuantileGrid:
            return QuantileGrid(d["values"], d["levels"])
        return cls(d["values"])


@dataclass(frozen=True, eq=False)
class Euclidean(ObjectPoint):
    values: np.ndarray
    metric: ClassVar[MetricKind] = MetricKind.EUCLIDEAN
    variant: ClassVar[str] = "euclidean"

    def __post_init__(self):
        v = _frozen(np.atleast_1d(np.asarray(self.values, dtype=float)).ravel())
        if v.size == 0:
            raise EmptyInputError("empty Euclidean vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite Euclidean coordinates")
        object.__setattr__(self, "values", v)

    def to_dict(self):
        return {"variant": self.variant, "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution(ObjectPoint):
    """A sample of ``m`` reals, stored sorted ascending."""

    values: np.ndarray
    metric: ClassVar[MetricKind] = MetricKind.WASSERSTEIN
    variant: ClassVar[str] = "distribution_samples"

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size == 0:
            raise EmptyInputError("empty sample")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite sample values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def size(self) -> int:
        return self.values.size

    def quantiles(self, levels) -> np.ndarray:
        return empirical_quantiles(self.values, levels)

    def to_dict(self):
        return {"variant": self.variant, "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class QuantileGrid(ObjectPoint):
    """Quantile function values at fixed levels in (0, 1)."""

    values: np.ndarray
    levels: np.ndarray
    metric: ClassVar[MetricKind] = MetricKind.WASSERSTEIN
    variant: ClassVar[str] = "distribution_quantiles"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        lv = check_grid(self.levels)
        if v.shape != lv.shape:
            raise DimensionError("quantile values and levels differ in length")
        if np.any(np.diff(v) < 0):
            raise GridError("quantile values must be nondecreasing")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "levels", _frozen(lv))

    def quantiles(self, levels) -> np.ndarray:
        levels = check_grid(levels)
        if levels.shape == self.levels.shape and np.allclose(levels, self.levels, rtol=0, atol=1e-12):
            return np.array(self.values)
        return np.interp(levels, self.levels, self.values)

    def to_dict(self):
        return {"variant": self.variant, "values": self.values.tolist(), "levels": self.levels.tolist()}


@dataclass(frozen=True, eq=False)
class Composition(ObjectPoint):
    values: np.ndarray
    metric: ClassVar[MetricKind] = MetricKind.SPHERE
    variant: ClassVar[str] = "composition"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise EmptyInputError("empty composition")
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("composition entries must be >= 0 and sum to 1")
        object.__setattr__(self, "values", _frozen(v))

    def to_dict(self):
        return {"variant": self.variant, "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class SpdMatrix(ObjectPoint):
    values: np.ndarray
    metric: ClassVar[MetricKind] = MetricKind.FROBENIUS
    variant: ClassVar[str] = "spd"

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim == 1:
            p = int(round(np.sqrt(a.size)))
            if p * p != a.size:
                raise DimensionError("flattened SPD matrix is not square")
            a = a.reshape(p, p)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError("SPD matrix must be square")
        if np.max(np.abs(a - a.T), initial=0.0) > 1e-9:
            raise ValueError("matrix is not symmetric")
        if np.linalg.eigvalsh(0.5 * (a + a.T)).min() < -1e-9:
            raise ValueError("matrix is not positive semi-definite")
        object.__setattr__(self, "values", _frozen(a))

    def to_dict(self):
        return {"variant": self.variant, "values": self.values.ravel().tolist()}


_VARIANTS = {
    cls.variant: cls for cls in (Euclidean, EmpiricalDistribution, QuantileGrid, Composition, SpdMatrix)
}

_CLOUD_METRICS = {
    "euclidean": MetricKind.EUCLIDEAN,
    "distribution": MetricKind.WASSERSTEIN,
    "composition": MetricKind.SPHERE,
    "spd": MetricKind.FROBENIUS,
}


@dataclass(frozen=True, eq=False)
class QuantileGridMeta:
    levels: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class HilbertVector:
    """Coordinates of an element of the outcome Hilbert space.

    When ``grid_meta`` is set the coordinates are quadrature-weighted values of
    a function on ``grid_meta.levels``; :meth:`curve` undoes the weighting.
    """

    coords: np.ndarray
    grid_meta: Optional[QuantileGridMeta] = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite Hilbert coordinates")
        object.__setattr__(self, "coords", _frozen(c))

    def __len__(self):
        return self.coords.size

    def curve(self) -> np.ndarray:
        if self.grid_meta is None:
            return np.array(self.coords)
        return self.coords / np.sqrt(self.grid_meta.weights)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


# --------------------------------------------------------------------------
# Distances and embedding of single points
# --------------------------------------------------------------------------


def wasserstein2_empirical(a, b) -> float:
    """W2 distance between two equal-size samples via order statistics."""
    xa = a.values if isinstance(a, EmpiricalDistribution) else np.sort(np.asarray(a, dtype=float).ravel())
    xb = b.values if isinstance(b, EmpiricalDistribution) else np.sort(np.asarray(b, dtype=float).ravel())
    if xa.size == 0 or xb.size == 0:
        raise EmptyInputError("empty sample")
    if xa.size != xb.size:
        raise DimensionError(f"sample sizes differ: {xa.size} vs {xb.size}")
    return float(np.sqrt(np.mean((xa - xb) ** 2)))


def _common_levels(a, b) -> np.ndarray:
    for p in (a, b):
        if isinstance(p, QuantileGrid):
            return p.levels
    return midpoint_grid(DEFAULT_GRID_SIZE)


def metric_distance(space: MetricKind, a: ObjectPoint, b: ObjectPoint) -> float:
    space = MetricKind(space)
    if a.metric is not space or b.metric is not space:
        raise TypeMismatchError(
            f"points of type {a.variant}/{b.variant} do not live in the {space.value} space"
        )
    if space is MetricKind.WASSERSTEIN:
        if isinstance(a, EmpiricalDistribution) and isinstance(b, EmpiricalDistribution) and a.size == b.size:
            return wasserstein2_empirical(a, b)
        levels = _common_levels(a, b)
        w = quadrature_weights(levels)
        diff = a.quantiles(levels) - b.quantiles(levels)
        return float(np.sqrt(np.sum(w * diff**2)))
    va, vb = a.values.ravel(), b.values.ravel()
    if va.shape != vb.shape:
        raise DimensionError(f"dimension mismatch: {va.size} vs {vb.size}")
    if space is MetricKind.SPHERE:
        # chord form: exact zero for equal points, unlike arccos near 1
        chord = np.linalg.norm(np.sqrt(va) - np.sqrt(vb))
        return float(2.0 * np.arcsin(min(chord / 2.0, 1.0)))
    return float(np.linalg.norm(va - vb))


def embed_outcome(y: ObjectPoint, grid=None) -> HilbertVector:
    """Map an outcome into Hilbert coordinates.

    Distributions become weighted quantile coordinates on ``grid`` (default:
    100 midpoint levels); every other variant is flattened as is.
    """
    if isinstance(y, (EmpiricalDistribution, QuantileGrid)):
        levels = midpoint_grid() if grid is None else check_grid(grid)
        w = quadrature_weights(levels)
        return HilbertVector(y.quantiles(levels) * np.sqrt(w), QuantileGridMeta(_frozen(levels), _frozen(w)))
    if isinstance(y, ObjectPoint):
        return HilbertVector(np.asarray(y.values).ravel())
    return HilbertVector(np.atleast_1d(np.asarray(y, dtype=float)).ravel())


# --------------------------------------------------------------------------
# Batches of points
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n`` points of one variant stored as an ``(n, k)`` coordinate array.

    ``coords`` holds raw vectors for Euclidean points, raw proportions for
    compositions, flattened matrices for SPD points, and weighted quantile
    coordinates (see module docstring) for distributions.
    """

    variant: str
    coords: np.ndarray
    levels: Optional[np.ndarray] = None
    shape: tuple = field(default=())

    @property
    def metric(self) -> MetricKind:
        return _CLOUD_METRICS[self.variant]

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2:
            raise DimensionError("point cloud coordinates must be 2-D")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coordinates in point cloud")
        object.__setattr__(self, "coords", _frozen(c))
        if self.levels is not None:
            object.__setattr__(self, "levels", _frozen(check_grid(self.levels)))

    def __len__(self):
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    # -- constructors -------------------------------------------------------

    @classmethod
    def euclidean(cls, values) -> "PointCloud":
        a = np.asarray(values, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        return cls("euclidean", a)

    @classmethod
    def distributions(cls, samples, levels=None) -> "PointCloud":
        """Samples (2-D array or ragged list) observed from each distribution.

        With equal sample sizes and no explicit ``levels`` the grid is the
        midpoint grid of that size, which reproduces order-statistic W2 exactly.
        Otherwise every sample is resampled onto ``levels`` (default 100
        midpoints) through its empirical quantiles.
        """
        rows = [np.asarray(s, dtype=float).ravel() for s in samples]
        if not rows:
            raise EmptyInputError("no distributions given")
        sizes = {r.size for r in rows}
        if levels is None:
            levels = midpoint_grid(sizes.pop()) if len(sizes) == 1 else midpoint_grid()
        levels = check_grid(levels)
        w = np.sqrt(quadrature_weights(levels))
        coords = np.vstack([empirical_quantiles(r, levels) * w for r in rows])
        return cls("distribution", coords, levels)

    @classmethod
    def quantiles(cls, values, levels) -> "PointCloud":
        levels = check_grid(levels)
        v = np.atleast_2d(np.asarray(values, dtype=float))
        if v.shape[1] != levels.size:
            raise DimensionError("quantile values do not match grid length")
        if np.any(np.diff(v, axis=1) < 0):
            raise GridError("quantile values must be nondecreasing")
        return cls("distribution", v * np.sqrt(quadrature_weights(levels)), levels)

    @classmethod
    def compositions(cls, values) -> "PointCloud":
        v = np.atleast_2d(np.asarray(values, dtype=float))
        if np.any(v < 0) or np.any(np.abs(v.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("composition entries must be >= 0 and sum to 1")
        return cls("composition", v)

    @classmethod
    def spd(cls, matrices) -> "PointCloud":
        a = np.asarray(matrices, dtype=float)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise DimensionError("expected an (n, p, p) stack of matrices")
        for i, mat in enumerate(a):
            SpdMatrix(mat)
        return cls("spd", a.reshape(a.shape[0], -1), shape=a.shape[1:])

    @classmethod
    def from_points(cls, points: Sequence[ObjectPoint], levels=None) -> "PointCloud":
        points = list(points)
        if not points:
            raise EmptyInputError("no points given")
        kinds = {type(p) for p in points}
        if all(isinstance(p, (EmpiricalDistribution, QuantileGrid)) for p in points):
            if levels is None:
                grids = [p.levels for p in points if isinstance(p, QuantileGrid)]
                if grids:
                    levels = grids[0]
                elif len({p.size for p in points}) == 1:
                    levels = midpoint_grid(points[0].size)
                else:
                    levels = midpoint_grid()
            levels = check_grid(levels)
            w = np.sqrt(quadrature_weights(levels))
            return cls("distribution", np.vstack([p.quantiles(levels) * w for p in points]), levels)
        if len(kinds) != 1:
            raise TypeMismatchError("points of mixed variants")
        kind = kinds.pop()
        try:
            coords = np.vstack([p.values.ravel() for p in points])
        except ValueError as exc:
            raise DimensionError("points differ in dimension") from exc
        shape = points[0].values.shape if kind is SpdMatrix else ()
        return cls(kind.variant, coords, shape=shape)

    def like(self, points) -> "PointCloud":
        """Coerce ``points`` into this cloud's representation (same grid)."""
        if isinstance(points, (np.ndarray, list, tuple)) and not isinstance(points, PointCloud):
            arr = points
            if not (isinstance(arr, (list, tuple)) and arr and isinstance(arr[0], ObjectPoint)):
                arr = np.asarray(arr, dtype=float)
                if arr.ndim == 1 and self.dim > 1 and arr.size == self.dim:
                    points = arr.reshape(1, -1)
        other = as_cloud(points, levels=self.levels)
        if other.metric is not self.metric:
            raise TypeMismatchError(f"expected {self.metric.value} points, got {other.metric.value}")
        if other.coords.shape[1] != self.coords.shape[1]:
            raise DimensionError(
                f"point dimension {other.coords.shape[1]} does not match {self.coords.shape[1]}"
            )
        return other

    # -- access -------------------------------------------------------------

    def subset(self, idx) -> "PointCloud":
        idx = np.atleast_1d(np.asarray(idx))
        return PointCloud(self.variant, self.coords[idx], self.levels, self.shape)

    def point(self, i: int) -> ObjectPoint:
        row = self.coords[i]
        if self.variant == "distribution":
            return QuantileGrid(row / np.sqrt(quadrature_weights(self.levels)), self.levels)
        if self.variant == "spd":
            return SpdMatrix(row.reshape(self.shape))
        return _VARIANTS[self.variant](row)

    def points(self) -> list:
        return [self.point(i) for i in range(len(self))]

    # -- geometry -----------------------------------------------------------

    def inner(self, other: Optional["PointCloud"] = None) -> np.ndarray:
        """Matrix of native inner products (L2 of quantiles, trace product, dot)."""
        b = self if other is None else other
        return self.coords @ b.coords.T

    def sqdist(self, other: Optional["PointCloud"] = None) -> np.ndarray:
        b = self if other is None else other
        if self.metric is MetricKind.SPHERE:
            return self.dist(b) ** 2
        sa = np.sum(self.coords**2, axis=1)
        sb = sa if other is None else np.sum(b.coords**2, axis=1)
        d2 = sa[:, None] + sb[None, :] - 2.0 * (self.coords @ b.coords.T)
        # cancellation can leave tiny negatives, and self-distances must be exact
        d2 = np.maximum(d2, 0.0)
        if other is None:
            np.fill_diagonal(d2, 0.0)
        return d2

    def dist(self, other: Optional["PointCloud"] = None) -> np.ndarray:
        b = self if other is None else other
        if self.metric is MetricKind.SPHERE:
            cos = np.sqrt(self.coords) @ np.sqrt(b.coords).T
            d = np.arccos(np.clip(cos, -1.0, 1.0))
            if other is None:
                np.fill_diagonal(d, 0.0)
            return d
        return np.sqrt(self.sqdist(other))


def as_cloud(obj, levels=None) -> PointCloud:
    """Best-effort conversion of points, arrays, or clouds into a PointCloud.

    Bare numeric arrays are read as Euclidean: a 1-D array is ``n`` scalar
    points, a 2-D array is ``n`` vectors.
    """
    if isinstance(obj, PointCloud):
        if levels is not None and obj.variant == "distribution" and not (
            obj.levels.shape == np.shape(levels) and np.allclose(obj.levels, levels)
        ):
            return PointCloud.from_points(obj.points(), levels=levels)
        return obj
    if isinstance(obj, ObjectPoint):
        return PointCloud.from_points([obj], levels=levels)
    if isinstance(obj, (list, tuple)) and obj and all(isinstance(p, ObjectPoint) for p in obj):
        return PointCloud.from_points(obj, levels=levels)
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    return PointCloud.euclidean(arr)


PointsLike = Union[PointCloud, ObjectPoint, Sequence[ObjectPoint], np.ndarray, Sequence[float], float]
