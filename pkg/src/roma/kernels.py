"""Reproducing kernels on object points and their Gram matrices."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, DimensionError, TypeMismatchError
from .object_spaces import MetricKind, ObjectPoint, PointCloud, as_cloud

LINEAR = "linear"
GAUSSIAN = "gaussian"
DISTANCE = "distance"

_LINEAR_OK = {MetricKind.EUCLIDEAN, MetricKind.WASSERSTEIN, MetricKind.FROBENIUS}


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Declarative kernel description bound to a metric.

    ``kind`` is one of ``"linear"`` (``<a, b> + offset`` under the native inner
    product), ``"gaussian"`` (``exp(-bandwidth * d(a, b)**2)``) or
    ``"distance"`` (``(d(a, x0) + d(b, x0) - d(a, b)) / 2`` for an anchor x0).
    A distance-induced kernel without an anchor uses the first point of the
    training cloud it is first evaluated on; see :meth:`resolve`.
    """

    kind: str
    metric: MetricKind = MetricKind.EUCLIDEAN
    offset: float = 0.0
    bandwidth: Optional[float] = None
    anchor: Optional[ObjectPoint] = None

    def __post_init__(self):
        object.__setattr__(self, "metric", MetricKind(self.metric))
        if self.kind not in (LINEAR, GAUSSIAN, DISTANCE):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == GAUSSIAN:
            if self.bandwidth is None or not self.bandwidth > 0 or not np.isfinite(self.bandwidth):
                raise ValueError("Gaussian kernel needs a positive finite bandwidth")
        if self.kind == LINEAR:
            if self.offset < 0:
                raise ValueError("linear kernel offset must be >= 0")
            if self.metric not in _LINEAR_OK:
                raise TypeMismatchError(f"no native inner product on the {self.metric.value} space")
        if self.anchor is not None and self.anchor.metric is not self.metric:
            raise TypeMismatchError("anchor does not live in the kernel's space")

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return replace(self, bandwidth=float(bandwidth))

    def resolve(self, train: PointCloud) -> "KernelSpec":
        """Pin a default distance-kernel anchor to ``train``'s first point."""
        if self.kind == DISTANCE and self.anchor is None:
            return replace(self, anchor=train.point(0))
        return self

    def describe(self) -> str:
        if self.kind == GAUSSIAN:
            return f"gaussian[{self.metric.value}](bandwidth={self.bandwidth:.6g})"
        if self.kind == LINEAR:
            return f"linear[{self.metric.value}](offset={self.offset:g})"
        return f"distance[{self.metric.value}]"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "metric": self.metric.value}
        if self.kind == LINEAR:
            d["offset"] = self.offset
        if self.kind == GAUSSIAN:
            d["bandwidth"] = self.bandwidth
        if self.kind == DISTANCE:
            d["anchor"] = None if self.anchor is None else self.anchor.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        anchor = d.get("anchor")
        return cls(
            kind=d["kind"],
            metric=MetricKind(d.get("metric", "euclidean")),
            offset=float(d.get("offset", 0.0)),
            bandwidth=None if d.get("bandwidth") is None else float(d["bandwidth"]),
            anchor=None if anchor is None else ObjectPoint.from_dict(anchor),
        )


def linear(metric=MetricKind.EUCLIDEAN, offset: float = 0.0) -> KernelSpec:
    return KernelSpec(LINEAR, MetricKind(metric), offset=offset)


def gaussian(metric=MetricKind.EUCLIDEAN, bandwidth: float = 1.0) -> KernelSpec:
    return KernelSpec(GAUSSIAN, MetricKind(metric), bandwidth=bandwidth)


def distance_induced(metric=MetricKind.EUCLIDEAN, anchor: Optional[ObjectPoint] = None) -> KernelSpec:
    return KernelSpec(DISTANCE, MetricKind(metric), anchor=anchor)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    kernel: Optional[KernelSpec] = None

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _check_space(spec: KernelSpec, cloud: PointCloud):
    if cloud.metric is not spec.metric:
        raise TypeMismatchError(
            f"kernel on the {spec.metric.value} space applied to {cloud.metric.value} points"
        )


def cross_kernel(spec: KernelSpec, a: PointCloud, b: PointCloud) -> np.ndarray:
    """Matrix ``k(a_i, b_j)`` for two clouds in the kernel's space."""
    _check_space(spec, a)
    _check_space(spec, b)
    if a.dim != b.dim:
        raise DimensionError(f"point dimension mismatch: {a.dim} vs {b.dim}")
    if spec.kind == LINEAR:
        return a.inner(b) + spec.offset
    if spec.kind == GAUSSIAN:
        return np.exp(-spec.bandwidth * a.sqdist(b))
    anchor = spec.anchor
    if anchor is None:
        raise ValueError("distance-induced kernel has no anchor; call resolve() first")
    x0 = b.like(anchor)
    da = a.dist(x0)[:, 0]
    db = b.dist(x0)[:, 0]
    return 0.5 * (da[:, None] + db[None, :] - a.dist(b))


def kernel_eval(spec: KernelSpec, a: ObjectPoint, b: ObjectPoint) -> float:
    if a.metric is not spec.metric or b.metric is not spec.metric:
        raise TypeMismatchError(f"points {a.variant}/{b.variant} are incompatible with {spec.describe()}")
    ca = as_cloud(a)
    cb = ca.like(b)
    if spec.kind == DISTANCE and spec.anchor is None:
        raise ValueError("distance-induced kernel needs an anchor for pointwise evaluation")
    return float(cross_kernel(spec, ca, cb)[0, 0])


def gram(spec: KernelSpec, points) -> GramMatrix:
    """Gram matrix of ``spec`` over ``points``; symmetric by construction."""
    cloud = as_cloud(points)
    if len(cloud) < 2:
        raise DimensionError("a Gram matrix needs at least two points")
    spec = spec.resolve(cloud)
    k = cross_kernel(spec, cloud, cloud)
    return GramMatrix(0.5 * (k + k.T), spec)


def joint_gram(kx: GramMatrix, km: GramMatrix) -> GramMatrix:
    """Gram matrix of the additive kernel on (exposure, mediator) pairs."""
    if kx.entries.shape != km.entries.shape:
        raise DimensionError(f"Gram shapes differ: {kx.entries.shape} vs {km.entries.shape}")
    return GramMatrix(kx.entries + km.entries, None)


def bandwidth_grid(points, metric=None, size: int = 9, span: float = 100.0) -> np.ndarray:
    """Log-spaced Gaussian bandwidths centred on ``1 / median(d^2)``.

    The grid runs from ``center / span`` to ``center * span``; with an odd
    ``size`` the centre itself is the middle element.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    cloud = as_cloud(points)
    if metric is not None and cloud.metric is not MetricKind(metric):
        raise TypeMismatchError("points do not match the requested metric")
    d2 = cloud.sqdist()
    iu = np.triu_indices(len(cloud), k=1)
    pos = d2[iu]
    if pos.size == 0 or np.all(pos <= 0):
        raise DegenerateDataError("all pairwise distances are zero")
    med = np.median(pos)
    if med <= 0:
        med = np.median(pos[pos > 0])
    center = 1.0 / med
    if size == 1:
        return np.array([center])
    return center * np.logspace(-np.log10(span), np.log10(span), size)
