"""Centred Gram matrices, Tikhonov solves, and kernel coordinate vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, NumericalError, RegularizationTooSmall, SymmetryError
from .kernels import GramMatrix, KernelSpec, cross_kernel
from .object_spaces import PointCloud


def center(K) -> np.ndarray:
    """Return ``Q K Q`` with ``Q = I - 11'/n``."""
    K = np.asarray(getattr(K, "entries", K), dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError("expected a square matrix")
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    G = K - row - col + K.mean()
    return 0.5 * (G + G.T)


def project(v) -> np.ndarray:
    """Apply ``Q`` (subtract the mean along the first axis)."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=0, keepdims=True)


@dataclass(frozen=True, eq=False)
class GramSystem:
    """Centred Gram matrix with a cached Cholesky factor of ``G + eps*I``.

    Build with :meth:`build`; a new ``eps`` means a new system.
    """

    K: GramMatrix
    G: np.ndarray
    eps: float
    factor: tuple
    tag: str = "BX"

    @classmethod
    def build(cls, K, eps: float, tag: str = "BX") -> "GramSystem":
        if not isinstance(K, GramMatrix):
            K = GramMatrix(K)
        G = center(K.entries)
        n = G.shape[0]
        floor = 1e-12 * np.trace(G) / n
        if not eps > floor:
            raise RegularizationTooSmall(f"eps={eps:g} is below the floor {floor:.3g}")
        try:
            factor = linalg.cho_factor(G + eps * np.eye(n), lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"G + eps*I is not positive definite: {exc}") from exc
        G.setflags(write=False)
        return cls(K, G, float(eps), factor, tag)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def solve(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DimensionError(f"vector of length {v.shape[0]} for a system of size {self.n}")
        return linalg.cho_solve(self.factor, v, check_finite=False)

    def hat(self) -> np.ndarray:
        """``G (G + eps I)^{-1}``, the smoother matrix of the centred regression."""
        Qm = np.eye(self.n) - 1.0 / self.n
        H = self.G @ self.solve(Qm)
        return 0.5 * (H + H.T)

    def effective_df(self) -> float:
        """``tr[G (G + eps I)^{-1}] + 1``; the +1 accounts for the fitted mean."""
        return float(np.trace(self.hat())) + 1.0


def tikhonov_apply(sys: GramSystem, v) -> np.ndarray:
    """``(G + eps I)^{-1} v``."""
    return sys.solve(v)


@dataclass(frozen=True, eq=False)
class CoordVector:
    coords: np.ndarray
    basis_tag: str


def eval_vector(spec: KernelSpec, train: PointCloud, x, train_gram=None) -> np.ndarray:
    """Centred evaluation vector ``k(x, X_i) - mean_k k(X_k, X_i)``.

    A single point gives a length-``n`` vector; several points give one row
    per point.  Passing ``train_gram`` avoids recomputing the training Gram.
    """
    xs = train.like(x)
    kx = cross_kernel(spec, xs, train)
    if train_gram is None:
        train_gram = cross_kernel(spec, train, train)
    K = np.asarray(getattr(train_gram, "entries", train_gram))
    d = kx - K.mean(axis=0)[None, :]
    return d[0] if len(xs) == 1 else d


def coord_of(sys: GramSystem, d) -> CoordVector:
    """Tikhonov coordinates ``Q (G + eps I)^{-1} d`` in the system's basis.

    ``d`` can be a single vector or a matrix whose *columns* are vectors.
    """
    d = np.asarray(d, dtype=float)
    if d.shape[0] != sys.n:
        raise DimensionError(f"evaluation vector of length {d.shape[0]} for n={sys.n}")
    # Q commutes with the solve; centring first keeps the 1/eps mode along 1 out
    return CoordVector(project(sys.solve(project(d))), sys.tag)


def sym_eigs(A, top_l: int | None = None, vectors: bool = False, tol: float = 1e-8):
    """Leading eigenvalues (descending) of a symmetric matrix, optionally with vectors."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("expected a square matrix")
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if np.max(np.abs(A - A.T), initial=0.0) > tol * scale:
        raise SymmetryError("matrix is not symmetric")
    if top_l is None:
        top_l = n
    if not 1 <= top_l <= n:
        raise ValueError(f"top_l must be in [1, {n}]")
    w, U = linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(w)[::-1][:top_l]
    if vectors:
        return w[order], U[:, order]
    return w[order]
