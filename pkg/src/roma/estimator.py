"""Fit the mediation model and evaluate the closed-form effect estimators.

Notation used throughout: ``Q = I - 11'/n``, ``G_X = Q K_X Q``,
``G_Z = Q (K_X + K_M) Q``, ``G^† = (G + eps I)^{-1}`` and ``HV`` the
``n x d`` matrix of embedded outcomes.  Elements of the mediator RKHS are
never formed explicitly; an element ``sum_i w_i k_M(., M_i)`` is carried as
its weight vector ``w``.

* ``Phi(x)`` has weights ``1/n + c_x`` with ``c_x = Q G_X^† d_x``.

The mediator regression may use its own exposure kernel (``kernel_x_phi``);
``G_X`` and ``d_x`` inside ``c_x`` are then built from it, while the joint
system always uses ``kernel_x``.
* ``Psi(m) + gamma(x) = mean(V) + HV' Q G_Z^† (d_x + d_m)``.
* ``NDE = HV' Q G_Z^† (d_x - d_x*)``.
* ``NIE = HV' Q G_Z^† K_M (c_x - c_x*)``: the outcome regression applied to
  the difference of the two predicted mediator embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, DimensionError
from .gram_algebra import CoordVector, GramSystem, center, coord_of, eval_vector, project
from .kernels import GramMatrix, KernelSpec, cross_kernel, gram, joint_gram
from .object_spaces import (
    HilbertVector,
    ObjectPoint,
    PointCloud,
    QuantileGridMeta,
    as_cloud,
    embed_outcome,
    quadrature_weights,
)

NDE = "NDE"
NIE = "NIE"
TE = "TE"


def embed_outcomes(y, grid=None) -> tuple[np.ndarray, Optional[QuantileGridMeta]]:
    """Stack embedded outcomes into an ``n x d`` matrix.

    Accepts a PointCloud, a list of ObjectPoints, or a numeric array (a 1-D
    array is ``n`` scalar outcomes).
    """
    if isinstance(y, PointCloud):
        if y.variant == "distribution":
            if grid is not None:
                y = as_cloud(y, levels=grid)
            w = quadrature_weights(y.levels)
            return np.array(y.coords), QuantileGridMeta(y.levels, w)
        return np.array(y.coords), None
    if isinstance(y, (list, tuple)) and y and isinstance(y[0], ObjectPoint):
        vecs = [embed_outcome(p, grid) for p in y]
        if len({len(v) for v in vecs}) != 1:
            raise DimensionError("outcomes embed to different dimensions")
        return np.vstack([v.coords for v in vecs]), vecs[0].grid_meta
    a = np.asarray(y, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError("numeric outcomes must be 1-D or 2-D")
    return a, None


@dataclass(frozen=True, eq=False)
class EffectVector:
    kind: str
    value: HilbertVector
    contrast: tuple

    @property
    def coords(self) -> np.ndarray:
        return self.value.coords


@dataclass(frozen=True, eq=False)
class PhiPrediction:
    """``Phi(x) = sum_i weights_i k_M(., M_i)``."""

    weights: np.ndarray
    fit: "MediationFit"

    def evaluate(self, m) -> np.ndarray:
        """Values of ``Phi(x)`` at mediator point(s) ``m``."""
        ms = self.fit.train_m.like(m)
        return cross_kernel(self.fit.kernel_m, ms, self.fit.train_m) @ self.weights


@dataclass(frozen=True, eq=False)
class MediationFit:
    kernel_x: KernelSpec
    kernel_m: KernelSpec
    train_x: PointCloud
    train_m: PointCloud
    HV: np.ndarray
    grid_meta: Optional[QuantileGridMeta]
    K_X: GramMatrix
    K_M: GramMatrix
    sys_x: GramSystem
    sys_z: GramSystem
    kernel_x_phi: KernelSpec
    K_XP: GramMatrix

    @property
    def n(self) -> int:
        return self.HV.shape[0]

    @property
    def d(self) -> int:
        return self.HV.shape[1]

    @property
    def eps(self) -> float:
        return self.sys_x.eps

    @property
    def eps_tilde(self) -> float:
        return self.sys_z.eps

    @property
    def V_mean(self) -> np.ndarray:
        return self.HV.mean(axis=0)

    @property
    def G_M(self) -> np.ndarray:
        return center(self.K_M)

    def d_x(self, x) -> np.ndarray:
        """Evaluation vector under the joint system's exposure kernel."""
        return eval_vector(self.kernel_x, self.train_x, x, self.K_X)

    def d_x_phi(self, x) -> np.ndarray:
        """Evaluation vector under the mediator regression's exposure kernel."""
        return eval_vector(self.kernel_x_phi, self.train_x, x, self.K_XP)

    def d_m(self, m) -> np.ndarray:
        return eval_vector(self.kernel_m, self.train_m, m, self.K_M)

    def hilbert(self, coords) -> HilbertVector:
        return HilbertVector(coords, self.grid_meta)


def fit(x, m, y, kernel_x: KernelSpec, kernel_m: KernelSpec, eps: float, eps_tilde: float, grid=None,
        kernel_x_phi: Optional[KernelSpec] = None) -> MediationFit:
    """Build both regularised systems and store the training data.

    ``kernel_x_phi`` (default ``kernel_x``) is the exposure kernel of the
    mediator regression.
    """
    train_x = as_cloud(x)
    train_m = as_cloud(m, levels=grid if getattr(m, "variant", None) == "distribution" else None)
    HV, meta = embed_outcomes(y, grid)
    n = len(train_x)
    if len(train_m) != n or HV.shape[0] != n:
        raise DimensionError(f"sample sizes differ: x={n}, m={len(train_m)}, y={HV.shape[0]}")
    if n < 3:
        raise DimensionError("need at least three observations")
    K_X = gram(kernel_x, train_x)
    K_XP = K_X if kernel_x_phi is None else gram(kernel_x_phi, train_x)
    K_M = gram(kernel_m, train_m)
    for name, K in (("exposure", K_X), ("exposure", K_XP), ("mediator", K_M)):
        G = project(project(K.entries).T)
        if np.trace(G) <= 1e-12 * max(1.0, np.abs(K.entries).max()):
            raise DegenerateDataError(f"all {name} points are identical under the kernel")
    sys_x = GramSystem.build(K_XP, eps, tag="BX")
    sys_z = GramSystem.build(joint_gram(K_X, K_M), eps_tilde, tag="BZ")
    return MediationFit(K_X.kernel, K_M.kernel, train_x, train_m, HV, meta, K_X, K_M, sys_x, sys_z,
                        K_XP.kernel, K_XP)


def phi_coords(f: MediationFit, x) -> CoordVector:
    """``c_x = Q G_X^† d_x`` (columns for several points)."""
    return coord_of(f.sys_x, np.asarray(f.d_x_phi(x)).T)


def predict_phi(f: MediationFit, x) -> PhiPrediction:
    c = phi_coords(f, x).coords
    return PhiPrediction(1.0 / f.n + c, f)


def predict_outcome(f: MediationFit, x, m) -> HilbertVector:
    d = np.asarray(f.d_x(x)) + np.asarray(f.d_m(m))
    c = coord_of(f.sys_z, d.T).coords
    return f.hilbert(f.V_mean + f.HV.T @ c)


def _contrast_d(f: MediationFit, x, x_star) -> np.ndarray:
    return np.asarray(f.d_x(x)) - np.asarray(f.d_x(x_star))


def _contrast_d_phi(f: MediationFit, x, x_star) -> np.ndarray:
    return np.asarray(f.d_x_phi(x)) - np.asarray(f.d_x_phi(x_star))


def phi_difference_weights(f: MediationFit, x, x_star) -> np.ndarray:
    """Weights ``a = c_x - c_x*`` of ``Phi(x) - Phi(x*)``."""
    return coord_of(f.sys_x, _contrast_d_phi(f, x, x_star).T).coords


def nde_coords(f: MediationFit, x, x_star) -> np.ndarray:
    c = coord_of(f.sys_z, _contrast_d(f, x, x_star).T).coords
    return f.HV.T @ c


def nie_coords(f: MediationFit, x, x_star) -> np.ndarray:
    a = phi_difference_weights(f, x, x_star)
    c = coord_of(f.sys_z, f.K_M.entries @ a).coords
    return f.HV.T @ c


def estimate_nde(f: MediationFit, x, x_star) -> EffectVector:
    return EffectVector(NDE, f.hilbert(nde_coords(f, x, x_star)), (x, x_star))


def estimate_nie(f: MediationFit, x, x_star) -> EffectVector:
    return EffectVector(NIE, f.hilbert(nie_coords(f, x, x_star)), (x, x_star))


def estimate_te(f: MediationFit, x, x_star) -> EffectVector:
    v = nde_coords(f, x, x_star) + nie_coords(f, x, x_star)
    return EffectVector(TE, f.hilbert(v), (x, x_star))


def counterfactual_mean(f: MediationFit, x, x_mediator) -> HilbertVector:
    """Estimate of ``E[V(x, M(x_mediator))]``: the outcome regression at exposure
    ``x`` applied to the predicted mediator embedding ``Phi(x_mediator)``.

    Differences reproduce the effects: ``cm(x, x*) - cm(x*, x*)`` is the NDE
    and ``cm(x, x) - cm(x, x*)`` is the NIE.
    """
    w = predict_phi(f, x_mediator).weights
    K = f.K_M.entries
    d = np.asarray(f.d_x(x)) + K @ w - K.mean(axis=0)
    c = coord_of(f.sys_z, d).coords
    return f.hilbert(f.V_mean + f.HV.T @ c)


def mediator_residual_coords(f: MediationFit) -> CoordVector:
    """Joint-basis coordinates of ``r_i = k_M(., M_i) - Phi(X_i)``.

    Column ``i`` of the result holds the coordinates of ``r_i``;
    ``HV.T @ coords`` gives the outcome-regression images of all residuals.
    The weights of ``r_i`` over mediator sections are column ``i`` of
    ``Q - G_X G_X^†``.
    """
    n = f.n
    B = np.eye(n) - 1.0 / n - f.sys_x.hat()
    return coord_of(f.sys_z, f.K_M.entries @ B)


def with_regularization(f: MediationFit, eps: float, eps_tilde: float) -> MediationFit:
    """Same data and kernels, new regularisation constants (Gram matrices are reused)."""
    sys_x = GramSystem.build(f.K_XP, eps, tag="BX")
    sys_z = GramSystem.build(f.sys_z.K, eps_tilde, tag="BZ")
    return replace(f, sys_x=sys_x, sys_z=sys_z)
