"""Generalised cross-validation for the regularisation constants and bandwidths.

Both criteria have the form ``mean squared residual / (1 - df / n)^2`` with
``df = tr[G (G + eps I)^{-1}] + 1``:

* mediator model: residuals ``k_M(., M_i) - Phi(X_i)`` measured in the
  mediator RKHS norm, i.e. ``diag(B G_M B)`` with ``B = Q - G_X G_X^†``;
* outcome model: residuals ``V_i - Psi(M_i) - gamma(X_i)`` in the outcome
  space, i.e. rows of ``(Q - G_Z G_Z^†) V``.

Each kernel pair needs one eigendecomposition; every ``eps`` on the grid is
then a diagonal rescaling.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import SaturatedModelError, TuningFailedError
from .estimator import embed_outcomes
from .gram_algebra import center
from .kernels import GAUSSIAN, KernelSpec, bandwidth_grid, gram
from .object_spaces import as_cloud

DEFAULT_EPS_FACTORS = np.logspace(-6, 0, 20)
OUTCOME_FIRST = "outcome_first"
MEDIATOR_FIRST = "mediator_first"
SPLIT = "split"
STRATEGIES = (SPLIT, OUTCOME_FIRST, MEDIATOR_FIRST)


@dataclass(frozen=True, eq=False)
class GcvTrace:
    """Candidates as ``(eps, bandwidth_x, bandwidth_m)`` tuples and their scores."""

    grid: list
    scores: np.ndarray
    argmin: int

    @property
    def best(self) -> tuple:
        return self.grid[self.argmin]

    @property
    def best_score(self) -> float:
        return float(self.scores[self.argmin])


@dataclass(frozen=True, eq=False)
class Selection:
    kernel_x: KernelSpec
    kernel_m: KernelSpec
    eps: float
    eps_tilde: float
    trace_phi: GcvTrace
    trace_outcome: GcvTrace
    kernel_x_phi: Optional[KernelSpec] = None

    def fit_kwargs(self) -> dict:
        """Keyword arguments for :func:`roma.estimator.fit`."""
        return dict(kernel_x=self.kernel_x, kernel_m=self.kernel_m, eps=self.eps,
                    eps_tilde=self.eps_tilde, kernel_x_phi=self.kernel_x_phi)


@lru_cache(maxsize=8)
def _centred_basis(n: int) -> np.ndarray:
    """Orthonormal basis (``n x (n-1)``) of the vectors orthogonal to ``1``."""
    B = linalg.null_space(np.ones((1, n)))
    B.setflags(write=False)
    return B


class _Spectral:
    """Eigendecomposition of a centred Gram matrix restricted to ``1``-perp.

    With ``U`` orthonormal on ``1``-perp, ``Q = U U'`` and
    ``Q - G (G + eps I)^{-1} = U diag(eps / (mu + eps)) U'``, so both GCV
    numerators are weighted sums over eigen-directions.
    """

    def __init__(self, G: np.ndarray):
        n = G.shape[0]
        P = _centred_basis(n)
        mu, U = linalg.eigh(P.T @ G @ P)
        self.n = n
        self.mu = np.maximum(mu, 0.0)
        self.U = P @ U
        self.scale = float(np.trace(G) / n)

    def keep(self, eps: float) -> np.ndarray:
        return eps / (self.mu + eps)

    def df(self, eps: float) -> float:
        return float(np.sum(self.mu / (self.mu + eps))) + 1.0

    def project_gram(self, A: np.ndarray) -> np.ndarray:
        """``diag(U' A U)``."""
        return np.einsum("ij,ij->j", self.U, A @ self.U)

    def project_rows(self, V: np.ndarray) -> np.ndarray:
        """Squared norms of the rows of ``U' V``."""
        return np.sum((self.U.T @ V) ** 2, axis=1)


def _denominator(df: float, n: int) -> float:
    if df >= n:
        raise SaturatedModelError(f"effective degrees of freedom {df:.3f} >= n = {n}")
    return (1.0 - df / n) ** 2


def _score(spec: _Spectral, energy: np.ndarray, eps: float) -> float:
    num = float(np.sum(spec.keep(eps) ** 2 * energy)) / spec.n
    return num / _denominator(spec.df(eps), spec.n)


def gcv_phi(x, m, kernel_x: KernelSpec, kernel_m: KernelSpec, eps: float) -> float:
    """GCV score of the mediator regression at ``eps``."""
    G_X = center(gram(kernel_x, as_cloud(x)))
    G_M = center(gram(kernel_m, as_cloud(m)))
    sx = _Spectral(G_X)
    return _score(sx, sx.project_gram(G_M), eps)


def gcv_outcome(x, m, y, kernel_x: KernelSpec, kernel_m: KernelSpec, eps_tilde: float, grid=None) -> float:
    """GCV score of the outcome regression at ``eps_tilde``."""
    G_Z = center(gram(kernel_x, as_cloud(x)).entries + gram(kernel_m, as_cloud(m)).entries)
    V, _ = embed_outcomes(y, grid)
    sz = _Spectral(G_Z)
    return _score(sz, sz.project_rows(V - V.mean(axis=0)), eps_tilde)


def _bandwidths(spec: KernelSpec, cloud, given) -> list:
    if spec.kind != GAUSSIAN:
        return [None]
    if given is None:
        given = bandwidth_grid(cloud, size=9)
    return sorted(float(b) for b in np.atleast_1d(given))


def _with(spec: KernelSpec, bw) -> KernelSpec:
    return spec if bw is None else spec.with_bandwidth(bw)


def _argmin(grid: list, scores: list) -> GcvTrace:
    """Minimum score; exact ties go to the larger regularisation constant."""
    s = np.asarray(scores, dtype=float)
    finite = np.isfinite(s)
    if not finite.any():
        raise TuningFailedError("every GCV candidate was rejected")
    best = None
    for i in np.flatnonzero(finite):
        key = (s[i], -grid[i][0])
        if best is None or key < best[0]:
            best = (key, i)
    return GcvTrace(list(grid), s, int(best[1]))


def _sweep(grid_eps: Sequence[float], scale: float, score_fn, tag: tuple):
    cands, scores = [], []
    for r in sorted(float(r) for r in grid_eps):
        eps = r * scale
        cands.append((eps,) + tag)
        try:
            scores.append(score_fn(eps))
        except SaturatedModelError:
            scores.append(np.inf)
    return cands, scores


def select(
    x,
    m,
    y,
    kernel_x: KernelSpec,
    kernel_m: KernelSpec,
    bandwidths_x=None,
    bandwidths_m=None,
    eps_grid: Optional[Sequence[float]] = None,
    eps_tilde_grid: Optional[Sequence[float]] = None,
    strategy: str = SPLIT,
    grid=None,
) -> Selection:
    """Grid search for ``(kernel_x, kernel_m, eps, eps_tilde)``.

    ``eps_grid`` and ``eps_tilde_grid`` are factors multiplying
    ``trace(G)/n`` of the system they regularise.  Gaussian bandwidth grids
    default to :func:`bandwidth_grid` with 9 values; other kernels have none.

    Strategies:

    * ``"split"`` (default): both bandwidths and ``eps_tilde`` on the
      outcome criterion; then, with the mediator kernel fixed, a separate
      exposure bandwidth for the mediator regression together with ``eps``
      on the mediator criterion.  The mediator model's exposure kernel is
      never smoother than the outcome model's: only bandwidths at least as
      large as the outcome choice are searched.
    * ``"outcome_first"``: both bandwidths and ``eps_tilde`` on the outcome
      criterion, then ``eps`` on the mediator criterion.
    * ``"mediator_first"``: both bandwidths and ``eps`` on the mediator
      criterion, then ``eps_tilde``.  The mediator criterion measures
      residuals in the mediator RKHS norm, which shrinks as the mediator
      bandwidth grows, so this tends to pick the narrowest mediator kernel.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown tuning strategy {strategy!r}")
    cx, cm = as_cloud(x), as_cloud(m)
    V, _ = embed_outcomes(y, grid)
    Vc = V - V.mean(axis=0)
    eps_grid = DEFAULT_EPS_FACTORS if eps_grid is None else eps_grid
    eps_tilde_grid = DEFAULT_EPS_FACTORS if eps_tilde_grid is None else eps_tilde_grid
    if len(eps_grid) == 0 or len(eps_tilde_grid) == 0:
        raise TuningFailedError("empty regularisation grid")
    bx_list = _bandwidths(kernel_x, cx, bandwidths_x)
    bm_list = _bandwidths(kernel_m, cm, bandwidths_m)

    GX = {bx: center(gram(_with(kernel_x, bx), cx)) for bx in bx_list}
    GM = {bm: center(gram(_with(kernel_m, bm), cm)) for bm in bm_list}
    SX = {bx: _Spectral(G) for bx, G in GX.items()}

    def outcome_sweep(pairs):
        cands, scores = [], []
        for bx, bm in pairs:
            sz = _Spectral(GX[bx] + GM[bm])
            energy = sz.project_rows(Vc)
            c, s = _sweep(eps_tilde_grid, sz.scale, lambda e, sz=sz, en=energy: _score(sz, en, e), (bx, bm))
            cands += c
            scores += s
        return _argmin(cands, scores)

    def phi_sweep(pairs):
        cands, scores = [], []
        for bx, bm in pairs:
            sx = SX[bx]
            energy = sx.project_gram(GM[bm])
            c, s = _sweep(eps_grid, sx.scale, lambda e, sx=sx, en=energy: _score(sx, en, e), (bx, bm))
            cands += c
            scores += s
        return _argmin(cands, scores)

    pairs = [(bx, bm) for bx in bx_list for bm in bm_list]
    bx_phi = None
    if strategy == OUTCOME_FIRST:
        t_out = outcome_sweep(pairs)
        bx, bm = t_out.best[1:]
        t_phi = phi_sweep([(bx, bm)])
    elif strategy == SPLIT:
        t_out = outcome_sweep(pairs)
        bx, bm = t_out.best[1:]
        t_phi = phi_sweep([(b, bm) for b in bx_list if b is None or b >= bx])
        bx_phi = t_phi.best[1]
    else:
        t_phi = phi_sweep(pairs)
        bx, bm = t_phi.best[1:]
        t_out = outcome_sweep([(bx, bm)])
    kx_phi = None if bx_phi is None or bx_phi == bx else _with(kernel_x, bx_phi)
    return Selection(
        _with(kernel_x, bx), _with(kernel_m, bm), float(t_phi.best[0]), float(t_out.best[0]), t_phi, t_out, kx_phi
    )
