import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from roma.errors import DimensionError, NumericalError, RegularizationTooSmall, SymmetryError
from roma.gram_algebra import GramSystem, center, coord_of, eval_vector, sym_eigs, tikhonov_apply
from roma.kernels import gaussian, linear
from roma.object_spaces import PointCloud


def _Q(n):
    return np.eye(n) - np.ones((n, n)) / n


def _psd(rng, n=8):
    A = rng.normal(size=(n, n))
    return A @ A.T


class TestCenter:
    def test_ones(self):
        assert np.allclose(center(np.ones((4, 4))), 0)

    def test_already_centred(self, rng):
        G = center(_psd(rng))
        assert np.allclose(center(G), G, atol=1e-10)

    def test_dense_oracle(self, rng):
        K = _psd(rng)
        assert np.allclose(center(K), _Q(8) @ K @ _Q(8))

    @given(arrays(float, (6, 6), elements=st.floats(-10, 10)))
    def test_row_sums(self, A):
        K = A + A.T
        G = center(K)
        assert np.abs(G.sum(axis=0)).max() <= 1e-8 * 6 * max(np.abs(K).max(), 1)


class TestTikhonov:
    def test_zero_gram(self, rng):
        v = rng.normal(size=3)
        assert np.allclose(tikhonov_apply(GramSystem.build(np.zeros((3, 3)), 1.0), v), v)

    def test_identity(self):
        n = 4
        K = np.eye(n)  # centred: Q, with eigenvalues 1 on 1-perp
        sys = GramSystem.build(K, 1.0)
        e = np.zeros(n)
        e[0] = 1.0
        e = e - e.mean()
        assert np.allclose(tikhonov_apply(sys, e), e / 2)

    def test_dense_inverse(self, rng):
        K = _psd(rng)
        sys = GramSystem.build(K, 0.3)
        v = rng.normal(size=8)
        G = _Q(8) @ K @ _Q(8)
        assert np.allclose(tikhonov_apply(sys, v), np.linalg.solve(G + 0.3 * np.eye(8), v), atol=1e-9)
        r = (G + 0.3 * np.eye(8)) @ tikhonov_apply(sys, v) - v
        assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(v)

    def test_linear(self, rng):
        sys = GramSystem.build(_psd(rng), 0.5)
        u, v = rng.normal(size=8), rng.normal(size=8)
        assert np.allclose(tikhonov_apply(sys, 2 * u - 3 * v),
                           2 * tikhonov_apply(sys, u) - 3 * tikhonov_apply(sys, v), atol=1e-10)

    def test_monotone_in_eps(self, rng):
        K, v = _psd(rng), rng.normal(size=8)
        norms = [np.linalg.norm(tikhonov_apply(GramSystem.build(K, e), v)) for e in np.logspace(-3, 2, 12)]
        assert np.all(np.diff(norms) <= 1e-12)

    def test_floor(self, rng):
        with pytest.raises(RegularizationTooSmall):
            GramSystem.build(_psd(rng), 1e-20)

    def test_not_psd(self):
        with pytest.raises(NumericalError):
            GramSystem.build(-5 * np.eye(3) + 5, 1.0)


class TestEvalVector:
    def test_hand_case(self):
        d = eval_vector(linear(), PointCloud.euclidean([0.0, 2.0]), 0.0)
        assert np.allclose(d, [0.0, -2.0])

    def test_mean_behaviour(self):
        # linear kernel: x at the sample mean reproduces the mean section
        d = eval_vector(linear(), PointCloud.euclidean([-1.0, 0.5, 0.5]), 0.0)
        assert np.allclose(d, 0.0)

    def test_naive_oracle(self, rng):
        X = rng.normal(size=(7, 2))
        x = rng.normal(size=2)
        k = lambda a, b: np.exp(-0.4 * np.sum((a - b) ** 2))
        naive = [k(x, X[i]) - np.mean([k(X[j], X[i]) for j in range(7)]) for i in range(7)]
        assert np.allclose(eval_vector(gaussian(bandwidth=0.4), PointCloud.euclidean(X), x), naive)


class TestCoordOf:
    def test_zero(self, rng):
        sys = GramSystem.build(_psd(rng), 0.2)
        assert np.allclose(coord_of(sys, np.zeros(8)).coords, 0)

    def test_inverse_of_centred(self, rng):
        sys = GramSystem.build(_psd(rng), 0.2)
        w = rng.normal(size=8)
        w -= w.mean()
        c = coord_of(sys, (sys.G + 0.2 * np.eye(8)) @ w)
        assert np.allclose(c.coords, w, atol=1e-9)
        assert c.basis_tag == sys.tag

    def test_dense_oracle(self, rng):
        K = _psd(rng)
        sys = GramSystem.build(K, 0.2, tag="BZ")
        d = rng.normal(size=8)
        G = _Q(8) @ K @ _Q(8)
        assert np.allclose(coord_of(sys, d).coords, _Q(8) @ np.linalg.solve(G + 0.2 * np.eye(8), _Q(8) @ d), atol=1e-9)

    def test_length(self, rng):
        with pytest.raises(DimensionError):
            coord_of(GramSystem.build(_psd(rng), 0.2), np.zeros(3))


class TestSymEigs:
    def test_diag(self):
        assert np.allclose(sym_eigs(np.diag([3.0, 1.0, 2.0]), 2), [3, 2])

    def test_identity(self):
        assert np.allclose(sym_eigs(np.eye(5)), 1)

    def test_wishart(self, rng):
        A = rng.normal(size=(30, 6))
        W = A.T @ A
        assert np.allclose(sym_eigs(W), np.sort(np.linalg.eigvals(W).real)[::-1], atol=1e-8)

    def test_reconstruction(self, rng):
        A = rng.normal(size=(6, 6))
        W = A @ A.T
        w, U = sym_eigs(W, 3, vectors=True)
        rest = sym_eigs(W)[3]
        assert np.linalg.norm(W - U @ np.diag(w) @ U.T, 2) <= rest + 1e-9

    def test_asymmetric(self):
        with pytest.raises(SymmetryError):
            sym_eigs(np.array([[1.0, 2.0], [0.0, 1.0]]))
