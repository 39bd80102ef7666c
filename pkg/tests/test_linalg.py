import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsaddle.linalg import (
    LinalgError,
    frobenius_norm,
    l1_norm,
    l2_norm,
    linf_norm,
    mat_transpose_vec,
    mat_vec,
    nuclear_norm,
    spectral_norm,
    svd_reconstruct,
    thin_svd,
    thin_svd_stack,
)


def naive_mat_vec(A, x):
    # deliberately independent double-loop oracle
    n, m = A.shape
    out = [0.0] * n
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += A[i][j] * x[j]
        out[i] = acc
    return np.array(out)


class TestMatVec:
    def test_identity(self):
        assert np.array_equal(mat_vec(np.eye(2), [3.0, -1.0]), [3.0, -1.0])

    def test_scalar(self):
        assert mat_vec([[2.0]], [0.5])[0] == 1.0

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(7)
        A = rng.uniform(-1, 1, (3, 2))
        x = rng.uniform(-1, 1, 2)
        assert np.abs(mat_vec(A, x) - naive_mat_vec(A, x)).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(LinalgError):
            mat_vec(np.eye(2), [1.0, 2.0, 3.0])


class TestMatTransposeVec:
    def test_identity(self):
        y = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(mat_transpose_vec(np.eye(3), y), y)

    def test_hand_sum(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(mat_transpose_vec(A, [1.0, 1.0]), [4.0, 6.0])

    def test_zero_matrix(self):
        assert np.array_equal(mat_transpose_vec(np.zeros((2, 3)), [1.0, 2.0]), np.zeros(3))

    def test_dimension_mismatch(self):
        with pytest.raises(LinalgError):
            mat_transpose_vec(np.zeros((2, 3)), [1.0, 2.0, 3.0])


class TestThinSvd:
    def test_identity(self):
        res = thin_svd(np.eye(3))
        assert np.array_equal(res.s, np.ones(3))

    def test_diagonal(self):
        res = thin_svd(np.diag([3.0, 0.0]))
        assert np.array_equal(res.s, [3.0, 0.0])

    def test_random_reconstruction_and_eigen_oracle(self):
        rng = np.random.default_rng(11)
        W = rng.uniform(-1, 1, (4, 3))
        res = thin_svd(W)
        assert np.abs(svd_reconstruct(res) - W).max() <= 1e-8 * max(1.0, frobenius_norm(W))
        # independent oracle: singular values = sqrt(eigenvalues of W^T W)
        eig = np.sort(np.linalg.eigvalsh(W.T @ W))[::-1]
        assert np.abs(res.s - np.sqrt(np.maximum(eig, 0.0))).max() < 1e-8

    @pytest.mark.parametrize("shape", [(1, 1), (5, 2), (2, 5), (6, 6), (1, 4), (4, 1), (12, 5)])
    def test_orthonormal_factors(self, shape):
        rng = np.random.default_rng(sum(shape))
        W = rng.uniform(-1, 1, shape)
        res = thin_svd(W)
        r = min(shape)
        assert res.U.shape == (shape[0], r)
        assert res.V.shape == (shape[1], r)
        assert np.abs(res.U.T @ res.U - np.eye(r)).max() < 1e-10
        assert np.abs(res.V.T @ res.V - np.eye(r)).max() < 1e-10
        assert np.all(np.diff(res.s) <= 0) and np.all(res.s >= 0)

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        res = thin_svd(rng.uniform(-1, 1, (6, 4)))
        for j in range(4):
            i = np.argmax(np.abs(res.U[:, j]))
            assert res.U[i, j] >= 0

    def test_value_idempotent(self):
        rng = np.random.default_rng(5)
        W = rng.uniform(-1, 1, (7, 4))
        a, b = thin_svd(W), thin_svd(W)
        assert a.U.tobytes() == b.U.tobytes()
        assert a.s.tobytes() == b.s.tobytes()
        assert a.V.tobytes() == b.V.tobytes()

    def test_rank_deficient_orthonormal(self):
        rng = np.random.default_rng(9)
        W = rng.uniform(-1, 1, (9, 3)) @ rng.uniform(-1, 1, (3, 5))
        res = thin_svd(W)
        assert np.abs(res.U.T @ res.U - np.eye(5)).max() < 1e-10
        assert np.abs(svd_reconstruct(res) - W).max() <= 1e-8 * max(1.0, frobenius_norm(W))

    def test_nonfinite_rejected(self):
        with pytest.raises(LinalgError):
            thin_svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_stack_matches_single_bitwise(self):
        rng = np.random.default_rng(13)
        Ws = rng.uniform(-1, 1, (5, 6, 4))
        U, s, V = thin_svd_stack(Ws)
        for i in range(5):
            res = thin_svd(Ws[i])
            assert res.U.tobytes() == U[i].tobytes()
            assert res.s.tobytes() == s[i].tobytes()
            assert res.V.tobytes() == V[i].tobytes()


class TestNorms:
    def test_l1(self):
        assert l1_norm([1.0, -2.0, 3.0]) == 6.0

    def test_spectral_identity(self):
        assert spectral_norm(np.eye(2)) == 1.0

    def test_nuclear_matches_eigen_oracle(self):
        rng = np.random.default_rng(17)
        W = rng.uniform(-1, 1, (3, 3))
        eig = np.linalg.eigvalsh(W.T @ W)
        assert abs(nuclear_norm(W) - np.sqrt(np.maximum(eig, 0.0)).sum()) < 1e-8

    def test_linf_l2(self):
        assert linf_norm([1.0, -4.0, 2.0]) == 4.0
        assert l2_norm([3.0, 4.0]) == 5.0

    def test_nonfinite_rejected(self):
        with pytest.raises(LinalgError):
            l1_norm([np.inf])

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nuclear_dominates_spectral(self, n, m, seed):
        W = np.random.default_rng(seed).uniform(-1, 1, (n, m))
        nuc, spec = nuclear_norm(W), spectral_norm(W)
        assert nuc >= spec - 1e-12
        assert spec >= 0

    def test_nuclear_equals_spectral_iff_rank_one(self):
        rng = np.random.default_rng(23)
        u, v = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 3)
        W1 = np.outer(u, v)
        assert abs(nuclear_norm(W1) - spectral_norm(W1)) < 1e-8
        W2 = rng.uniform(-1, 1, (4, 3))  # full rank almost surely
        s = thin_svd(W2).s
        assert (s >= 1e-8).sum() > 1
        assert nuclear_norm(W2) > spectral_norm(W2) + 1e-8


def test_operator_norm_bound():
    rng = np.random.default_rng(29)
    for _ in range(100):
        n, m = rng.integers(1, 6, 2)
        W = rng.uniform(-1, 1, (n, m))
        x = rng.uniform(-1, 1, m)
        assert l2_norm(W @ x) <= spectral_norm(W) * l2_norm(x) + 1e-10
