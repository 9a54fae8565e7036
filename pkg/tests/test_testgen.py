"""
Tests for matrix pairs with known GSVD and the generated regularization operators
"""

import numpy as np
import pytest

from jbdlab.errors import DomainError
from jbdlab.sparse import SparseMatrix
from jbdlab.testgen import (
    BUILTIN_PAIRS,
    ac_ls_spectrum,
    build_pair,
    example1_spectrum,
    example2_spectrum,
    make_first_derivative,
    make_pair_cs_spectrum,
    make_scaled_diag,
    reference_gsvd,
    sine_orthogonal,
)


class TestSineOrthogonal:
    """Test the symmetric orthogonal mixing matrix"""

    def test_symmetric_orthogonal(self):
        D = sine_orthogonal(30)
        np.testing.assert_allclose(D, D.T, atol=1e-15)
        np.testing.assert_allclose(D @ D, np.eye(30), atol=1e-13)

    def test_invalid_order(self):
        with pytest.raises(DomainError):
            sine_orthogonal(0)


class TestSpectra:
    """Test the builtin c-value spectra"""

    def test_ac_ls(self):
        c = ac_ls_spectrum(200)
        assert c.shape == (200,)
        assert c[0] == pytest.approx(0.75)
        assert c[-1] == pytest.approx(101.0 / 400.0)
        assert np.all(np.diff(c) < 0)

    def test_example1_doubles(self):
        c = example1_spectrum(500)
        assert c.shape == (500,)
        assert np.count_nonzero(c == 0.99) == 2
        assert np.count_nonzero(c == 0.95) == 2
        assert np.count_nonzero(c == 0.0) == 2
        assert c[6] == pytest.approx(0.80)
        assert c[494] == pytest.approx(0.30)
        assert np.all(np.diff(c) <= 0)

    def test_example2_has_infinite_value(self):
        c = example2_spectrum(100)
        assert c[0] == 1.0
        assert c.shape == (100,)
        pair = build_pair("example2", 100)
        assert pair.s[0] == 0.0

    def test_too_small(self):
        with pytest.raises(DomainError):
            example1_spectrum(11)
        with pytest.raises(DomainError):
            example2_spectrum(5)


class TestConstructedPairs:
    """Test A = C D, L = S D"""

    @pytest.mark.parametrize("name", BUILTIN_PAIRS)
    def test_stack_is_orthonormal(self, name):
        pair = build_pair(name, 40)
        stacked = np.vstack([pair.A.to_dense(), pair.L.to_dense()])
        np.testing.assert_allclose(stacked.T @ stacked, np.eye(40), atol=1e-13)
        np.testing.assert_allclose(pair.c**2 + pair.s**2, 1.0, atol=1e-15)

    def test_right_vectors(self):
        """Test s_i^2 A^T A x_i = c_i^2 L^T L x_i for every pair"""
        pair = build_pair("Ac_Ls", 30)
        A, L = pair.A.to_dense(), pair.L.to_dense()
        for i in range(pair.n):
            x = pair.right_vectors[:, i]
            residual = pair.s[i] ** 2 * A.T @ (A @ x) - pair.c[i] ** 2 * L.T @ (L @ x)
            assert np.linalg.norm(residual) < 1e-13

    def test_left_vectors(self):
        pair = build_pair("Ac_Ls", 30)
        x = pair.right_vectors[:, 3]
        np.testing.assert_allclose(pair.A.to_dense() @ x, pair.c[3] * pair.left_vector_a(3), atol=1e-14)
        np.testing.assert_allclose(pair.L.to_dense() @ x, pair.s[3] * pair.left_vector_l(3), atol=1e-14)

    def test_largest(self):
        c, s, x = build_pair("example1", 50).largest()
        assert c == 0.99
        assert s == pytest.approx(np.sqrt(1 - 0.99**2))
        assert x.shape == (50,)

    def test_out_of_range_values(self):
        with pytest.raises(DomainError, match="\\[0, 1\\]"):
            make_pair_cs_spectrum(3, [0.5, 1.2, 0.1])
        with pytest.raises(DomainError, match="expected 3"):
            make_pair_cs_spectrum(3, [0.5, 0.1])

    def test_unknown_name(self):
        with pytest.raises(DomainError, match="unknown builtin pair"):
            build_pair("nope", 10)


class TestGeneratedOperators:
    """Test the sparse regularization operators"""

    def test_first_derivative(self):
        L = make_first_derivative(4)
        np.testing.assert_array_equal(
            L.to_dense(),
            [[1.0, -1.0, 0.0, 0.0], [0.0, 1.0, -1.0, 0.0], [0.0, 0.0, 1.0, -1.0]],
        )
        assert L.nnz == 6

    def test_first_derivative_too_small(self):
        with pytest.raises(DomainError):
            make_first_derivative(1)

    def test_scaled_diag(self):
        L = make_scaled_diag(3)
        np.testing.assert_allclose(np.diag(L.to_dense()), [0.006, 0.005, 0.004])


class TestReferenceGsvd:
    """Test the dense oracle against constructed pairs"""

    def test_recovers_constructed_spectrum(self):
        pair = build_pair("Ac_Ls", 25)
        oracle = reference_gsvd(pair.A, pair.L)
        expected_c, expected_s = pair.sorted_cs()
        np.testing.assert_allclose(oracle.c, expected_c, atol=1e-13)
        np.testing.assert_allclose(oracle.s, expected_s, atol=1e-12)

    def test_right_vectors_satisfy_pencil(self):
        rng = np.random.default_rng(2)
        A = SparseMatrix.from_dense(rng.standard_normal((12, 6)))
        L = SparseMatrix.from_dense(rng.standard_normal((8, 6)))
        oracle = reference_gsvd(A, L)
        dense_a, dense_l = A.to_dense(), L.to_dense()
        for i in range(6):
            x = oracle.right_vectors[:, i]
            residual = oracle.s[i] ** 2 * dense_a.T @ (dense_a @ x) - oracle.c[i] ** 2 * dense_l.T @ (dense_l @ x)
            assert np.linalg.norm(residual) < 1e-11 * np.linalg.norm(x)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
