"""Kernel, mean-function, and low-rank factor tests against elementwise oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gpgrn import kernels
from gpgrn.kernels import (
    DEFAULT_JITTER_SCALE,
    KernelHyperparams,
    PseudoInputSet,
    gram_matrix,
    lipschitz_bound,
    mean_function,
    pseudo_gram_factors,
    se_kernel_eval,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
nonneg = st.floats(0, 5, allow_nan=False, allow_infinity=False)


def params_strategy(n):
    return st.builds(
        KernelHyperparams,
        signal_var=st.floats(0.1, 10),
        ard_weights=arrays(np.float64, n, elements=nonneg),
        decay=st.floats(0, 3),
        basal=st.floats(0, 3),
    )


class TestEval:
    def test_matches_formula(self):
        p = KernelHyperparams(2.0, np.array([0.5, 1.5]))
        x = np.array([1.0, -1.0])
        z = np.array([0.0, 2.0])
        expected = 2.0 * np.exp(-(0.5 * 1.0 + 1.5 * 9.0))
        assert se_kernel_eval(p, x, z) == pytest.approx(expected, rel=1e-12)

    def test_diagonal_value(self):
        p = KernelHyperparams(3.3, np.array([1.0]))
        assert se_kernel_eval(p, np.array([0.7]), np.array([0.7])) == pytest.approx(3.3)

    def test_shape_validation(self):
        p = KernelHyperparams(1.0, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            se_kernel_eval(p, np.zeros(3), np.zeros(2))

    @given(params_strategy(3), arrays(np.float64, 3, elements=finite),
           arrays(np.float64, 3, elements=finite))
    def test_symmetry_and_bounds(self, p, x, z):
        kxz = se_kernel_eval(p, x, z)
        assert kxz == pytest.approx(se_kernel_eval(p, z, x), rel=1e-12)
        assert 0 < kxz <= p.signal_var + 1e-12


class TestMean:
    def test_linear_form(self):
        p = KernelHyperparams(1.0, np.array([1.0, 1.0]), decay=2.0, basal=0.5)
        assert mean_function(p, np.array([3.0, 7.0]), 1) == pytest.approx(0.5 - 14.0)

    def test_broadcasts_over_rows(self):
        p = KernelHyperparams(1.0, np.array([1.0, 1.0]), decay=1.0, basal=1.0)
        X = np.array([[0.0, 1.0], [0.0, 2.0]])
        np.testing.assert_allclose(mean_function(p, X, 1), [0.0, -1.0])


class TestGram:
    @given(params_strategy(2),
           arrays(np.float64, (4, 2), elements=finite),
           arrays(np.float64, (3, 2), elements=finite))
    @settings(max_examples=50)
    def test_matches_elementwise_oracle(self, p, A, B):
        K = gram_matrix(p, A, B)
        for i in range(A.shape[0]):
            for j in range(B.shape[0]):
                assert K[i, j] == pytest.approx(se_kernel_eval(p, A[i], B[j]), rel=1e-9, abs=1e-12)

    @given(params_strategy(3), arrays(np.float64, (5, 3), elements=finite))
    @settings(max_examples=50)
    def test_square_gram_symmetric_psd(self, p, A):
        K = gram_matrix(p, A)
        np.testing.assert_allclose(K, K.T, atol=1e-10)
        assert np.min(np.linalg.eigvalsh(K)) > -1e-8 * p.signal_var

    def test_zero_weight_coordinate_is_ignored(self):
        rng = np.random.default_rng(0)
        p = KernelHyperparams(1.5, np.array([0.7, 0.0, 1.2]))
        A = rng.normal(size=(6, 3))
        B = A.copy()
        B[:, 1] += rng.normal(size=6) * 10  # perturb the gated-out regulator
        np.testing.assert_allclose(gram_matrix(p, A, A), gram_matrix(p, B, B), rtol=1e-12)

    def test_column_count_validated(self):
        p = KernelHyperparams(1.0, np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            gram_matrix(p, np.zeros((3, 4)))


class TestLipschitz:
    @given(params_strategy(3),
           arrays(np.float64, 3, elements=finite),
           arrays(np.float64, 3, elements=finite))
    @settings(max_examples=100)
    def test_variance_drop_bound(self, p, x, z):
        # k(x,x) - k(x,z) <= signal_var (1 - exp(-sum w d^2)) <= L ||x - z||^2
        drop = se_kernel_eval(p, x, x) - se_kernel_eval(p, x, z)
        bound = lipschitz_bound(p) * float(np.sum((x - z) ** 2))
        assert drop <= bound + 1e-9


class TestPseudoFactors:
    def test_jitter_on_diagonal(self):
        rng = np.random.default_rng(1)
        p = KernelHyperparams(2.0, np.array([1.0, 0.5]))
        pts = rng.normal(size=(4, 2))
        _, K_pp = pseudo_gram_factors(p, rng.normal(size=(6, 2)), PseudoInputSet(pts))
        expected = gram_matrix(p, pts) + DEFAULT_JITTER_SCALE * p.signal_var * np.eye(4)
        np.testing.assert_allclose(K_pp, expected, rtol=1e-12)

    def test_explicit_jitter_respected(self):
        rng = np.random.default_rng(2)
        p = KernelHyperparams(1.0, np.array([1.0]))
        pts = rng.normal(size=(3, 1))
        _, K_pp = pseudo_gram_factors(p, rng.normal(size=(5, 1)), PseudoInputSet(pts, jitter=1e-3))
        np.testing.assert_allclose(np.diag(K_pp), 1.0 + 1e-3, rtol=1e-12)

    def test_cross_block_matches_gram(self):
        rng = np.random.default_rng(3)
        p = KernelHyperparams(1.0, np.array([0.3, 0.9]))
        states = rng.normal(size=(7, 2))
        pts = rng.normal(size=(3, 2))
        K_xp, _ = pseudo_gram_factors(p, states, PseudoInputSet(pts))
        np.testing.assert_allclose(K_xp, gram_matrix(p, states, pts), rtol=1e-12)


class TestValidation:
    def test_negative_signal_var(self):
        with pytest.raises(ValueError):
            KernelHyperparams(-1.0, np.array([1.0]))

    def test_negative_weights(self):
        with pytest.raises(ValueError):
            KernelHyperparams(1.0, np.array([-0.1]))

    def test_negative_decay(self):
        with pytest.raises(ValueError):
            KernelHyperparams(1.0, np.array([1.0]), decay=-1.0)

    def test_empty_pseudo_set(self):
        with pytest.raises(ValueError):
            PseudoInputSet(np.zeros((0, 2)))
