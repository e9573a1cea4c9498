"""
Tests for the two-layer convolutional generator and its Jacobian operators
"""

import numpy as np
import pytest

from untrained_prior.errors import ShapeMismatchError
from untrained_prior.generator import (
    ConvGenerator,
    CovarianceModel,
    LiftedJacobian,
    WeightMatrix,
    activation_mask,
    circulant_mixing_matrix,
    default_output_weights,
    forward,
    jacobian_adjoint,
    jacobian_apply,
    jacobian_distance,
    jacobian_gram,
    jacobian_matrix,
    jacobian_norm,
    reference_jacobian,
    sample_initial_weights,
    sigma_closed_form,
    spectral_mixing_matrix,
)
from untrained_prior.linalg import psd_sqrt, symmetric_norm


def _random_generator(rng, n, k):
    U = rng.standard_normal((n, n))
    return ConvGenerator.create(U, k)


class TestConvGenerator:
    """Construction and forward evaluation"""

    def test_default_output_weights(self):
        v = default_output_weights(4)
        assert np.allclose(v, [0.5, 0.5, -0.5, -0.5])

    def test_default_output_weights_odd_width(self):
        v = default_output_weights(5)
        assert np.sum(v > 0) == 2
        assert np.allclose(np.abs(v), 1 / np.sqrt(5))

    def test_zero_width_rejected(self):
        with pytest.raises(ValueError, match="width k"):
            default_output_weights(0)

    def test_non_square_mixing_rejected(self):
        with pytest.raises(ShapeMismatchError):
            ConvGenerator.create(np.ones((3, 4)), k=4)

    def test_output_magnitude_checked(self):
        with pytest.raises(ValueError, match="magnitude"):
            ConvGenerator(U=np.eye(2), v=np.array([1.0, -1.0]))

    def test_shape_properties(self, small_generator):
        assert small_generator.n == 4
        assert small_generator.k == 16
        assert small_generator.shape == (4, 16)

    def test_forward_matches_definition(self, rng):
        gen = _random_generator(rng, 5, 12)
        C = rng.standard_normal((5, 12))
        expected = np.maximum(gen.U @ C, 0.0) @ gen.v
        assert np.allclose(forward(gen, C), expected)
        assert np.allclose(forward(gen, WeightMatrix(C)), expected)

    def test_weight_shape_checked(self, small_generator):
        with pytest.raises(ShapeMismatchError) as exc_info:
            forward(small_generator, np.zeros((4, 15)))
        assert exc_info.value.expected == (4, 16)
        assert exc_info.value.actual == (4, 15)

    def test_relu_derivative_at_zero_is_zero(self, small_generator):
        mask = activation_mask(small_generator, np.zeros((4, 16)))
        assert not np.any(mask)
        assert np.allclose(jacobian_gram(small_generator, np.zeros((4, 16))), 0.0)


class TestJacobian:
    """Apply, adjoint, Gram and distance operators"""

    def test_apply_matches_central_differences(self, rng):
        h = 1e-6
        checked = 0
        while checked < 100:
            n, k = int(rng.integers(2, 7)), int(rng.integers(2, 9)) * 2
            gen = _random_generator(rng, n, k)
            C = rng.standard_normal((n, k))
            direction = rng.standard_normal((n, k))
            # stay away from kinks so that the finite difference does not cross one
            if np.min(np.abs(gen.U @ C)) < 1e3 * h * np.max(np.abs(gen.U @ direction)):
                continue
            numeric = (forward(gen, C + h * direction) - forward(gen, C - h * direction)) / (2 * h)
            exact = jacobian_apply(gen, C, direction)
            scale = max(np.linalg.norm(exact), 1e-12)
            assert np.linalg.norm(numeric - exact) / scale <= 1e-5
            checked += 1

    @pytest.mark.parametrize("n,k", [(1, 2), (3, 4), (5, 10), (8, 16)])
    def test_gram_matches_explicit_assembly(self, rng, n, k):
        gen = _random_generator(rng, n, k)
        C = rng.standard_normal((n, k))
        J = jacobian_matrix(gen, C)
        assert J.shape == (n, n * k)
        assert np.allclose(jacobian_gram(gen, C), J @ J.T, rtol=0.0, atol=1e-10)

    def test_explicit_matrix_column_layout(self, rng):
        gen = _random_generator(rng, 3, 4)
        C = rng.standard_normal((3, 4))
        direction = rng.standard_normal((3, 4))
        flat = direction.T.reshape(-1)
        assert np.allclose(jacobian_matrix(gen, C) @ flat, jacobian_apply(gen, C, direction))

    def test_adjoint_is_transpose(self, rng):
        gen = _random_generator(rng, 6, 8)
        C = rng.standard_normal((6, 8))
        direction = rng.standard_normal((6, 8))
        r = rng.standard_normal(6)
        lhs = jacobian_apply(gen, C, direction) @ r
        rhs = np.sum(direction * jacobian_adjoint(gen, C, r))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_apply_is_linear_in_direction(self, rng):
        gen = _random_generator(rng, 6, 10)
        C = rng.standard_normal((6, 10))
        d1, d2 = rng.standard_normal((2, 6, 10))
        combined = jacobian_apply(gen, C, 2.5 * d1 - 0.75 * d2)
        expected = 2.5 * jacobian_apply(gen, C, d1) - 0.75 * jacobian_apply(gen, C, d2)
        assert np.allclose(combined, expected, rtol=1e-12, atol=1e-12)

    def test_gram_is_symmetric_psd(self, rng):
        gen = _random_generator(rng, 6, 12)
        for _ in range(100):
            K = jacobian_gram(gen, rng.standard_normal((6, 12)))
            assert np.allclose(K, K.T, rtol=0.0, atol=1e-12)
            assert np.linalg.eigvalsh(K).min() >= -1e-12 * max(1.0, np.abs(K).max())

    def test_norm_bounded_by_layer_norms(self, rng):
        for _ in range(20):
            gen = _random_generator(rng, 5, 8)
            C = rng.standard_normal((5, 8))
            bound = np.linalg.norm(gen.v) * np.linalg.norm(gen.U, 2)
            assert jacobian_norm(gen, C) <= bound * (1 + 1e-8)

    @pytest.mark.parametrize("c", [1e-3, 0.5, 7.0])
    def test_gram_invariant_under_positive_scaling(self, rng, c):
        gen = _random_generator(rng, 5, 8)
        C = rng.standard_normal((5, 8))
        assert np.allclose(jacobian_gram(gen, c * C), jacobian_gram(gen, C), rtol=0.0, atol=1e-12)

    def test_adjoint_shape_checked(self, small_generator):
        with pytest.raises(ShapeMismatchError):
            jacobian_adjoint(small_generator, np.ones((4, 16)), np.ones(5))

    def test_norm_matches_dense(self, rng):
        gen = _random_generator(rng, 5, 8)
        C = rng.standard_normal((5, 8))
        expected = np.linalg.norm(jacobian_matrix(gen, C), 2)
        assert jacobian_norm(gen, C) == pytest.approx(expected, rel=1e-6)

    def test_distance_to_itself_is_zero(self, rng):
        gen = _random_generator(rng, 4, 8)
        C = rng.standard_normal((4, 8))
        assert jacobian_distance(gen, C, C) == 0.0

    def test_distance_matches_dense(self, rng):
        gen = _random_generator(rng, 5, 8)
        C = rng.standard_normal((5, 8))
        C_ref = C + 0.5 * rng.standard_normal((5, 8))
        expected = np.linalg.norm(jacobian_matrix(gen, C) - jacobian_matrix(gen, C_ref), 2)
        assert jacobian_distance(gen, C, C_ref) == pytest.approx(expected, rel=1e-6)


class TestCovariance:
    """Closed-form population covariance and its square root"""

    @pytest.mark.parametrize("p", [0.5, 1.5])
    def test_spectral_mixing_gives_diagonal_covariance(self, p):
        cov = sigma_closed_form(spectral_mixing_matrix(16, p))
        index = np.arange(1, 17)
        assert np.max(np.abs(cov.sigma - np.diag(index ** (-p)))) <= 1e-12
        assert np.allclose(cov.eigenvalues, np.sort(index ** (-p))[::-1])

    def test_zero_row_rejected(self):
        U = np.eye(3)
        U[1] = 0.0
        with pytest.raises(ValueError, match="row 1 of U is zero"):
            sigma_closed_form(U)

    def test_parallel_rows(self):
        U = np.array([[1.0, 0.0], [2.0, 0.0]])
        cov = sigma_closed_form(U)
        # identical directions: half of the Gram matrix
        assert np.allclose(cov.sigma, (U @ U.T) / 2)

    def test_monte_carlo_mean_matches_closed_form(self, rng):
        gen = _random_generator(rng, 4, 16)
        expected = sigma_closed_form(gen.U).sigma
        samples = np.array([jacobian_gram(gen, rng.standard_normal((4, 16))) for _ in range(4000)])
        mean = samples.mean(axis=0)
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        assert np.all(np.abs(mean - expected) <= 4 * stderr + 1e-12)

    @pytest.mark.slow
    def test_monte_carlo_mean_full_sample(self, rng):
        gen = _random_generator(rng, 8, 16)
        expected = sigma_closed_form(gen.U).sigma
        total = np.zeros((8, 8))
        total_sq = np.zeros((8, 8))
        count = 100_000
        for _ in range(count):
            gram = jacobian_gram(gen, rng.standard_normal((8, 16)))
            total += gram
            total_sq += gram ** 2
        mean = total / count
        stderr = np.sqrt(np.maximum(total_sq / count - mean ** 2, 0.0) * count / (count - 1) / count)
        assert np.all(np.abs(mean - expected) <= 3 * stderr + 1e-12)

    def test_reference_jacobian_squares_to_covariance(self, rng):
        cov = sigma_closed_form(rng.standard_normal((6, 6)))
        J = reference_jacobian(cov)
        assert np.allclose(J, J.T)
        assert np.allclose(J @ J.T, cov.sigma, atol=1e-12)

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ValueError, match="not symmetric"):
            CovarianceModel.from_matrix(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_indefinite_covariance_rejected(self):
        cov = CovarianceModel.from_matrix(np.diag([1.0, -0.5]))
        with pytest.raises(ValueError, match="most negative eigenvalue -0.5"):
            cov.check_psd()


class TestInitialization:
    """Seeded initial weights and mixing layers"""

    def test_same_seed_same_weights(self, small_generator):
        first = sample_initial_weights(small_generator, 0.3, seed=42)
        second = sample_initial_weights(small_generator, 0.3, seed=42)
        assert np.array_equal(first.C, second.C)
        assert first.provenance == (0.3, 42)

    def test_zero_variance(self, small_generator):
        weights = sample_initial_weights(small_generator, 0.0, seed=1)
        assert not np.any(weights.C)

    def test_negative_omega_rejected(self, small_generator):
        with pytest.raises(ValueError, match="omega"):
            sample_initial_weights(small_generator, -1.0, seed=1)

    def test_circulant_mixing(self):
        U = circulant_mixing_matrix([1.0, 2.0, 0.0])
        assert np.allclose(U[:, 0], [1.0, 2.0, 0.0])
        assert np.allclose(U[:, 1], [0.0, 1.0, 2.0])

    def test_zero_kernel_rejected(self):
        with pytest.raises(ValueError, match="identically zero"):
            circulant_mixing_matrix(np.zeros(4))


class TestLiftedJacobian:
    """Parameter-space reference Jacobian with J J^T = Sigma"""

    def setup_method(self):
        rng = np.random.default_rng(7)
        self.gen = ConvGenerator.create(rng.standard_normal((4, 4)), k=64)
        self.C0 = rng.standard_normal((4, 64))
        self.cov = sigma_closed_form(self.gen.U)
        self.lifted = LiftedJacobian.from_initial(self.gen, self.C0, self.cov)

    def test_kernel_equals_covariance(self):
        assert np.allclose(self.lifted.kernel, self.cov.sigma, atol=1e-9)

    def test_adjoint_is_transpose(self):
        rng = np.random.default_rng(8)
        direction = rng.standard_normal((4, 64))
        r = rng.standard_normal(4)
        lhs = self.lifted.apply(direction) @ r
        rhs = np.sum(direction * self.lifted.adjoint(r))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_distance_to_initial(self):
        kernel0 = jacobian_gram(self.gen, self.C0)
        expected = symmetric_norm(psd_sqrt(kernel0) - psd_sqrt(self.cov.sigma))
        assert self.lifted.distance_to_initial() == pytest.approx(expected, rel=1e-6)
