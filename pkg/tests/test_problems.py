"""
Tests for synthetic linear inverse problems
"""

import math

import numpy as np
import pytest

from untrained_prior.errors import ShapeMismatchError
from untrained_prior.problems import (
    LinearInverseProblem,
    NoiseModel,
    SourceElement,
    SpectralDesign,
    add_noise,
    build_forward,
    build_problem,
    make_truth,
    source_project,
)


class TestSpectralDesign:
    """Operator spectra and the random conjugator"""

    def test_aligned_design_uses_identity(self, aligned_design):
        assert np.array_equal(aligned_design.H, np.eye(8))

    def test_conjugator_is_orthogonal(self, non_aligned_design):
        H = non_aligned_design.H
        assert np.allclose(H.T @ H, np.eye(8), atol=1e-12)

    def test_conjugator_is_seeded(self):
        first = SpectralDesign.create(6, 1.0, 4.0, aligned=False, seed=9)
        second = SpectralDesign.create(6, 1.0, 4.0, aligned=False, seed=9)
        other = SpectralDesign.create(6, 1.0, 4.0, aligned=False, seed=10)
        assert np.array_equal(first.H, second.H)
        assert not np.allclose(first.H, other.H)

    def test_spectra(self, aligned_design):
        assert np.allclose(aligned_design.alphas, np.arange(1, 9) ** -2.0)
        assert np.allclose(aligned_design.sigma_diag, np.arange(1, 9) ** -1.5)

    def test_invalid_dimension(self):
        with pytest.raises(ValueError, match="dimension n"):
            SpectralDesign.create(0, 1.0, 4.0, aligned=True)


class TestForwardOperator:

    def test_aligned_operator_is_diagonal(self, aligned_design):
        A = build_forward(aligned_design)
        assert np.array_equal(A, np.diag(aligned_design.alphas))

    def test_non_aligned_operator_keeps_singular_values(self, non_aligned_design):
        A = build_forward(non_aligned_design)
        assert np.allclose(A, A.T)
        assert np.allclose(np.linalg.svd(A, compute_uv=False), non_aligned_design.alphas)

    def test_nonpositive_decay_rejected(self):
        design = SpectralDesign.create(4, 1.0, 0.0, aligned=True)
        with pytest.raises(ValueError, match="decay exponent q"):
            build_forward(design)


class TestSourceCondition:

    def test_truth_is_a_source_element(self, non_aligned_design):
        A = build_forward(non_aligned_design)
        assert np.allclose(make_truth(A), source_project(A, SourceElement.ones(8)))

    def test_zero_smoothness_returns_source(self):
        src = SourceElement(nu=0.0, rho=2.0, v_src=np.array([1.0, 1.0]))
        projected = source_project(np.eye(2), src)
        assert np.array_equal(projected, src.v_src)
        assert projected is not src.v_src

    def test_fractional_power(self):
        A = np.diag([4.0, 1.0])
        src = SourceElement(nu=1.0, rho=2.0, v_src=np.array([1.0, 1.0]))
        # (A^T A)^{1/2} = diag(4, 1)
        assert np.allclose(source_project(A, src), [4.0, 1.0])

    def test_negative_smoothness_rejected(self):
        src = SourceElement(nu=-1.0, rho=1.0, v_src=np.zeros(2))
        with pytest.raises(ValueError, match="nonnegative"):
            source_project(np.eye(2), src)

    def test_source_norm_bounded_by_rho(self):
        with pytest.raises(ValueError, match="exceeds rho"):
            SourceElement(nu=1.0, rho=1.0, v_src=np.array([1.0, 1.0]))


class TestNoise:

    def test_noise_level_from_snr(self):
        y = np.array([3.0, 4.0, 0.0, 0.0])
        noise = NoiseModel.from_snr(y, 5.0)
        assert noise.sigma_noise == pytest.approx(5.0 / (2.0 * 5.0))

    def test_infinite_snr_is_noise_free(self):
        noise = NoiseModel.from_snr(np.ones(3), math.inf)
        assert noise.sigma_noise == 0.0
        y_eps, level = add_noise(np.ones(3), noise, seed=1)
        assert level == 0.0
        assert np.array_equal(y_eps, np.ones(3))

    @pytest.mark.parametrize("snr", [0.0, -1.0])
    def test_nonpositive_snr_rejected(self, snr):
        with pytest.raises(ValueError, match="snr must be positive"):
            NoiseModel.from_snr(np.ones(3), snr)

    def test_noise_is_seeded(self):
        noise = NoiseModel(snr=1.0, sigma_noise=0.5)
        first, level = add_noise(np.zeros(5), noise, seed=4)
        second, _ = add_noise(np.zeros(5), noise, seed=4)
        assert np.array_equal(first, second)
        assert level == pytest.approx(np.linalg.norm(first))

    def test_noise_norm_concentrates(self):
        m, sigma = 64, 0.5
        noise = NoiseModel(snr=1.0, sigma_noise=sigma)
        ratios = np.array([add_noise(np.zeros(m), noise, seed=seed)[1] for seed in range(100)]) / (sigma * math.sqrt(m))
        assert ratios.mean() == pytest.approx(1.0, abs=0.05)
        assert np.all((ratios > 0.6) & (ratios < 1.4))


class TestLinearInverseProblem:

    def test_build_problem_records_provenance(self, aligned_design, small_problem):
        assert small_problem.seeds == {'operator': 3, 'noise': 11}
        assert small_problem.snr == 9.0
        assert small_problem.source.nu == 2.0
        assert np.allclose(small_problem.y, small_problem.A @ small_problem.x_dag)
        assert small_problem.noise_level == pytest.approx(np.linalg.norm(small_problem.noise_vector))

    def test_noise_direction_is_unit(self, small_problem):
        assert np.linalg.norm(small_problem.noise_direction) == pytest.approx(1.0)

    def test_noise_free_direction_is_zero(self, aligned_design):
        problem = build_problem(aligned_design, math.inf, noise_seed=0)
        assert not np.any(problem.noise_direction)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError, match="y_eps"):
            LinearInverseProblem(A=np.eye(3), x_dag=np.ones(3), y=np.ones(3), y_eps=np.ones(2), noise_level=0.0)

    def test_fixture_file(self, small_problem, tmp_path):
        path = tmp_path / "problem.yaml"
        small_problem.save_fixture(path)
        loaded = LinearInverseProblem.load_fixture(path)
        assert np.allclose(loaded.A, small_problem.A)
        assert np.allclose(loaded.y_eps, small_problem.y_eps)
        assert loaded.seeds == small_problem.seeds
        assert loaded.source.rho == pytest.approx(small_problem.source.rho)

    def test_fixture_with_inconsistent_data_rejected(self):
        data = {'A': [[1.0]], 'x_dag': [1.0], 'y': [5.0], 'y_eps': [5.0], 'noise_level': 0.0}
        with pytest.raises(ValueError, match=r"A x_dag - y"):
            LinearInverseProblem.from_dict(data)

    def test_fixture_with_wrong_noise_level_rejected(self, small_problem, tmp_path):
        data = small_problem.to_dict()
        data['noise_level'] = 3.0 * small_problem.noise_level
        with pytest.raises(ValueError, match=r"noise_level == \|\|y_eps - y\|\|"):
            LinearInverseProblem.from_dict(data)

    def test_negative_noise_level_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            LinearInverseProblem(A=np.eye(2), x_dag=np.ones(2), y=np.ones(2), y_eps=np.ones(2), noise_level=-1.0)
