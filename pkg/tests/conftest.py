"""
Pytest configuration for untrained-prior tests

Run tests with: uv run pytest tests/
Fast subset: uv run poe test-fast
Published grid: uv run poe test-reproduction
"""

import os

import numpy as np
import pytest
from click.testing import CliRunner

from untrained_prior.experiments import ExperimentGrid
from untrained_prior.generator import ConvGenerator, sample_initial_weights, spectral_mixing_matrix
from untrained_prior.problems import SpectralDesign, build_problem


def pytest_addoption(parser):
    parser.addoption("--reproduction", action="store_true", default=False,
                     help="run the full synthetic grid against the published tables")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--reproduction"):
        return
    skip = pytest.mark.skip(reason="needs --reproduction")
    for item in items:
        if "reproduction" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """Keep thread pools small and artifacts out of the working tree"""
    os.environ.setdefault('UNTRAINED_PRIOR_THREADS', '2')
    os.environ.pop('UNTRAINED_PRIOR_OUTPUT', None)
    yield


@pytest.fixture
def runner():
    """Click test runner fixture"""
    return CliRunner()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_generator():
    """n=4, k=16 generator with the spectrum-prescribed mixing layer"""
    return ConvGenerator.create(spectral_mixing_matrix(4, 1.5), k=16)


@pytest.fixture
def aligned_design():
    return SpectralDesign.create(8, 1.5, 4.0, aligned=True, seed=3)


@pytest.fixture
def non_aligned_design():
    return SpectralDesign.create(8, 0.5, 4.0, aligned=False, seed=3)


@pytest.fixture
def small_problem(aligned_design):
    return build_problem(aligned_design, snr=9.0, noise_seed=11)


@pytest.fixture
def small_setup(aligned_design, small_problem):
    """Generator, initial weights and problem at n=8, k=256"""
    gen = ConvGenerator.create(aligned_design.mixing_matrix(), k=256)
    C0 = sample_initial_weights(gen, omega=0.05, seed=5)
    return gen, C0, small_problem


@pytest.fixture
def small_grid():
    """A grid that runs in seconds: 2 alignments x 2 roughness x 3 SNR x 2 reps"""
    return ExperimentGrid(n=8, k=64, snr_list=(1.0, 9.0, 81.0), repetitions=2, tau_max=60)


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML config file and return its path"""
    def _write(text: str, name: str = "config.yaml"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write
