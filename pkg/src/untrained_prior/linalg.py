"""
Dense linear algebra helpers shared by the generator, dynamics and theory code
"""

from typing import Tuple

import numpy as np
from loguru import logger
from scipy import linalg

POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_MAX_ITER = 10_000
EIGEN_TOLERANCE = 1e-12


def power_iteration(matrix: np.ndarray, tol: float = POWER_ITERATION_TOL,
                    max_iter: int = POWER_ITERATION_MAX_ITER, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative to
    its current value. A zero matrix returns 0.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if not np.any(matrix):
        return 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(matrix.shape[0])
    x /= np.linalg.norm(x)

    estimate = 0.0
    for iteration in range(1, max_iter + 1):
        y = matrix @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            # start vector landed in the null space
            x = rng.standard_normal(matrix.shape[0])
            x /= np.linalg.norm(x)
            continue
        new_estimate = float(x @ y)
        x = y / y_norm
        if abs(new_estimate - estimate) <= tol * abs(new_estimate):
            logger.debug(f"power iteration converged after {iteration} iterations")
            return max(new_estimate, 0.0)
        estimate = new_estimate

    logger.warning(f"power iteration hit the iteration cap ({max_iter}); estimate {estimate:.6g}")
    return max(estimate, 0.0)


def spectral_norm(matrix: np.ndarray, seed: int = 0) -> float:
    """Operator norm of an arbitrary dense matrix via its Gram matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    gram = matrix @ matrix.T if matrix.shape[0] <= matrix.shape[1] else matrix.T @ matrix
    return float(np.sqrt(power_iteration(gram, seed=seed)))


def symmetric_norm(matrix: np.ndarray, seed: int = 0) -> float:
    """Operator norm of a symmetric, possibly indefinite, matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    return float(np.sqrt(power_iteration(matrix @ matrix, seed=seed)))


def sorted_eigh(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with eigenvalues in nonincreasing order.

    Each eigenvector is signed so that its largest-magnitude entry is
    positive, which makes the basis reproducible across runs.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    eigenvalues, eigenvectors = linalg.eigh((matrix + matrix.T) / 2.0)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]

    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, np.arange(eigenvectors.shape[1])])
    signs[signs == 0] = 1.0
    return eigenvalues, eigenvectors * signs


def psd_sqrt(matrix: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric square root of a PSD matrix, or the pseudo-inverse root.

    Eigenvalues below the relative tolerance are treated as zero; the
    inverse root leaves those directions out.
    """
    eigenvalues, eigenvectors = sorted_eigh(matrix)
    scale = max(1.0, float(eigenvalues[0]) if eigenvalues.size else 1.0)
    kept = eigenvalues > EIGEN_TOLERANCE * scale
    roots = np.zeros_like(eigenvalues)
    if inverse:
        roots[kept] = 1.0 / np.sqrt(eigenvalues[kept])
    else:
        roots[kept] = np.sqrt(eigenvalues[kept])
    return (eigenvectors * roots) @ eigenvectors.T
