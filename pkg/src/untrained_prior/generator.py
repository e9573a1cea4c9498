"""
Two-layer convolutional generator G(C) = ReLU(UC) v

The generator maps a weight matrix C (n x k) to an n-vector through a fixed
mixing layer U (n x n) and a fixed output vector v with entries +-1/sqrt(k).
Its Jacobian with respect to C is never assembled at full scale: it is
exposed through apply, adjoint and Gram operators built from the ReLU
activation mask D = 1[UC > 0]. The derivative of ReLU at 0 is taken to be 0.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy import linalg

from .errors import ShapeMismatchError
from .linalg import EIGEN_TOLERANCE, power_iteration, psd_sqrt, sorted_eigh


def default_output_weights(k: int) -> np.ndarray:
    """Output vector with the first k//2 entries +1/sqrt(k) and the rest -1/sqrt(k)."""
    if k < 1:
        raise ValueError(f"width k must be positive, got {k}")
    v = np.full(k, 1.0 / np.sqrt(k))
    v[k // 2:] *= -1.0
    return v


@dataclass(frozen=True, eq=False)
class ConvGenerator:
    """Fixed layers of the generator; only C is trained."""
    U: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            raise ShapeMismatchError("mixing matrix U", (U.shape[0], U.shape[0]), U.shape)
        if v.ndim != 1 or v.size == 0:
            raise ShapeMismatchError("output vector v", (max(v.size, 1),), v.shape)
        magnitude = 1.0 / np.sqrt(v.size)
        if not np.allclose(np.abs(v), magnitude, rtol=0.0, atol=1e-12):
            raise ValueError(f"entries of v must have magnitude 1/sqrt(k) = {magnitude:.6g}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "v", v)

    @classmethod
    def create(cls, U: np.ndarray, k: int, v: Optional[np.ndarray] = None) -> "ConvGenerator":
        return cls(U=U, v=default_output_weights(k) if v is None else v)

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def k(self) -> int:
        return self.v.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n, self.k


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Generator parameters, with the (omega, seed) they were drawn from."""
    C: np.ndarray
    provenance: Optional[Tuple[float, object]] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.C.shape


Weights = Union[WeightMatrix, np.ndarray]


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Population covariance Sigma(U) = E[J(C) J(C)^T] with its eigenpairs.

    Eigenvalues are nonincreasing and eigenvectors are the columns of
    ``eigenvectors``.
    """
    sigma: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, sigma: np.ndarray) -> "CovarianceModel":
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ShapeMismatchError("covariance", (sigma.shape[0], sigma.shape[0]), sigma.shape)
        scale = max(1.0, float(np.max(np.abs(sigma))) if sigma.size else 1.0)
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("covariance matrix is not symmetric")
        eigenvalues, eigenvectors = sorted_eigh(sigma)
        return cls(sigma=(sigma + sigma.T) / 2.0, eigenvalues=eigenvalues, eigenvectors=eigenvectors)

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    def check_psd(self) -> None:
        scale = max(1.0, float(self.eigenvalues[0]))
        smallest = float(self.eigenvalues[-1])
        if smallest < -EIGEN_TOLERANCE * scale:
            raise ValueError(f"covariance is not PSD: most negative eigenvalue {smallest:.6g}")


def _weights(gen: ConvGenerator, C: Weights, what: str = "weights") -> np.ndarray:
    array = C.C if isinstance(C, WeightMatrix) else np.asarray(C, dtype=np.float64)
    if array.shape != gen.shape:
        raise ShapeMismatchError(what, gen.shape, array.shape)
    return array


def activation_mask(gen: ConvGenerator, C: Weights) -> np.ndarray:
    """ReLU derivative pattern 1[UC > 0] as a float n x k array."""
    return (gen.U @ _weights(gen, C) > 0.0).astype(np.float64)


def forward(gen: ConvGenerator, C: Weights) -> np.ndarray:
    """Evaluate ReLU(UC) v."""
    return np.maximum(gen.U @ _weights(gen, C), 0.0) @ gen.v


def jacobian_apply(gen: ConvGenerator, C: Weights, direction: np.ndarray,
                   mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Directional derivative sum_l v_l D_l U d_l of the generator at C."""
    direction = _weights(gen, direction, "direction")
    if mask is None:
        mask = activation_mask(gen, C)
    return (mask * (gen.U @ direction)) @ gen.v


def jacobian_adjoint(gen: ConvGenerator, C: Weights, r: np.ndarray,
                     mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply J(C)^T to an n-vector; column l of the result is v_l U^T D_l r."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (gen.n,):
        raise ShapeMismatchError("output-space vector", (gen.n,), r.shape)
    if mask is None:
        mask = activation_mask(gen, C)
    return gen.U.T @ (mask * np.outer(r, gen.v))


def jacobian_gram(gen: ConvGenerator, C: Weights) -> np.ndarray:
    """J(C) J(C)^T = (UU^T) * (D diag(v^2) D^T), entrywise product."""
    mask = activation_mask(gen, C)
    overlap = (mask * gen.v ** 2) @ mask.T
    return (gen.U @ gen.U.T) * overlap


def jacobian_norm(gen: ConvGenerator, C: Weights) -> float:
    return float(np.sqrt(power_iteration(jacobian_gram(gen, C))))


def jacobian_distance(gen: ConvGenerator, C: Weights, C_ref: Weights) -> float:
    """Operator norm of J(C) - J(C_ref); only sign flips of UC contribute."""
    delta = activation_mask(gen, C) - activation_mask(gen, C_ref)
    if not np.any(delta):
        return 0.0
    gram = (gen.U @ gen.U.T) * ((delta * gen.v ** 2) @ delta.T)
    return float(np.sqrt(power_iteration(gram)))


def jacobian_matrix(gen: ConvGenerator, C: Weights) -> np.ndarray:
    """Explicit n x (n k) Jacobian; column l*n + i is the derivative along C[i, l].

    Only meant for small sizes.
    """
    mask = activation_mask(gen, C)
    blocks = [gen.v[l] * (mask[:, l, None] * gen.U) for l in range(gen.k)]
    return np.hstack(blocks)


def sigma_closed_form(U: np.ndarray) -> CovarianceModel:
    """Closed-form E[J J^T] for Gaussian C.

    Entry (i, j) is (u_i, u_j)/2 * (1 - arccos(cos angle(u_i, u_j))/pi); the
    diagonal is exactly ||u_i||^2/2.
    """
    U = np.asarray(U, dtype=np.float64)
    gram = U @ U.T
    norms = np.sqrt(np.diag(gram))
    zero_rows = np.flatnonzero(norms == 0.0)
    if zero_rows.size:
        raise ValueError(f"row {int(zero_rows[0])} of U is zero; the closed form is undefined")
    cosines = np.clip(gram / np.outer(norms, norms), -1.0, 1.0)
    sigma = gram / 2.0 * (1.0 - np.arccos(cosines) / np.pi)
    np.fill_diagonal(sigma, norms ** 2 / 2.0)
    return CovarianceModel.from_matrix((sigma + sigma.T) / 2.0)


def reference_jacobian(cov: CovarianceModel) -> np.ndarray:
    """Symmetric PSD square root J of Sigma, so that J J^T = Sigma."""
    cov.check_psd()
    roots = np.sqrt(np.clip(cov.eigenvalues, 0.0, None))
    return (cov.eigenvectors * roots) @ cov.eigenvectors.T


def sample_initial_weights(gen: ConvGenerator, omega: float, seed) -> WeightMatrix:
    """Draw C0 with i.i.d. N(0, omega^2) entries from a seeded stream."""
    if omega < 0:
        raise ValueError(f"omega must be nonnegative, got {omega}")
    rng = np.random.default_rng(seed)
    C = omega * rng.standard_normal(gen.shape)
    return WeightMatrix(C=C, provenance=(float(omega), seed))


def spectral_mixing_matrix(n: int, p: float) -> np.ndarray:
    """Diagonal U with rows of norm sqrt(2 i^-p); Sigma(U) is then diag(i^-p)."""
    index = np.arange(1, n + 1, dtype=np.float64)
    return np.diag(np.sqrt(2.0 * index ** (-p)))


def circulant_mixing_matrix(kernel: np.ndarray) -> np.ndarray:
    """Circular convolution with ``kernel`` as a dense matrix."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if not np.any(kernel):
        raise ValueError("convolution kernel is identically zero")
    return linalg.circulant(kernel)


@dataclass(frozen=True, eq=False)
class LiftedJacobian:
    """Reference Jacobian in parameter space.

    J = Sigma^{1/2} K0^{+1/2} J(C0) with K0 = J(C0) J(C0)^T. It acts on the
    same n x k parameters as the generator Jacobian, satisfies J J^T = Sigma
    whenever K0 is nonsingular, and ||J(C0) - J|| = ||K0^{1/2} - Sigma^{1/2}||.
    """
    gen: ConvGenerator
    C0: np.ndarray
    mixing: np.ndarray
    initial_kernel: np.ndarray
    mask: np.ndarray = field(repr=False)

    @classmethod
    def from_initial(cls, gen: ConvGenerator, C0: Weights, cov: CovarianceModel) -> "LiftedJacobian":
        C0 = _weights(gen, C0)
        kernel = jacobian_gram(gen, C0)
        mixing = reference_jacobian(cov) @ psd_sqrt(kernel, inverse=True)
        rank = int(np.sum(sorted_eigh(kernel)[0] > EIGEN_TOLERANCE * max(1.0, float(np.max(np.abs(kernel))))))
        if rank < gen.n:
            logger.warning(f"initial kernel is singular (rank {rank} < {gen.n}); lifted J J^T differs from Sigma")
        return cls(gen=gen, C0=C0, mixing=mixing, initial_kernel=kernel, mask=activation_mask(gen, C0))

    def apply(self, direction: np.ndarray) -> np.ndarray:
        return self.mixing @ jacobian_apply(self.gen, self.C0, direction, mask=self.mask)

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        return jacobian_adjoint(self.gen, self.C0, self.mixing.T @ r, mask=self.mask)

    @property
    def kernel(self) -> np.ndarray:
        kernel = self.mixing @ self.initial_kernel @ self.mixing.T
        return (kernel + kernel.T) / 2.0

    def distance_to_initial(self) -> float:
        residual = np.eye(self.gen.n) - self.mixing
        gram = residual @ self.initial_kernel @ residual.T
        return float(np.sqrt(power_iteration((gram + gram.T) / 2.0)))
