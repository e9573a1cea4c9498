"""
Synthetic linear inverse problems y = A x with spectrally designed operators

A forward operator has singular values i^{-q/2}. It is either diagonal
(aligned with the generator covariance) or conjugated by a seeded random
orthogonal matrix H (non-aligned). The true solution satisfies a source
condition x = (A^T A)^{nu/2} v, and the data are perturbed by Gaussian noise
whose variance is set by a signal-to-noise ratio.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml
from loguru import logger
from scipy import linalg

from .errors import ShapeMismatchError
from .generator import spectral_mixing_matrix

# relative slack for the exact-data and noise-level relations
CONSISTENCY_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralDesign:
    """Spectral layout shared by the forward operator and the generator."""
    n: int
    p: float
    q: float
    aligned: bool
    H: np.ndarray
    seed: Optional[int] = None

    @classmethod
    def create(cls, n: int, p: float, q: float, aligned: bool, seed: Optional[int] = 0) -> "SpectralDesign":
        """Draw H = P Q^T from the SVD of a seeded Gaussian matrix (identity when aligned)."""
        if n < 1:
            raise ValueError(f"dimension n must be positive, got {n}")
        if aligned:
            H = np.eye(n)
        else:
            gaussian = np.random.default_rng(seed).standard_normal((n, n))
            left, _, right_t = linalg.svd(gaussian)
            H = left @ right_t
        return cls(n=n, p=float(p), q=float(q), aligned=bool(aligned), H=H, seed=seed)

    @property
    def index(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=np.float64)

    @property
    def alphas(self) -> np.ndarray:
        """Singular values i^{-q/2} of the forward operator."""
        return self.index ** (-self.q / 2.0)

    @property
    def sigma_diag(self) -> np.ndarray:
        """Eigenvalues i^{-p} of the generator covariance."""
        return self.index ** (-self.p)

    def mixing_matrix(self) -> np.ndarray:
        return spectral_mixing_matrix(self.n, self.p)


@dataclass(frozen=True, eq=False)
class SourceElement:
    nu: float
    rho: float
    v_src: np.ndarray

    def __post_init__(self):
        v_src = np.asarray(self.v_src, dtype=np.float64)
        if np.linalg.norm(v_src) > self.rho * (1.0 + 1e-12):
            raise ValueError(f"||v_src|| = {np.linalg.norm(v_src):.6g} exceeds rho = {self.rho:.6g}")
        object.__setattr__(self, "v_src", v_src)

    @classmethod
    def ones(cls, n: int, nu: float = 2.0) -> "SourceElement":
        return cls(nu=nu, rho=math.sqrt(n), v_src=np.ones(n))


@dataclass(frozen=True)
class NoiseModel:
    snr: float
    sigma_noise: float

    @classmethod
    def from_snr(cls, y: np.ndarray, snr: float) -> "NoiseModel":
        """Per-entry standard deviation with sigma^2 = ||y||^2 / (m SNR^2)."""
        if not snr > 0:
            raise ValueError(f"snr must be positive, got {snr}")
        y = np.asarray(y, dtype=np.float64)
        if math.isinf(snr):
            return cls(snr=snr, sigma_noise=0.0)
        return cls(snr=float(snr), sigma_noise=float(np.linalg.norm(y) / (math.sqrt(y.size) * snr)))


@dataclass(eq=False)
class LinearInverseProblem:
    A: np.ndarray
    x_dag: np.ndarray
    y: np.ndarray
    y_eps: np.ndarray
    noise_level: float
    seeds: Dict[str, Optional[int]] = field(default_factory=dict)
    snr: Optional[float] = None
    source: Optional[SourceElement] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        m, n = self.A.shape
        for name, expected in (("x_dag", n), ("y", m), ("y_eps", m)):
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.shape != (expected,):
                raise ShapeMismatchError(name, (expected,), value.shape)
            setattr(self, name, value)
        self.noise_level = float(self.noise_level)
        y_norm = float(np.linalg.norm(self.y))
        data_gap = float(np.linalg.norm(self.A @ self.x_dag - self.y))
        if data_gap > CONSISTENCY_TOLERANCE * y_norm:
            raise ValueError(f"exact data violate ||A x_dag - y|| <= 1e-10 ||y||: gap {data_gap:.3g}, ||y|| = {y_norm:.3g}")
        if self.noise_level < 0:
            raise ValueError(f"noise level must be nonnegative, got {self.noise_level}")
        realized = float(np.linalg.norm(self.y_eps - self.y))
        scale = max(self.noise_level, float(np.linalg.norm(self.y_eps)))
        if abs(realized - self.noise_level) > CONSISTENCY_TOLERANCE * scale:
            raise ValueError(f"noise level violates noise_level == ||y_eps - y||: "
                             f"recorded {self.noise_level:.6g}, realized {realized:.6g}")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def noise_vector(self) -> np.ndarray:
        return self.y_eps - self.y

    @property
    def noise_direction(self) -> np.ndarray:
        """Unit vector z with y_eps = y + eps z; zero when the data are exact."""
        noise = self.noise_vector
        norm = np.linalg.norm(noise)
        return noise / norm if norm > 0 else np.zeros_like(noise)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'A': self.A.tolist(),
            'x_dag': self.x_dag.tolist(),
            'y': self.y.tolist(),
            'y_eps': self.y_eps.tolist(),
            'noise_level': float(self.noise_level),
            'seeds': dict(self.seeds),
            'snr': None if self.snr is None else float(self.snr),
        }
        if self.source is not None:
            data['source'] = {
                'nu': float(self.source.nu),
                'rho': float(self.source.rho),
                'v_src': self.source.v_src.tolist(),
            }
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearInverseProblem":
        source = data.get('source')
        return cls(
            A=np.array(data['A'], dtype=np.float64),
            x_dag=np.array(data['x_dag'], dtype=np.float64),
            y=np.array(data['y'], dtype=np.float64),
            y_eps=np.array(data['y_eps'], dtype=np.float64),
            noise_level=float(data['noise_level']),
            seeds=dict(data.get('seeds') or {}),
            snr=data.get('snr'),
            source=SourceElement(**source) if source else None,
        )

    def save_fixture(self, path: Union[str, Path]) -> None:
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def load_fixture(cls, path: Union[str, Path]) -> "LinearInverseProblem":
        with open(path, 'r') as f:
            return cls.from_dict(yaml.safe_load(f))


def build_forward(design: SpectralDesign) -> np.ndarray:
    """diag(i^{-q/2}) when aligned, H diag(i^{-q/2}) H^T otherwise."""
    if not design.q > 0:
        raise ValueError(f"decay exponent q must be positive, got {design.q}")
    diagonal = np.diag(design.alphas)
    if design.aligned:
        return diagonal
    return design.H @ diagonal @ design.H.T


def make_truth(A: np.ndarray) -> np.ndarray:
    """x = A^T A 1, a source element with nu = 2 and v_src the ones vector."""
    A = np.asarray(A, dtype=np.float64)
    return A.T @ (A @ np.ones(A.shape[1]))


def add_noise(y: np.ndarray, noise: NoiseModel, seed) -> Tuple[np.ndarray, float]:
    """Return y + xi and the realized noise level ||xi||."""
    y = np.asarray(y, dtype=np.float64)
    if noise.sigma_noise == 0.0:
        return y.copy(), 0.0
    xi = noise.sigma_noise * np.random.default_rng(seed).standard_normal(y.shape)
    return y + xi, float(np.linalg.norm(xi))


def source_project(A: np.ndarray, src: SourceElement) -> np.ndarray:
    """(A^T A)^{nu/2} v_src via the eigendecomposition of A^T A."""
    if src.nu < 0:
        raise ValueError(f"smoothness exponent nu must be nonnegative, got {src.nu}")
    if src.nu == 0:
        return src.v_src.copy()
    A = np.asarray(A, dtype=np.float64)
    eigenvalues, eigenvectors = linalg.eigh(A.T @ A)
    powers = np.clip(eigenvalues, 0.0, None) ** (src.nu / 2.0)
    return eigenvectors @ (powers * (eigenvectors.T @ src.v_src))


def build_problem(design: SpectralDesign, snr: float, noise_seed: Optional[int]) -> LinearInverseProblem:
    """Forward operator, truth, exact and noisy data for one design and SNR."""
    A = build_forward(design)
    source = SourceElement.ones(design.n)
    x_dag = make_truth(A)
    y = A @ x_dag
    noise = NoiseModel.from_snr(y, snr)
    y_eps, noise_level = add_noise(y, noise, noise_seed)
    logger.debug(f"built problem n={design.n} p={design.p} q={design.q} aligned={design.aligned} "
                 f"snr={snr} noise_level={noise_level:.6g}")
    return LinearInverseProblem(
        A=A,
        x_dag=x_dag,
        y=y,
        y_eps=y_eps,
        noise_level=noise_level,
        seeds={'operator': design.seed, 'noise': noise_seed},
        snr=float(snr),
        source=source,
    )
