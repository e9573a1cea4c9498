"""
Gradient descent on the generator, its linearization, and the discrepancy principle

``run_gd`` minimizes 1/2 ||A G(C) - y_eps||^2 over C with a constant step
size and records the full trajectory up to ``tau_max``; the stopping index
of the discrepancy principle is read off the recorded residuals afterwards,
so the error-optimal index is available from the same run.

``LinearizedRun`` evaluates the linearized iteration in closed form from the
eigendecomposition of A K A^T, where K = J J^T is the kernel of a fixed
reference Jacobian J.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from loguru import logger

from .errors import DivergenceError, ShapeMismatchError
from .generator import ConvGenerator, LiftedJacobian, Weights, WeightMatrix, _weights, forward, jacobian_adjoint
from .linalg import EIGEN_TOLERANCE, sorted_eigh
from .problems import LinearInverseProblem

TRAJECTORY_FIELDS = ['iteration', 'residual_norm', 'error_norm', 'displacement_norm']


@dataclass(frozen=True)
class GDConfig:
    eta: float = 1.0
    tau_max: int = 1500
    fudge_L: float = 1.05
    record_weights: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"step size eta must be positive, got {self.eta}")
        if int(self.tau_max) != self.tau_max or self.tau_max < 0:
            raise ValueError(f"tau_max must be a nonnegative integer, got {self.tau_max}")
        if not self.fudge_L > 0:
            raise ValueError(f"fudge_L must be positive, got {self.fudge_L}")


@dataclass(eq=False)
class Trajectory:
    """Norms recorded at iterations 0..tau_max of one gradient descent run."""
    residual_norms: np.ndarray
    error_norms: Optional[np.ndarray]
    displacement_norms: np.ndarray
    output_norms: np.ndarray
    tau_dp: Optional[int]
    tau_min: Optional[int]
    final_weights: np.ndarray
    final_output: np.ndarray
    noise_level: float
    fudge_L: float
    seed: Optional[int] = None
    weights: Optional[List[np.ndarray]] = field(default=None, repr=False)
    residuals: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def tau_max(self) -> int:
        return len(self.residual_norms) - 1

    @property
    def threshold(self) -> float:
        return self.fudge_L * self.noise_level

    def relative_errors(self, x_norm: float) -> np.ndarray:
        if self.error_norms is None:
            raise ValueError("trajectory was recorded without a reference solution")
        return self.error_norms / x_norm

    def discrepancy_holds(self) -> bool:
        """Two-sided discrepancy condition at tau_dp (or no crossing at all)."""
        norms = self.residual_norms
        if self.tau_dp is None:
            return bool(np.all(norms > self.threshold))
        return bool(norms[self.tau_dp] <= self.threshold and np.all(norms[:self.tau_dp] > self.threshold))

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for tau in range(len(self.residual_norms)):
            rows.append({
                'iteration': tau,
                'residual_norm': float(self.residual_norms[tau]),
                'error_norm': None if self.error_norms is None else float(self.error_norms[tau]),
                'displacement_norm': float(self.displacement_norms[tau]),
            })
        return rows

    def header(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'noise_level': float(self.noise_level),
            'fudge_L': float(self.fudge_L),
            'tau_dp': self.tau_dp,
            'tau_min': self.tau_min,
        }


def gradient_step(gen: ConvGenerator, C: Weights, A: np.ndarray, y_eps: np.ndarray, eta: float) -> WeightMatrix:
    """One step C - eta J(C)^T A^T (A G(C) - y_eps)."""
    C = _weights(gen, C)
    residual = A @ forward(gen, C) - y_eps
    return WeightMatrix(C=C - eta * jacobian_adjoint(gen, C, A.T @ residual))


def discrepancy_stop(residual_norms, noise_level: float, fudge_L: float) -> Optional[int]:
    """First index with residual <= L * eps, or None when never reached."""
    if noise_level < 0:
        raise ValueError(f"noise level must be nonnegative, got {noise_level}")
    hits = np.flatnonzero(np.asarray(residual_norms, dtype=np.float64) <= fudge_L * noise_level)
    return int(hits[0]) if hits.size else None


def tau_min(error_norms) -> int:
    """First minimizer of the error norms."""
    error_norms = np.asarray(error_norms, dtype=np.float64)
    if error_norms.size == 0:
        raise ValueError("tau_min of an empty sequence")
    return int(np.argmin(error_norms))


def run_gd(gen: ConvGenerator, C0: Weights, problem: LinearInverseProblem, cfg: GDConfig) -> Trajectory:
    """Run tau_max gradient steps from C0 and record norms at every iterate."""
    C_init = _weights(gen, C0, "initial weights")
    if problem.n != gen.n:
        raise ShapeMismatchError("forward operator", (problem.m, gen.n), problem.A.shape)
    seed = C0.provenance[1] if isinstance(C0, WeightMatrix) and C0.provenance else None
    A, y_eps, x_dag = problem.A, problem.y_eps, problem.x_dag

    steps = cfg.tau_max + 1
    residual_norms = np.empty(steps)
    error_norms = np.empty(steps)
    displacement_norms = np.empty(steps)
    output_norms = np.empty(steps)
    weights: Optional[List[np.ndarray]] = [] if cfg.record_weights else None
    residuals: Optional[List[np.ndarray]] = [] if cfg.record_weights else None

    logger.debug(f"gradient descent: eta={cfg.eta} tau_max={cfg.tau_max} n={gen.n} k={gen.k}")
    C = C_init.copy()
    last_finite: Optional[float] = None
    output = np.zeros(gen.n)
    for tau in range(steps):
        preactivation = gen.U @ C
        mask = preactivation > 0.0
        output = np.maximum(preactivation, 0.0) @ gen.v
        residual = A @ output - y_eps
        residual_norm = float(np.linalg.norm(residual))
        if not np.isfinite(residual_norm) or not np.all(np.isfinite(C)):
            raise DivergenceError(tau, last_finite, f"eta={cfg.eta}")
        last_finite = residual_norm

        residual_norms[tau] = residual_norm
        error_norms[tau] = np.linalg.norm(output - x_dag)
        displacement_norms[tau] = np.linalg.norm(C - C_init)
        output_norms[tau] = np.linalg.norm(output)
        if weights is not None:
            weights.append(C.copy())
            residuals.append(residual)

        if tau < cfg.tau_max:
            gradient = gen.U.T @ (mask * np.outer(A.T @ residual, gen.v))
            C = C - cfg.eta * gradient

    tau_dp = discrepancy_stop(residual_norms, problem.noise_level, cfg.fudge_L)
    if tau_dp is None:
        logger.debug(f"discrepancy level {cfg.fudge_L * problem.noise_level:.6g} not reached within {cfg.tau_max} steps")
    else:
        logger.debug(f"discrepancy principle stops at tau_dp={tau_dp}")

    return Trajectory(
        residual_norms=residual_norms,
        error_norms=error_norms,
        displacement_norms=displacement_norms,
        output_norms=output_norms,
        tau_dp=tau_dp,
        tau_min=tau_min(error_norms),
        final_weights=C,
        final_output=output,
        noise_level=problem.noise_level,
        fudge_L=cfg.fudge_L,
        seed=seed,
        weights=weights,
        residuals=residuals,
    )


@dataclass(eq=False)
class LinearizedRun:
    """Closed-form linearized gradient descent.

    With M = A K A^T = W diag(lambda) W^T and r0 = A G0 - y, the residual is
    r_tau = W (1 - eta lambda)^tau W^T r0 and the output is G0 + K s_tau with
    s_tau = -A^T W diag((1 - (1 - eta lambda)^tau) / lambda) W^T r0. Components
    with lambda = 0 are frozen.
    """
    kernel: np.ndarray
    A: np.ndarray
    G0: np.ndarray
    y: np.ndarray
    eta: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    initial_residual: np.ndarray
    initial_coefficients: np.ndarray
    active: np.ndarray
    lifted: Optional[LiftedJacobian] = field(default=None, repr=False)

    @classmethod
    def from_kernel(cls, kernel: np.ndarray, A: np.ndarray, G0: np.ndarray, y: np.ndarray,
                    eta: float = 1.0, lifted: Optional[LiftedJacobian] = None) -> "LinearizedRun":
        kernel = np.asarray(kernel, dtype=np.float64)
        A = np.asarray(A, dtype=np.float64)
        G0 = np.asarray(G0, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if kernel.shape != (A.shape[1], A.shape[1]):
            raise ShapeMismatchError("kernel", (A.shape[1], A.shape[1]), kernel.shape)

        eigenvalues, eigenvectors = sorted_eigh(A @ kernel @ A.T)
        largest = float(eigenvalues[0]) if eigenvalues.size else 0.0
        active = eigenvalues > EIGEN_TOLERANCE * max(largest, np.finfo(float).tiny)
        if eta * largest > 1.0:
            logger.warning(f"linearized iteration is not contractive: eta * lambda_max = {eta * largest:.6g} > 1")
        residual = A @ G0 - y
        return cls(
            kernel=kernel,
            A=A,
            G0=G0,
            y=y,
            eta=float(eta),
            eigenvalues=eigenvalues,
            eigenvectors=eigenvectors,
            initial_residual=residual,
            initial_coefficients=eigenvectors.T @ residual,
            active=active,
            lifted=lifted,
        )

    @classmethod
    def from_lifted(cls, lifted: LiftedJacobian, A: np.ndarray, G0: np.ndarray, y: np.ndarray,
                    eta: float = 1.0) -> "LinearizedRun":
        return cls.from_kernel(lifted.kernel, A, G0, y, eta=eta, lifted=lifted)

    @property
    def contraction_factor(self) -> float:
        return self.eta * float(self.eigenvalues[0])

    def _decay(self, tau: int) -> np.ndarray:
        decay = np.ones_like(self.eigenvalues)
        decay[self.active] = (1.0 - self.eta * self.eigenvalues[self.active]) ** tau
        return decay

    def residual(self, tau: int) -> np.ndarray:
        if tau == 0:
            return self.initial_residual.copy()
        return self.eigenvectors @ (self._decay(tau) * self.initial_coefficients)

    def residual_norms(self, T: int) -> np.ndarray:
        return np.array([np.linalg.norm(self.residual(tau)) for tau in range(T + 1)])

    def coefficients(self, tau: int) -> np.ndarray:
        """Vector s_tau with theta_tau - theta_0 = J^T s_tau."""
        gain = np.zeros_like(self.eigenvalues)
        active = self.active
        gain[active] = (1.0 - self._decay(tau)[active]) / self.eigenvalues[active]
        return -self.A.T @ (self.eigenvectors @ (gain * self.initial_coefficients))

    def output(self, tau: int) -> np.ndarray:
        return self.G0 + self.kernel @ self.coefficients(tau)

    def parameters(self, tau: int) -> np.ndarray:
        """Linearized weights C0 + J^T s_tau; needs a lifted reference Jacobian."""
        if self.lifted is None:
            raise ValueError("parameter iterates need a LiftedJacobian")
        return self.lifted.C0 + self.lifted.adjoint(self.coefficients(tau))


def run_linearized(J: np.ndarray, G0: np.ndarray, A: np.ndarray, y: np.ndarray, eta: float, tau: int):
    """Linearized residual and output after tau steps for an explicit Jacobian J."""
    J = np.asarray(J, dtype=np.float64)
    run = LinearizedRun.from_kernel(J @ J.T, A, G0, y, eta=eta)
    return run.residual(tau), run.output(tau)


def write_trajectory_csv(path: Union[str, Path], trajectory: Trajectory,
                         extra_header: Optional[Dict[str, Any]] = None) -> List[Path]:
    """Write the per-iteration norms as CSV and a JSON header next to it."""
    path = Path(path)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=TRAJECTORY_FIELDS)
        writer.writeheader()
        writer.writerows(trajectory.to_rows())
    header_path = path.with_suffix('.json')
    header = trajectory.header()
    header.update(extra_header or {})
    with open(header_path, 'w') as f:
        json.dump(header, f, indent=2)
    return [path, header_path]
