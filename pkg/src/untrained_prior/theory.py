"""
Numerical checks of the linearization theory behind early stopping

This module measures the constants the convergence analysis assumes
(Jacobian norm bound, distance to the reference Jacobian, Jacobian
variation inside a ball), checks the closeness of nonlinear and linearized
gradient descent, splits the linearized error into noise, approximation and
initialization terms, evaluates the parameter choices of the main error
estimate and the a priori stopping index, and verifies the two scalar filter
inequalities the analysis relies on by brute force.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import optimize

from .dynamics import LinearizedRun, Trajectory
from .generator import (
    ConvGenerator,
    CovarianceModel,
    Weights,
    _weights,
    forward,
    jacobian_distance,
    jacobian_gram,
    jacobian_norm,
    sample_initial_weights,
    sigma_closed_form,
)
from .linalg import EIGEN_TOLERANCE, psd_sqrt, sorted_eigh, spectral_norm, symmetric_norm
from .problems import LinearInverseProblem, SpectralDesign

GAP_TOLERANCE = 1e-12
MIN_GRID_SIZE = 1_000


# ============================================================================
# Assumption constants
# ============================================================================

@dataclass
class AssumptionReport:
    """Measured constants; eps0_hat is the larger of the two distance measures."""
    beta_hat: float
    eps0_operator: float
    eps0_gram: float
    eps_hat: float
    radius_R: float
    n_probes: int
    seed: int

    @property
    def eps0_hat(self) -> float:
        return max(self.eps0_operator, self.eps0_gram)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['eps0_hat'] = self.eps0_hat
        return data


def measure_assumptions(gen: ConvGenerator, C0: Weights, J: np.ndarray, radius_R: float,
                        n_probes: int = 8, seed: int = 0) -> AssumptionReport:
    """Probe the Jacobian around C0.

    Probes alternate between the Frobenius sphere of radius R around C0 and
    its interior. eps0 is measured both as ||K0^{1/2} - (J J^T)^{1/2}|| and as
    sqrt(||K0 - J J^T||).
    """
    if n_probes < 1:
        raise ValueError(f"n_probes must be at least 1, got {n_probes}")
    if radius_R < 0:
        raise ValueError(f"radius_R must be nonnegative, got {radius_R}")
    C0 = _weights(gen, C0)
    J = np.asarray(J, dtype=np.float64)
    kernel0 = jacobian_gram(gen, C0)
    reference = J @ J.T

    eps0_operator = symmetric_norm(psd_sqrt(kernel0) - psd_sqrt(reference))
    eps0_gram = math.sqrt(symmetric_norm(kernel0 - reference))
    beta_hat = max(jacobian_norm(gen, C0), spectral_norm(J))

    rng = np.random.default_rng(seed)
    eps_hat = 0.0
    for probe in range(n_probes):
        direction = rng.standard_normal(C0.shape)
        direction /= np.linalg.norm(direction)
        scale = radius_R if probe % 2 == 0 else radius_R * rng.uniform()
        C = C0 + scale * direction
        eps_hat = max(eps_hat, jacobian_distance(gen, C, C0))
        beta_hat = max(beta_hat, jacobian_norm(gen, C))

    logger.debug(f"assumptions: beta={beta_hat:.4g} eps0={max(eps0_operator, eps0_gram):.4g} "
                 f"eps={eps_hat:.4g} R={radius_R:.4g}")
    return AssumptionReport(
        beta_hat=beta_hat,
        eps0_operator=eps0_operator,
        eps0_gram=eps0_gram,
        eps_hat=eps_hat,
        radius_R=float(radius_R),
        n_probes=n_probes,
        seed=seed,
    )


# ============================================================================
# Closeness of nonlinear and linearized gradient descent
# ============================================================================

def closeness_bounds(tau: int, r0_norm: float, eps: float, eps0: float,
                     beta: float = 1.0, gamma: float = 1.0, eta: float = 1.0) -> Dict[str, float]:
    """General bounds on the residual and parameter gaps after tau steps."""
    drift = eps0 ** 2 + beta * eps
    return {
        'residual': 2.0 * eta * gamma ** 2 * drift * tau * r0_norm,
        'parameters': eta * gamma * (eps + eps0 + eta * gamma ** 2 * beta * drift * tau) * tau * r0_norm,
    }


def required_radius(T: int, r0_norm: float, eps: float, eps0: float,
                    beta: float = 1.0, gamma: float = 1.0, eta: float = 1.0) -> float:
    drift = eps0 ** 2 + beta * eps
    first = eta * gamma * beta * (1.0 + 2.0 * eta * gamma ** 2 * drift * T)
    second = math.sqrt(T) * (math.sqrt(eta) + eta * gamma * math.sqrt(T)
                             * (eps + eps0 + eta * gamma ** 2 * beta * drift * T))
    return 2.0 * r0_norm * max(first, second)


@dataclass
class ClosenessRow:
    tau: int
    residual_gap: float
    residual_bound: float
    parameter_gap: float
    parameter_bound: float
    displacement: float
    displacement_bound: float

    @property
    def passed(self) -> bool:
        slack = GAP_TOLERANCE * max(1.0, self.residual_bound, self.parameter_bound)
        return (self.residual_gap <= self.residual_bound + slack
                and self.parameter_gap <= self.parameter_bound + slack
                and self.displacement <= self.displacement_bound + slack)


@dataclass
class ClosenessReport:
    form: str
    eps: float
    eps0: float
    T: int
    radius_R: float
    r0_norm: float
    hypotheses: Dict[str, bool]
    rows: List[ClosenessRow] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def failures(self) -> List[int]:
        return [row.tau for row in self.rows if not row.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'form': self.form,
            'eps': self.eps,
            'eps0': self.eps0,
            'T': self.T,
            'radius_R': self.radius_R,
            'r0_norm': self.r0_norm,
            'hypotheses': dict(self.hypotheses),
            'all_passed': self.all_passed,
            'rows': [dict(asdict(row), passed=row.passed) for row in self.rows],
        }


def check_closeness_bounds(trajectory: Trajectory, linearized: LinearizedRun, eps_hat: float,
                           eps0_hat: float, T: int, radius_R: Optional[float] = None,
                           form: str = "simplified", beta: float = 1.0, gamma: float = 1.0,
                           eta: Optional[float] = None) -> ClosenessReport:
    """Compare the recorded trajectory with the linearized one for tau <= T.

    ``form="simplified"`` uses eps = max(2 eps_hat, eps0_hat) and the bounds
    4 eps tau ||r0||, 2 eps tau^2 ||r0|| and R/2. ``form="general"`` uses
    :func:`closeness_bounds` with eps = 2 eps_hat and the given beta, gamma
    and eta. Unmet hypotheses are reported, not enforced.
    """
    if form not in ("simplified", "general"):
        raise ValueError(f"unknown closeness form '{form}'")
    if trajectory.weights is None or trajectory.residuals is None:
        raise ValueError("closeness checks need a trajectory recorded with record_weights=True")
    if len(trajectory.weights) < T + 1 or len(trajectory.residual_norms) < T + 1:
        raise ValueError(f"trajectory has {len(trajectory.residual_norms)} iterates, need {T + 1}")
    if linearized.lifted is None:
        raise ValueError("closeness checks need a linearized run built from a LiftedJacobian")
    eta = linearized.eta if eta is None else eta
    r0_norm = float(trajectory.residual_norms[0])

    if form == "simplified":
        eps = max(2.0 * eps_hat, eps0_hat)
        needed = 2.0 * r0_norm * (math.sqrt(T) + 2.0 * eps * T ** 2)
        hypotheses = {'horizon': eps == 0.0 or T <= 1.0 / (2.0 * eps ** 2)}
    else:
        # the measured variation bounds eps/2
        eps = 2.0 * eps_hat
        needed = required_radius(T, r0_norm, eps, eps0_hat, beta, gamma, eta)
        hypotheses = {
            'horizon': eps == 0.0 or T <= 1.0 / (2.0 * eta * gamma ** 2 * eps ** 2),
            'step_size': eta <= 1.0 / (beta ** 2 * gamma ** 2),
        }
    radius_R = needed if radius_R is None else float(radius_R)
    hypotheses['radius'] = radius_R >= needed
    for name, holds in hypotheses.items():
        if not holds:
            logger.warning(f"closeness hypothesis '{name}' does not hold (T={T}, eps={eps:.4g}, R={radius_R:.4g})")

    report = ClosenessReport(form=form, eps=eps, eps0=eps0_hat, T=T, radius_R=radius_R,
                             r0_norm=r0_norm, hypotheses=hypotheses)
    for tau in range(T + 1):
        if form == "simplified":
            residual_bound = 4.0 * eps * tau * r0_norm
            parameter_bound = 2.0 * eps * tau ** 2 * r0_norm
        else:
            bounds = closeness_bounds(tau, r0_norm, eps, eps0_hat, beta, gamma, eta)
            residual_bound, parameter_bound = bounds['residual'], bounds['parameters']
        report.rows.append(ClosenessRow(
            tau=tau,
            residual_gap=float(np.linalg.norm(linearized.residual(tau) - trajectory.residuals[tau])),
            residual_bound=residual_bound,
            parameter_gap=float(np.linalg.norm(linearized.parameters(tau) - trajectory.weights[tau])),
            parameter_bound=parameter_bound,
            displacement=float(trajectory.displacement_norms[tau]),
            displacement_bound=radius_R / 2.0,
        ))
    if not report.all_passed:
        logger.warning(f"closeness bounds fail at iterations {report.failures[:10]}")
    return report


# ============================================================================
# Interaction matrix and error decomposition
# ============================================================================

@dataclass
class _Spectra:
    interaction: np.ndarray
    sigma: np.ndarray
    sigma_prime: np.ndarray
    basis: np.ndarray
    basis_prime: np.ndarray
    excluded: int


def _spectra(A: np.ndarray, kernel: np.ndarray) -> _Spectra:
    eigenvalues, basis = sorted_eigh(kernel)
    keep = eigenvalues > EIGEN_TOLERANCE * max(float(eigenvalues[0]), np.finfo(float).tiny)
    basis = basis[:, keep]

    projected = A @ kernel @ A.T
    eigenvalues_prime, basis_prime = sorted_eigh(projected)
    keep_prime = eigenvalues_prime > EIGEN_TOLERANCE * max(float(eigenvalues_prime[0]), np.finfo(float).tiny)
    basis_prime = basis_prime[:, keep_prime]
    if basis.shape[1] == 0 or basis_prime.shape[1] == 0:
        raise ValueError("interaction matrix needs nonzero singular values; the kernel or A K A^T is zero")

    # Rayleigh quotients keep z and z' at unit norm even for clustered spectra
    sigma = np.sqrt(np.einsum('ij,ij->j', basis, kernel @ basis))
    sigma_prime = np.sqrt(np.einsum('ij,ij->j', basis_prime, projected @ basis_prime))
    interaction = (basis_prime.T @ A @ kernel @ basis) / np.outer(sigma_prime, sigma)
    return _Spectra(
        interaction=interaction,
        sigma=sigma,
        sigma_prime=sigma_prime,
        basis=basis,
        basis_prime=basis_prime,
        excluded=int(np.sum(~keep_prime)),
    )


def interaction_matrix(A: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Inner products (z'_j, z_i) of the right singular vectors of A J and J.

    z_i = J^T w_i / sigma_i and z'_j = J^T A^T w'_j / sigma'_j, where w_i and
    w'_j are eigenvectors of J J^T and A J J^T A^T.
    """
    J = np.asarray(J, dtype=np.float64)
    return _spectra(np.asarray(A, dtype=np.float64), J @ J.T).interaction


@dataclass
class ErrorDecomposition:
    """Terms bounding ||G_lin(tau) - x|| for the linearized iterate."""
    tau: int
    E1: float
    E2: float
    E3: float
    interaction_matrix: np.ndarray = field(repr=False)
    initial_output_norm: float
    projection_error: float
    range_leakage: float
    excluded_components: int
    linearization_budget: Optional[float] = None
    data_norm: Optional[float] = None

    @property
    def bound(self) -> float:
        return (self.E1 + self.E2 + self.E3 + self.initial_output_norm
                + self.projection_error + self.range_leakage)

    @property
    def budget_term(self) -> float:
        if self.linearization_budget is None or self.data_norm is None:
            return 0.0
        return 3.0 * self.linearization_budget * self.data_norm

    @property
    def total_bound(self) -> float:
        """Bound on the nonlinear error, valid when the linearization budget holds."""
        return self.bound + self.budget_term

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tau': self.tau,
            'E1': self.E1,
            'E2': self.E2,
            'E3': self.E3,
            'initial_output_norm': self.initial_output_norm,
            'projection_error': self.projection_error,
            'range_leakage': self.range_leakage,
            'excluded_components': self.excluded_components,
            'linearization_budget': self.linearization_budget,
            'bound': self.bound,
            'total_bound': self.total_bound,
        }


def error_decomposition(problem: LinearInverseProblem, cov: CovarianceModel, G0: np.ndarray, tau: int,
                        y_eps: Optional[np.ndarray] = None, eta: float = 1.0,
                        linearization_budget: Optional[float] = None) -> ErrorDecomposition:
    """Split the linearized error at tau into noise, approximation and initialization terms.

    The reference kernel is Sigma from ``cov``. With filter factors
    f_j = 1 - (1 - eta sigma'_j^2)^tau and the interaction matrix Z, the
    i-th components are

    * noise:          sigma_i sum_j Z_ji f_j / sigma'_j (w'_j, y_eps - y)
    * approximation:  sigma_i sum_j Z_ji f_j sum_l Z_jl (w_l, x) / sigma_l - (w_i, x)
    * initialization: sigma_i sum_j Z_ji f_j sum_l Z_jl (w_l, G0) / sigma_l

    For aligned designs Z is the identity and the sums collapse to single
    sums. ``bound`` adds ||G0||, the part of x outside the range of Sigma and
    the leakage of that part through A; it bounds the linearized error.
    """
    A = problem.A
    y_eps = problem.y_eps if y_eps is None else np.asarray(y_eps, dtype=np.float64)
    G0 = np.asarray(G0, dtype=np.float64)
    spectra = _spectra(A, cov.sigma)
    Z, sigma, sigma_prime = spectra.interaction, spectra.sigma, spectra.sigma_prime
    filters = 1.0 - (1.0 - eta * sigma_prime ** 2) ** tau
    if spectra.excluded:
        logger.info(f"{spectra.excluded} zero singular values of A J excluded from the noise term")

    noise_coefficients = spectra.basis_prime.T @ (y_eps - problem.y)
    noise_term = sigma * (Z.T @ (filters / sigma_prime * noise_coefficients))

    def filtered(coefficients: np.ndarray) -> np.ndarray:
        return sigma * (Z.T @ (filters * (Z @ (coefficients / sigma))))

    truth_coefficients = spectra.basis.T @ problem.x_dag
    truth_filtered = filtered(truth_coefficients)
    init_filtered = filtered(spectra.basis.T @ G0)

    projection = spectra.basis @ spectra.basis.T
    outside = (np.eye(problem.n) - projection) @ (problem.x_dag - G0)
    gain = filters / sigma_prime ** 2
    smoother = cov.sigma @ A.T @ (spectra.basis_prime * gain) @ spectra.basis_prime.T
    leakage = float(np.linalg.norm(smoother @ A @ outside))

    return ErrorDecomposition(
        tau=tau,
        E1=float(np.linalg.norm(noise_term)),
        E2=float(np.linalg.norm(truth_filtered - truth_coefficients)),
        E3=float(np.linalg.norm(init_filtered)),
        interaction_matrix=Z,
        initial_output_norm=float(np.linalg.norm(G0)),
        projection_error=float(np.linalg.norm(problem.x_dag - projection @ problem.x_dag)),
        range_leakage=leakage,
        excluded_components=spectra.excluded,
        linearization_budget=linearization_budget,
        data_norm=float(np.linalg.norm(y_eps)),
    )


# ============================================================================
# Parameter choices of the main estimate
# ============================================================================

@dataclass(frozen=True)
class SpectralBounds:
    """Constants with sigma_i^2 / i^-p in [b_Sigma, B_Sigma] and alpha_i^2 / i^-q in [b_A, B_A]."""
    b_A: float = 1.0
    B_A: float = 1.0
    b_Sigma: float = 1.0
    B_Sigma: float = 1.0

    def __post_init__(self):
        if not (self.B_A >= self.b_A > 0):
            raise ValueError(f"need B_A >= b_A > 0, got b_A={self.b_A}, B_A={self.B_A}")
        if not (self.B_Sigma >= self.b_Sigma > 0):
            raise ValueError(f"need B_Sigma >= b_Sigma > 0, got b_Sigma={self.b_Sigma}, B_Sigma={self.B_Sigma}")

    @classmethod
    def from_design(cls, design: SpectralDesign, cov: Optional[CovarianceModel] = None) -> "SpectralBounds":
        """Measure the constants from the spectra of A^T A and Sigma."""
        index = design.index
        alpha_ratio = design.alphas ** 2 / index ** (-design.q)
        sigma_eigenvalues = design.sigma_diag if cov is None else cov.eigenvalues
        sigma_ratio = sigma_eigenvalues / index ** (-design.p)
        return cls(b_A=float(alpha_ratio.min()), B_A=float(alpha_ratio.max()),
                   b_Sigma=float(sigma_ratio.min()), B_Sigma=float(sigma_ratio.max()))


@dataclass(frozen=True)
class TheoremParams:
    nu: float
    rho: float
    p: float
    q: float
    bounds: SpectralBounds
    fudge_L: float
    delta_eps: float
    eps: float
    y_eps_norm: float
    n: int
    T_terms: tuple
    T_eps: float
    omega: float
    log10_k_eps: float
    k_eps: float
    L_tilde: float
    xi_eps: float
    tolerance_eps: float
    noise_level_ok: bool
    tau_dp_upper_bound: float
    error_bound: float
    L_hat: float
    apriori_error_bound: float

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['T_terms'] = list(self.T_terms)
        return data


def _iteration_constant(nu: float, p: float, q: float, b: SpectralBounds) -> float:
    return q * (1 + nu) * b.B_A ** ((q + p) / q) / (2 * math.e * (p + q) * b.b_A * b.b_Sigma)


def theorem_params(nu: float, rho: float, p: float, q: float, bounds: SpectralBounds, eps: float,
                   y_eps_norm: float, delta_eps: float, L: float, n: int) -> TheoremParams:
    """Iteration horizon, initialization variance, width and constants of the main estimate.

    These are reported, not enforced: the width requirement is astronomically
    large at realistic noise levels, so it is carried in log space.
    """
    if not L > 1:
        raise ValueError(f"fudge parameter L must exceed 1, got {L}")
    if not 0 < delta_eps < 0.25:
        raise ValueError(f"delta_eps must lie in (0, 1/4), got {delta_eps}")
    if not eps > 0:
        raise ValueError(f"noise level eps must be positive, got {eps}")
    if not y_eps_norm > 0:
        raise ValueError(f"data norm ||y_eps|| must be positive, got {y_eps_norm}")
    if y_eps_norm < eps:
        logger.warning(f"||y_eps|| = {y_eps_norm:.4g} is smaller than the noise level {eps:.4g}")

    c_T = _iteration_constant(nu, p, q, bounds)
    exponent = 2 * (p + q) / (q * (1 + nu))
    slack = (L - 1) * eps
    t_source = c_T * (2 * rho / slack) ** exponent
    t_data = 4 * y_eps_norm / slack
    T_eps = max(t_source, t_data)

    log_term = math.log(2 * n / delta_eps)
    omega = math.sqrt(slack / (8 * math.sqrt(8 * n * log_term)))
    ln_k = (35 * math.log(2) + 8 * math.log(y_eps_norm) + math.log(n) + math.log(log_term)
            + 13 * math.log(T_eps) - 8 * math.log(L - 1) - 8 * math.log(eps))
    k_eps = math.exp(ln_k) if ln_k < 709 else math.inf

    b = bounds
    middle = (q * (1 + nu) * b.B_A ** ((2 * q + p) / q) * b.B_Sigma
              / (2 * math.e * (q + p) * b.b_A ** ((2 * q + p) / q) * b.b_Sigma))
    L_tilde = ((2 * L) ** (nu / (nu + 1)) + middle ** (q / (2 * (q + p))) * (4 * rho / (L - 1)) ** (1 / (1 + nu))
               + L - 1)
    xi_eps = min(slack / (4 * y_eps_norm), 1 / math.sqrt(32 * log_term))
    rate = eps + eps ** (nu / (nu + 1)) * rho ** (1 / (nu + 1))

    balance = q * nu / (2 * (q + p) * (1 + nu))
    L_hat = (L - 1 + 2 * (b.B_A * b.B_Sigma / (b.b_A * b.b_Sigma)) ** balance
             * (b.B_A / b.b_A) ** (nu / (2 * (1 + nu)))
             * (2 * nu * (q + p) / (math.e * q)) ** balance)

    noise_level_ok = eps <= ((L - 1) / 16) ** (1 / 3)
    if not noise_level_ok:
        logger.warning(f"noise level {eps:.4g} exceeds ((L-1)/16)^(1/3); the estimate does not apply")

    return TheoremParams(
        nu=nu, rho=rho, p=p, q=q, bounds=bounds, fudge_L=L, delta_eps=delta_eps, eps=eps,
        y_eps_norm=y_eps_norm, n=n,
        T_terms=(t_source, t_data),
        T_eps=T_eps,
        omega=omega,
        log10_k_eps=ln_k / math.log(10),
        k_eps=k_eps,
        L_tilde=L_tilde,
        xi_eps=xi_eps,
        tolerance_eps=xi_eps / (4 * T_eps ** 2),
        noise_level_ok=noise_level_ok,
        tau_dp_upper_bound=c_T * (4 * rho / slack) ** exponent,
        error_bound=L_tilde * rate,
        L_hat=L_hat,
        apriori_error_bound=L_hat * rate,
    )


def _apriori_exponent(params: TheoremParams) -> float:
    return params.q / (2 * (params.q + params.p))


def noise_propagation_bound(tau: float, params: TheoremParams) -> float:
    """eps b_A^{-1/2} (B_A B_Sigma)^{q/(2(q+p))} tau^{q/(2(q+p))}."""
    b, a = params.bounds, _apriori_exponent(params)
    return params.eps * b.b_A ** -0.5 * (b.B_A * b.B_Sigma) ** a * tau ** a


def approximation_bound(tau: float, params: TheoremParams) -> float:
    b, a, nu = params.bounds, _apriori_exponent(params), params.nu
    shape = params.q * nu / (2 * math.e * (params.q + params.p))
    return (params.rho * b.B_A ** (nu / 2) / (b.b_A * b.b_Sigma) ** (a * nu)
            * shape ** (a * nu) * tau ** (-a * nu))


def apriori_tau_star(params: TheoremParams) -> int:
    """Iteration count that balances the noise and approximation bounds."""
    b, nu, p, q = params.bounds, params.nu, params.p, params.q
    tau = ((params.rho ** 2 * b.B_A * b.b_A / params.eps ** 2) ** ((q + p) / ((1 + nu) * q))
           * (q * nu / (2 * math.e * (q + p))) ** (nu / (1 + nu))
           * (b.B_A * b.B_Sigma) ** (-1 / (1 + nu))
           * (b.b_A * b.b_Sigma) ** (-nu / (1 + nu)))
    return int(math.ceil(tau))


# ============================================================================
# Width and initialization requirements
# ============================================================================

@dataclass(frozen=True)
class WidthRequirements:
    k_min: float
    omega: float
    radius_tilde: float
    success_probability: float


def width_requirements(n: int, delta: float, eps: float, eps0: float, xi: float, y_norm: float) -> WidthRequirements:
    """Width, initialization scale and ball radius for the concentration argument."""
    log_term = math.log(2 * n / delta)
    k_min = 16.0 / eps0 ** 4 * log_term
    return WidthRequirements(
        k_min=k_min,
        omega=xi * y_norm / (2 * math.sqrt(8 * n * log_term)),
        radius_tilde=(eps / 4) ** 3 * math.sqrt(k_min),
        success_probability=1.0 - delta - n * math.exp(-eps ** 4 * k_min / 2 ** 9),
    )


@dataclass(frozen=True)
class LinearizationSetup:
    eps: float
    log10_k: float
    k: float
    eps0: float
    radius_R: float
    omega: float
    horizon_ok: bool
    budget_ok: bool


def linearization_setup(n: int, delta: float, xi: float, T: int, y_eps_norm: float) -> LinearizationSetup:
    """Choices that keep nonlinear and linearized iterates within budget xi for T steps."""
    log_term = math.log(2 * n / delta)
    eps = xi / (4 * T ** 2)
    ln_k = 35 * math.log(2) - 8 * math.log(xi) + math.log(n) + math.log(log_term) + 13 * math.log(T)
    k = math.exp(ln_k) if ln_k < 709 else math.inf
    eps0 = min((16 * log_term / k) ** 0.25, eps)
    horizon_ok = 4 <= T <= 1 / (2 * eps ** 2)
    budget_ok = xi <= 1 / math.sqrt(32 * log_term)
    if not (horizon_ok and budget_ok):
        logger.warning(f"linearization setup outside its range: horizon_ok={horizon_ok} budget_ok={budget_ok}")
    return LinearizationSetup(
        eps=eps,
        log10_k=ln_k / math.log(10),
        k=k,
        eps0=eps0,
        radius_R=8 * math.sqrt(T) * y_eps_norm,
        omega=xi * y_eps_norm / (2 * math.sqrt(8 * n * log_term)),
        horizon_ok=horizon_ok,
        budget_ok=budget_ok,
    )


@dataclass
class ConcentrationReport:
    n_trials: int
    delta: float
    omega: float
    radius_tilde: float
    kernel_bound: float
    output_bound: float
    variation_bound: float
    kernel_frequency: float
    output_frequency: float
    variation_frequency: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def concentration_trials(gen: ConvGenerator, omega: float, delta: float, n_trials: int, seed: int,
                         radius_tilde: Optional[float] = None) -> ConcentrationReport:
    """Frequencies with which the initialization concentration inequalities hold.

    * ||J0 J0^T - Sigma|| <= ||U||^2 sqrt(log(2n/delta) sum v_l^4)
    * ||G(C0)|| <= omega sqrt(8 log(2n/delta)) ||U||_F
    * ||J(C) - J(C0)|| <= ||v||_inf 2 (k R~)^{1/3} ||U|| with ||C - C0||_F = omega R~
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be at least 1, got {n_trials}")
    radius_tilde = math.sqrt(gen.k) / 2 if radius_tilde is None else radius_tilde
    log_term = math.log(2 * gen.n / delta)
    sigma = sigma_closed_form(gen.U).sigma
    u_norm = spectral_norm(gen.U)
    kernel_bound = u_norm ** 2 * math.sqrt(log_term * float(np.sum(gen.v ** 4)))
    output_bound = omega * math.sqrt(8 * log_term) * float(np.linalg.norm(gen.U))
    variation_bound = float(np.max(np.abs(gen.v))) * 2 * (gen.k * radius_tilde) ** (1 / 3) * u_norm

    hits = np.zeros(3, dtype=int)
    for child in np.random.SeedSequence(seed).spawn(n_trials):
        init_seed, probe_seed = (int(s.generate_state(1)[0]) for s in child.spawn(2))
        C0 = sample_initial_weights(gen, omega, init_seed).C
        hits[0] += symmetric_norm(jacobian_gram(gen, C0) - sigma) <= kernel_bound
        hits[1] += np.linalg.norm(forward(gen, C0)) <= output_bound
        direction = np.random.default_rng(probe_seed).standard_normal(C0.shape)
        C = C0 + omega * radius_tilde * direction / np.linalg.norm(direction)
        hits[2] += jacobian_distance(gen, C, C0) <= variation_bound

    frequencies = hits / n_trials
    return ConcentrationReport(
        n_trials=n_trials,
        delta=delta,
        omega=omega,
        radius_tilde=radius_tilde,
        kernel_bound=kernel_bound,
        output_bound=output_bound,
        variation_bound=variation_bound,
        kernel_frequency=float(frequencies[0]),
        output_frequency=float(frequencies[1]),
        variation_frequency=float(frequencies[2]),
    )


# ============================================================================
# Scalar filter inequalities
# ============================================================================

@dataclass(frozen=True)
class LemmaCheck:
    kind: str
    exponent: float
    tau: int
    grid_sup: float
    refined_sup: float
    bound: float
    passed: bool
    applicable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def filter_growth(lam: np.ndarray, s: float, tau: int) -> np.ndarray:
    """lambda^{-s} (1 - (1 - lambda)^tau)."""
    lam = np.asarray(lam, dtype=np.float64)
    with np.errstate(divide='ignore'):
        return lam ** (-s) * -np.expm1(tau * np.log1p(-lam))


def filter_decay(lam: np.ndarray, r: float, tau: int) -> np.ndarray:
    """(1 - lambda)^tau lambda^r."""
    lam = np.asarray(lam, dtype=np.float64)
    return (1.0 - lam) ** tau * lam ** r


def _refine(func, grid: np.ndarray, values: np.ndarray) -> float:
    """Local bounded maximization around the best grid point."""
    best = int(np.argmax(values))
    lower = grid[best - 1] if best > 0 else min(grid[0], 1e-12)
    upper = grid[min(best + 1, grid.size - 1)]
    if upper <= lower:
        return float(values[best])
    result = optimize.minimize_scalar(lambda lam: -float(func(lam)), bounds=(lower, upper),
                                      method='bounded', options={'xatol': 1e-14})
    return max(float(values[best]), -float(result.fun))


def _grid(grid_size: int) -> np.ndarray:
    if grid_size < MIN_GRID_SIZE:
        raise ValueError(f"grid_size must be at least {MIN_GRID_SIZE}, got {grid_size}")
    return np.linspace(1.0 / grid_size, 1.0, grid_size)


def check_filter_growth(s: float, tau: int, grid_size: int = 100_000) -> LemmaCheck:
    """sup over (0, 1] of lambda^{-s} (1 - (1 - lambda)^tau) against tau^s.

    The inequality only holds for s <= 1; larger exponents are reported as
    not applicable.
    """
    grid = _grid(grid_size)
    values = filter_growth(grid, s, tau)
    refined = max(_refine(lambda lam: filter_growth(lam, s, tau), grid, values),
                  float(filter_growth(1.0, s, tau)))
    bound = float(tau) ** s
    return LemmaCheck(
        kind='filter_growth',
        exponent=float(s),
        tau=int(tau),
        grid_sup=float(values.max()),
        refined_sup=refined,
        bound=bound,
        passed=refined <= bound * (1 + GAP_TOLERANCE),
        applicable=s <= 1,
    )


def check_filter_decay(r: float, tau: int, grid_size: int = 100_000) -> LemmaCheck:
    """sup over (0, 1] of (1 - lambda)^tau lambda^r against (r/e)^r tau^{-r}."""
    if tau < r:
        raise ValueError(f"the decay estimate needs tau >= r, got tau={tau}, r={r}")
    grid = _grid(grid_size)
    values = filter_decay(grid, r, tau)
    analytic = float(filter_decay(r / (r + tau), r, tau))
    refined = max(_refine(lambda lam: filter_decay(lam, r, tau), grid, values), analytic)
    bound = (r / math.e) ** r * float(tau) ** (-r)
    return LemmaCheck(
        kind='filter_decay',
        exponent=float(r),
        tau=int(tau),
        grid_sup=float(values.max()),
        refined_sup=refined,
        bound=bound,
        passed=refined <= bound * (1 + GAP_TOLERANCE),
    )


def lemma_oracles(exponents: Sequence[float] = (0.25, 0.5, 1.0, 2.0), taus: Optional[Iterable[int]] = None,
                  grid_size: int = 100_000) -> List[LemmaCheck]:
    """Run both filter checks over all exponent/iteration pairs; decay only where tau >= r."""
    taus = list(range(1, 101) if taus is None else taus)
    checks = []
    for exponent in exponents:
        for tau in taus:
            checks.append(check_filter_growth(exponent, tau, grid_size))
            if tau >= exponent:
                checks.append(check_filter_decay(exponent, tau, grid_size))
    failed = [c for c in checks if c.applicable and not c.passed]
    logger.info(f"filter inequalities: {len(checks)} checks, {len(failed)} failures")
    return checks


# ============================================================================
# Aggregate report
# ============================================================================

@dataclass
class TheoryReport:
    assumptions: List[AssumptionReport] = field(default_factory=list)
    closeness: List[ClosenessReport] = field(default_factory=list)
    decompositions: List[ErrorDecomposition] = field(default_factory=list)
    interaction_deviations: List[float] = field(default_factory=list)
    params: Optional[TheoremParams] = None
    tau_star: Optional[int] = None
    concentration: Optional[ConcentrationReport] = None
    checks: Dict[str, bool] = field(default_factory=dict)

    def record(self, name: str, passed: bool) -> None:
        self.checks[name] = bool(passed) and self.checks.get(name, True)

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values()) and all(report.all_passed for report in self.closeness)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'all_passed': self.all_passed,
            'checks': dict(self.checks),
            'assumptions': [a.to_dict() for a in self.assumptions],
            'closeness': [c.to_dict() for c in self.closeness],
            'decompositions': [d.to_dict() for d in self.decompositions],
            'interaction_deviations': list(self.interaction_deviations),
            'theorem_params': None if self.params is None else self.params.to_dict(),
            'tau_star': self.tau_star,
            'concentration': None if self.concentration is None else self.concentration.to_dict(),
        }
