"""
Theory Commands for the untrained-prior CLI

Handles: theory-check, lemma-check.
"""

import math
from dataclasses import asdict
from typing import Any, Dict, List

import click
import numpy as np
from loguru import logger

from ..dynamics import GDConfig, LinearizedRun, run_gd
from ..experiments import CellSetup, prepare_cell
from ..generator import LiftedJacobian, forward, reference_jacobian, sigma_closed_form
from ..theory import (
    SpectralBounds,
    TheoryReport,
    apriori_tau_star,
    check_closeness_bounds,
    concentration_trials,
    error_decomposition,
    interaction_matrix,
    lemma_oracles,
    linearization_setup,
    measure_assumptions,
    theorem_params,
)
from .base import BaseCommand
from .options import resolve_config, run_options

ALIGNMENT_TOLERANCE = 1e-8


class TheoryCommands(BaseCommand):
    """Command handlers for numerical checks of the convergence theory"""

    def execute(self, command: str, **kwargs) -> int:
        if command == 'theory_check':
            return self.theory_check(**kwargs)
        elif command == 'lemma_check':
            return self.lemma_check(**kwargs)
        else:
            raise ValueError(f"Unknown theory command: {command}")

    def _check_seed(self, report: TheoryReport, setup: CellSetup, seed: int, horizon: int,
                    n_probes: int) -> Dict[str, Any]:
        """Measure constants, closeness and error terms for one initialization."""
        grid = self.config.grid
        gen, C0, problem = setup.gen, setup.C0, setup.problem
        cov = sigma_closed_form(gen.U)
        lifted = LiftedJacobian.from_initial(gen, C0, cov)
        trajectory = run_gd(gen, C0, problem,
                            GDConfig(eta=grid.eta, tau_max=horizon, fudge_L=grid.fudge_L, record_weights=True))

        radius = 8.0 * math.sqrt(horizon) * float(np.linalg.norm(problem.y_eps))
        J = reference_jacobian(cov)
        assumptions = measure_assumptions(gen, C0, J, radius, n_probes=n_probes, seed=seed)
        G0 = forward(gen, C0)
        linearized = LinearizedRun.from_lifted(lifted, problem.A, G0, problem.y_eps, eta=grid.eta)
        closeness = check_closeness_bounds(trajectory, linearized, assumptions.eps_hat, assumptions.eps0_hat,
                                           horizon, radius_R=radius)

        tau = horizon if trajectory.tau_dp is None else trajectory.tau_dp
        decomposition = error_decomposition(problem, cov, G0, tau, eta=grid.eta)
        linearized_error = float(np.linalg.norm(linearized.output(tau) - problem.x_dag))
        report.record('error_decomposition', linearized_error <= decomposition.bound * (1 + 1e-9) + 1e-12)

        deviation = float(np.linalg.norm(interaction_matrix(problem.A, J) - np.eye(gen.n), 2))
        if setup.design.aligned:
            report.record('alignment_identity', deviation <= ALIGNMENT_TOLERANCE)

        report.assumptions.append(assumptions)
        report.closeness.append(closeness)
        report.decompositions.append(decomposition)
        report.interaction_deviations.append(deviation)
        return {'seed': seed, 'run_seed': setup.seeds['run'], 'tau': tau, 'linearized_error': linearized_error}

    def theory_check(self) -> int:
        """Closeness, error decomposition and parameter choices on one cell over several seeds"""
        grid = self.config.grid
        theory = self.config.section('theory')
        horizon, delta = theory['horizon'], theory['delta']
        key = self.config.cell
        seeds = list(range(theory['seeds']))
        self.print_header("Linearization Theory Check",
                          f"{key.config_label}  p={key.p:g}  SNR={key.snr:g}  T={horizon}  {len(seeds)} seeds")
        self.writer.seeds = {'base_seed': grid.base_seed, 'repetitions': seeds}

        report = TheoryReport()
        runs: List[Dict[str, Any]] = []
        setup = None
        try:
            with self.progress_formatter.create_progress_bar("Checking seeds") as progress:
                task = progress.add_task("Checking seeds", total=len(seeds))
                for seed in seeds:
                    setup = prepare_cell(grid, key, seed)
                    runs.append(self._check_seed(report, setup, seed, horizon, theory['n_probes']))
                    progress.advance(task)

            problem = setup.problem
            if problem.noise_level > 0:
                params = theorem_params(problem.source.nu, problem.source.rho, key.p, grid.q,
                                        SpectralBounds.from_design(setup.design, sigma_closed_form(setup.gen.U)),
                                        problem.noise_level, float(np.linalg.norm(problem.y_eps)), delta,
                                        grid.fudge_L, grid.n)
                report.params = params
                report.tau_star = apriori_tau_star(params)
            else:
                logger.warning("noise-free data: skipping the parameter choices of the error estimate")

            concentration = concentration_trials(setup.gen, setup.omega, delta, len(seeds), grid.base_seed)
            report.concentration = concentration
            report.record('concentration', min(concentration.kernel_frequency, concentration.output_frequency,
                                               concentration.variation_frequency) >= 1.0 - delta)
        except Exception as e:
            if runs:
                self.writer.write_json('theory_report.json', dict(report.to_dict(), runs=runs, partial=True))
            return self.handle_error(e, f"checking {key.config_label}", partial=bool(runs))

        budget = 1.0 / math.sqrt(32.0 * math.log(2 * grid.n / delta))
        setup_report = linearization_setup(grid.n, delta, xi=budget, T=horizon,
                                           y_eps_norm=float(np.linalg.norm(setup.problem.y_eps)))
        data = report.to_dict()
        data.update(cell={'config': key.config_label, 'p': key.p, 'snr': key.snr}, horizon=horizon,
                    runs=runs, linearization_setup=asdict(setup_report))
        self.writer.write_json('theory_report.json', data)
        closeness_rows = [dict(row, seed=seed) for seed, closeness in zip(seeds, data['closeness'])
                          for row in closeness['rows']]
        if 'csv' in self.config.formats:
            self.writer.write_csv('closeness.csv', closeness_rows)

        self.console.print(self.table_formatter.create_closeness_table(report.closeness, seeds))
        checks = dict(report.checks, closeness=all(c.all_passed for c in report.closeness))
        self.console.print(self.table_formatter.create_checks_table(checks))
        if report.params is not None:
            self.print_summary("Parameter Choices", {
                'T_ε': report.params.T_eps,
                'log10 k_ε': report.params.log10_k_eps,
                'ω': report.params.omega,
                'τ_dp upper bound': report.params.tau_dp_upper_bound,
                'L̃': report.params.L_tilde,
                'a priori τ*': report.tau_star,
            })
        return self.finish(report.all_passed)

    def lemma_check(self) -> int:
        """Brute-force grid checks of the two scalar filter inequalities"""
        theory = self.config.section('theory')
        grid_size, max_tau = theory['lemma_grid_size'], theory['lemma_max_tau']
        self.print_header("Filter Inequality Check", f"grid of {grid_size} points, τ = 1..{max_tau}")
        try:
            checks = lemma_oracles(taus=range(1, max_tau + 1), grid_size=grid_size)
        except Exception as e:
            return self.handle_error(e, "checking the filter inequalities")

        rows = [c.to_dict() for c in checks]
        applicable = [c for c in checks if c.applicable]
        passed = all(c.passed for c in applicable)
        self.writer.write_json('lemma_checks.json', {
            'grid_size': grid_size,
            'max_tau': max_tau,
            'all_passed': passed,
            'checks': rows,
        })
        if 'csv' in self.config.formats:
            self.writer.write_csv('lemma_checks.csv', rows)
        self.console.print(self.table_formatter.create_lemma_table(checks))
        return self.finish(passed, extra={'checks': len(checks), 'applicable': len(applicable)})


def create_theory_commands(main_group):
    """Register theory commands with the main CLI group"""

    @main_group.command("theory-check")
    @run_options
    @click.pass_context
    def theory_check(ctx, **options):
        """Check the linearization bounds on the first configured cell

        For every seed the Jacobian constants are measured around the
        initialization, nonlinear and linearized gradient descent are compared
        up to the horizon, and the linearized error is split into noise,
        approximation and initialization terms.
        """
        config = resolve_config('theory-check', options)
        ctx.exit(TheoryCommands(config).execute('theory_check'))

    @main_group.command("lemma-check")
    @run_options
    @click.pass_context
    def lemma_check(ctx, **options):
        """Verify the scalar filter inequalities on a dense grid

        Exits with status 0 only if every applicable check passes.
        """
        config = resolve_config('lemma-check', options)
        ctx.exit(TheoryCommands(config).execute('lemma_check'))
