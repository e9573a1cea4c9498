"""
Experiment Commands for the untrained-prior CLI

Handles: single-run, synth-table, rate-fit.
"""

import time
from typing import List, Optional

import click
from loguru import logger

from ..experiments import (
    REFERENCE_RATE_FITS,
    RunRecord,
    Summary,
    alignment_label,
    compare_to_reference,
    load_summary,
    result_tables,
    plot_data,
    run_grid,
    simulate_cell,
    standard_rate_fits,
    summarize,
)
from ..dynamics import write_trajectory_csv
from .base import BaseCommand
from .options import resolve_config, run_options


class GridAborted(Exception):
    """The grid stopped early; ``records`` holds the runs that finished."""

    def __init__(self, cause: Exception, records: List[RunRecord]):
        super().__init__(str(cause))
        self.cause = cause
        self.records = records


class ExperimentCommands(BaseCommand):
    """Command handlers for gradient descent experiments"""

    def execute(self, command: str, **kwargs) -> int:
        if command == 'single_run':
            return self.single_run(**kwargs)
        elif command == 'synth_table':
            return self.synth_table(**kwargs)
        elif command == 'rate_fit':
            return self.rate_fit(**kwargs)
        else:
            raise ValueError(f"Unknown experiment command: {command}")

    def single_run(self) -> int:
        """One trajectory for the first configured cell"""
        grid = self.config.grid
        key, rep = self.config.cell, self.config.rep
        self.print_header("Single Gradient Descent Run",
                          f"{key.config_label}  p={key.p:g}  SNR={key.snr:g}  rep={rep}  seed={grid.base_seed}")
        try:
            record, trajectory = simulate_cell(grid, key, rep)
        except Exception as e:
            return self.handle_error(e, f"running {key.config_label} at SNR {key.snr:g}")

        self.writer.seeds = {'base_seed': grid.base_seed, 'run': record.seed}
        paths = write_trajectory_csv(self.writer.path('trajectory.csv'), trajectory, extra_header=record.to_row())
        self.writer.register(*paths)
        summary = record.to_row()
        summary['threshold'] = trajectory.threshold
        summary['final_residual'] = float(trajectory.residual_norms[-1])
        self.writer.write_json('summary.json', summary)

        self.print_summary("Run Summary", {
            'configuration': key.config_label,
            'noise level ε': record.noise_level,
            'threshold L·ε': trajectory.threshold,
            'τ_dp': f"{record.tau_dp}{' (saturated)' if record.saturated else ''}",
            'τ_min': record.tau_min,
            'relative error at τ_dp': record.e_dp,
            'relative error at τ_min': record.e_min,
        })
        return self.finish(record.discrepancy_ok)

    def _run_grid(self) -> List[RunRecord]:
        grid = self.config.grid
        total = len(grid.cells()) * grid.repetitions
        records: List[RunRecord] = []
        with self.progress_formatter.create_progress_bar("Running grid") as progress:
            task = progress.add_task("Running grid", total=total)

            def on_record(record: RunRecord) -> None:
                records.append(record)
                progress.advance(task)

            try:
                return run_grid(grid, self.config.max_workers, on_record)
            except Exception as e:
                raise GridAborted(e, records) from e

    def _write_records(self, records: List[RunRecord], partial: bool = False) -> None:
        ordered = sorted(records, key=lambda r: r.key.sort_key() + (r.rep,))
        self.writer.write_rows('runs', [r.to_row() for r in ordered], self.config.formats)
        if partial:
            logger.warning(f"flushed {len(ordered)} completed runs before the failure")

    def _grid_summary(self) -> Summary:
        grid = self.config.grid
        self.writer.seeds = {'base_seed': grid.base_seed}
        self.print_header("Synthetic Experiment Grid",
                          f"n={grid.n}  k={grid.k}  q={grid.q:g}  τ_max={grid.tau_max}  L={grid.fudge_L:g}  "
                          f"{len(grid.cells())} cells × {grid.repetitions} repetitions")
        start = time.perf_counter()
        records = self._run_grid()
        elapsed = time.perf_counter() - start
        self._write_records(records)
        summary = summarize(records)
        self.writer.write_rows('summary', [cell.to_row() for cell in summary.values()], self.config.formats)
        saturated = sum(r.saturated for r in records)
        self.print_summary("Grid Summary", {
            'runs': len(records),
            'saturated runs': saturated,
            'wall clock': self.progress_formatter.format_duration(elapsed),
        })
        if saturated:
            self.formatter.print_warning(f"{saturated} run(s) never reached the discrepancy level")
        self._discrepancy_ok = all(r.discrepancy_ok for r in records)
        return summary

    def _write_rate_fits(self, summary: Summary) -> None:
        fits = standard_rate_fits(summary)
        if not fits:
            raise ValueError("no configuration has enough SNR levels for a rate fit")
        self.writer.write_rows('rate_fits', [fit.to_dict() for fit in fits], self.config.formats)
        for fit in fits:
            key = next(k for k in summary if k.config_label == fit.config)
            rows = plot_data(summary, key.aligned, key.p, fit)
            self.writer.write_csv(f"plot_{fit.config}.csv", rows)
        self.console.print(self.table_formatter.create_rate_fit_table(fits, REFERENCE_RATE_FITS))

    def synth_table(self) -> int:
        """Run the whole grid and write the error and stopping index tables"""
        self._discrepancy_ok = True
        try:
            summary = self._grid_summary()
        except GridAborted as e:
            if e.records:
                self._write_records(e.records, partial=True)
            return self.handle_error(e.cause, "running the experiment grid", partial=bool(e.records))
        except Exception as e:
            return self.handle_error(e, "summarizing the experiment grid")

        for name, rows in result_tables(summary).items():
            self.writer.write_rows(name, rows, self.config.formats)
        for aligned in sorted({key.aligned for key in summary}, reverse=True):
            label = alignment_label(aligned)
            self.console.print(self.table_formatter.create_summary_table(
                summary, aligned, title=f"Relative errors, {label}"))
            self.console.print(self.table_formatter.create_summary_table(
                summary, aligned, metrics=('tau_min', 'tau_dp'), title=f"Stopping indices, {label}"))

        try:
            self._write_rate_fits(summary)
        except ValueError as e:
            self.formatter.print_warning(str(e))

        comparisons = compare_to_reference(summary)
        if comparisons:
            self.writer.write_rows('reference_comparison', [c.to_dict() for c in comparisons], self.config.formats)
            self.console.print(self.table_formatter.create_reference_table(comparisons))

        return self.finish(self._discrepancy_ok, extra={
            'reference_matches': sum(c.passed for c in comparisons),
            'reference_cells': len(comparisons),
        })

    def rate_fit(self, summary_path: Optional[str] = None) -> int:
        """Fit convergence rates from a stored summary, or run the grid first"""
        self._discrepancy_ok = True
        try:
            if summary_path is not None:
                self.print_header("Convergence Rate Fits", f"from {summary_path}")
                summary = load_summary(summary_path)
            else:
                summary = self._grid_summary()
        except GridAborted as e:
            if e.records:
                self._write_records(e.records, partial=True)
            return self.handle_error(e.cause, "running the experiment grid", partial=bool(e.records))
        except Exception as e:
            return self.handle_error(e, "loading the summary")

        try:
            self._write_rate_fits(summary)
        except ValueError as e:
            return self.handle_error(e, "fitting convergence rates")
        return self.finish(self._discrepancy_ok)


def create_experiment_commands(main_group):
    """Register experiment commands with the main CLI group"""

    @main_group.command("single-run")
    @run_options
    @click.pass_context
    def single_run(ctx, **options):
        """Run gradient descent for one cell and write its trajectory

        The cell is the first alignment, p and SNR of the configuration, so
        flags select it directly.

        Examples:

            untrained-prior single-run --aligned --p 1.5 --snr 81 --seed 7
        """
        config = resolve_config('single-run', options)
        ctx.exit(ExperimentCommands(config).execute('single_run'))

    @main_group.command("synth-table")
    @run_options
    @click.pass_context
    def synth_table(ctx, **options):
        """Run the synthetic experiment grid

        Writes per-run records, per-cell summaries, the error and stopping
        index tables for aligned and non-aligned operators, rate fits and a
        comparison with the published means.

        Examples:

            # Full grid: 4 configurations x 5 SNR levels x 20 repetitions
            untrained-prior synth-table --out results/

            # Quick look at the aligned configurations
            untrained-prior synth-table --aligned --reps 3 --tau-max 300
        """
        config = resolve_config('synth-table', options)
        ctx.exit(ExperimentCommands(config).execute('synth_table'))

    @main_group.command("rate-fit")
    @click.option('--summary', 'summary_path', type=click.Path(exists=True, dir_okay=False),
                  help='Summary CSV or JSON written by synth-table')
    @run_options
    @click.pass_context
    def rate_fit(ctx, summary_path: Optional[str], **options):
        """Estimate the smoothness exponent from the error decay in the SNR

        Regresses log mean e_min on log(1/SNR); the slope s gives ν̂ = s/(1 - s).
        Without --summary the grid is run first.
        """
        config = resolve_config('rate-fit', options)
        ctx.exit(ExperimentCommands(config).execute('rate_fit', summary_path=summary_path))
