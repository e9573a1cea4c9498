"""
Table formatting utilities for the untrained-prior CLI
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from rich import box
from rich.console import Console
from rich.table import Table

from ..experiments import CellSummary, RateFit, ReferenceComparison, Summary, alignment_label, roughness_label
from ..theory import ClosenessReport, LemmaCheck
from .console import ConsoleFormatter

_fmt = ConsoleFormatter.format_float
_status = ConsoleFormatter.format_status


class RichTableFormatter:
    """Rich table formatting utilities for experiment and theory reports"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    @staticmethod
    def _mean_std(cell: Optional[CellSummary], metric: str, digits: int) -> str:
        if cell is None:
            return "-"
        return f"{_fmt(cell.mean[metric], digits)} ± {_fmt(cell.std[metric], digits)}"

    @classmethod
    def create_summary_table(cls, summary: Summary, aligned: bool, metrics: Sequence[str] = ('e_min', 'e_dp'),
                             title: Optional[str] = None) -> Table:
        """One row per SNR, mean ± std per (p, metric), smooth configurations first"""
        keys = [key for key in summary if key.aligned == aligned]
        p_values = sorted({key.p for key in keys}, reverse=True)
        snrs = sorted({key.snr for key in keys})
        digits = 5 if metrics[0].startswith('e_') else 1

        table = Table(title=title or f"{alignment_label(aligned).title()} configurations", box=box.ROUNDED)
        table.add_column("SNR", justify="right", style="cyan")
        for p in p_values:
            for metric in metrics:
                table.add_column(f"{roughness_label(p)} {metric}", justify="right")

        for snr in snrs:
            row = [f"{snr:g}"]
            for p in p_values:
                cell = next((summary[k] for k in keys if k.p == p and k.snr == snr), None)
                row.extend(cls._mean_std(cell, metric, digits) for metric in metrics)
            table.add_row(*row)
        return table

    @staticmethod
    def create_rate_fit_table(fits: Iterable[RateFit], reference: Optional[Mapping[str, Mapping[str, float]]] = None) -> Table:
        table = Table(title="Convergence Rate Fits", box=box.ROUNDED)
        table.add_column("Configuration", style="cyan")
        table.add_column("SNR levels", style="dim")
        table.add_column("Slope", justify="right")
        table.add_column("ν̂", justify="right", style="green")
        table.add_column("Adj. R²", justify="right")
        if reference is not None:
            table.add_column("Published ν̂ / R²", justify="right", style="dim")

        for fit in fits:
            row = [
                fit.config,
                ", ".join(f"{s:g}" for s in fit.snr_subset),
                _fmt(fit.slope, 4),
                "∞" if fit.nu_hat == float('inf') else f"{fit.nu_hat:.2f}",
                _fmt(fit.adjusted_r2, 5),
            ]
            if reference is not None:
                published = reference.get(fit.config)
                row.append("-" if published is None else f"{published['nu_hat']:.2f} / {published['adjusted_r2']:.5f}")
            table.add_row(*row)
        return table

    @staticmethod
    def create_reference_table(comparisons: Iterable[ReferenceComparison]) -> Table:
        table = Table(title="Comparison with Published Means", box=box.ROUNDED)
        table.add_column("Configuration", style="cyan")
        table.add_column("SNR", justify="right")
        table.add_column("Metric")
        table.add_column("Mean", justify="right")
        table.add_column("Published", justify="right", style="dim")
        table.add_column("Tolerance", justify="right", style="dim")
        table.add_column("Status", justify="center")
        for c in comparisons:
            table.add_row(c.config, f"{c.snr:g}", c.metric, _fmt(c.mean), _fmt(c.reference_mean),
                          _fmt(c.tolerance), _status(c.passed))
        return table

    @staticmethod
    def create_lemma_table(checks: Sequence[LemmaCheck]) -> Table:
        """Checks grouped by inequality and exponent; the margin is the worst bound/sup ratio"""
        groups: Dict[tuple, List[LemmaCheck]] = {}
        for check in checks:
            groups.setdefault((check.kind, check.exponent), []).append(check)

        table = Table(title="Filter Inequalities", box=box.ROUNDED)
        table.add_column("Inequality", style="cyan")
        table.add_column("Exponent", justify="right")
        table.add_column("Iterations", justify="right")
        table.add_column("Failures", justify="right")
        table.add_column("Min margin", justify="right")
        table.add_column("Status", justify="center")
        for (kind, exponent), group in groups.items():
            applicable = [c for c in group if c.applicable]
            failures = sum(not c.passed for c in applicable)
            margin = min((c.bound / c.refined_sup for c in applicable if c.refined_sup > 0), default=None)
            status = _status(failures == 0) if applicable else "[dim]n/a[/dim]"
            table.add_row(kind.replace('_', ' '), f"{exponent:g}", f"{group[0].tau}..{group[-1].tau}",
                          str(failures), _fmt(margin, 3), status)
        return table

    @staticmethod
    def create_closeness_table(reports: Sequence[ClosenessReport], seeds: Sequence[int]) -> Table:
        table = Table(title="Linearization Closeness", box=box.ROUNDED)
        table.add_column("Seed", justify="right", style="cyan")
        table.add_column("ε", justify="right")
        table.add_column("ε₀", justify="right")
        table.add_column("max residual gap / bound", justify="right")
        table.add_column("max parameter gap / bound", justify="right")
        table.add_column("Hypotheses", justify="center")
        table.add_column("Status", justify="center")
        for seed, report in zip(seeds, reports):
            rows = [r for r in report.rows if r.tau > 0]
            residual = max((r.residual_gap / r.residual_bound for r in rows if r.residual_bound > 0), default=0.0)
            parameter = max((r.parameter_gap / r.parameter_bound for r in rows if r.parameter_bound > 0), default=0.0)
            hypotheses = all(report.hypotheses.values())
            table.add_row(str(seed), _fmt(report.eps), _fmt(report.eps0), _fmt(residual, 3), _fmt(parameter, 3),
                          _status(hypotheses), _status(report.all_passed))
        return table

    @staticmethod
    def create_checks_table(checks: Mapping[str, bool], title: str = "Checks") -> Table:
        table = Table(title=title, box=box.ROUNDED)
        table.add_column("Check", style="cyan")
        table.add_column("Status", justify="center")
        for name, passed in checks.items():
            table.add_row(name.replace('_', ' '), _status(passed))
        return table
