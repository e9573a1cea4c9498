"""
Base Command class for untrained-prior CLI commands

This module provides the BaseCommand class that encapsulates functionality
shared across all command handlers: error reporting, headers, summary panels,
and artifact writing.
"""

import sys
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Any, Dict, Optional

from loguru import logger
from rich.console import Console
from rich.panel import Panel

from ..config import RunConfig
from ..errors import ConfigError, DivergenceError, ShapeMismatchError
from ..formatting import ConsoleFormatter, ProgressFormatter, RichTableFormatter
from ..reporting import ArtifactWriter

EXIT_OK = 0
EXIT_FAILED = 1


@contextmanager
def json_logging_mode():
    """Context manager for JSON logging mode

    Adds a serialized loguru handler on stderr and removes it again on exit.
    """
    handler_id = logger.add(
        sys.stderr,
        format="{time:YYYY-MM-DDTHH:mm:ss.SSSZ} | {level} | {message}",
        serialize=True,
        level="INFO",
    )
    try:
        yield
    finally:
        logger.remove(handler_id)


@contextmanager
def console_logging_mode():
    """Plain loguru handler on stderr at INFO"""
    handler_id = logger.add(sys.stderr, level="INFO")
    try:
        yield
    finally:
        logger.remove(handler_id)


class BaseCommand(ABC):
    """
    Abstract base class for all untrained-prior commands.

    Provides common functionality including:
    - Error handling with a failure report on disk
    - Consistent output formatting
    - Artifact and manifest writing
    """

    def __init__(self, config: RunConfig, console: Optional[Console] = None):
        self.config = config
        self.console = console or Console()
        self.formatter = ConsoleFormatter(self.console)
        self.table_formatter = RichTableFormatter(self.console)
        self.progress_formatter = ProgressFormatter(self.console)
        self.writer = ArtifactWriter(config.output_dir, config)

    @abstractmethod
    def execute(self, command: str, **kwargs) -> int:
        """
        Execute the command with the given parameters.

        Returns:
            Process exit status
        """

    def handle_error(self, error: Exception, context: str, partial: bool = False) -> int:
        """
        Report an error on the console and as failure.json, and finish the manifest.

        Args:
            error: The exception that occurred
            context: What the command was doing when it failed
            partial: Whether some results were already written

        Returns:
            Nonzero exit status
        """
        if isinstance(error, ConfigError):
            self.formatter.print_error("Configuration Error", context)
            for message in error.errors:
                self.console.print(f"  • {message}")
        elif isinstance(error, DivergenceError):
            self.formatter.print_error("Gradient Descent Diverged", context)
            self.console.print(f"Error: {error}")
            self.console.print("\n[yellow]💡 Try a smaller step size with --eta[/yellow]")
        elif isinstance(error, ShapeMismatchError):
            self.formatter.print_error("Shape Mismatch", context)
            self.console.print(f"Error: {error}")
        else:
            self.formatter.print_error(f"Error in {context}")
            self.console.print(f"Error: {error}")

        logger.opt(exception=error).debug(f"{context} failed")
        try:
            path = self.writer.write_failure(error, context, partial=partial)
            self.writer.write_manifest(status='failed', partial=partial)
            self.console.print(f"[dim]Failure report written to {path}[/dim]")
        except OSError as e:
            logger.error(f"could not write failure report: {e}")
        return EXIT_FAILED

    def print_header(self, title: str, subtitle: Optional[str] = None) -> None:
        self.console.print(Panel.fit(f"[bold blue]{title}[/bold blue]"))
        if subtitle:
            self.console.print(f"[dim]{subtitle}[/dim]")
        self.console.print()

    def print_summary(self, title: str, stats: Dict[str, Any]) -> None:
        """
        Print a summary panel with key statistics.

        Args:
            title: Title for the summary panel
            stats: Dictionary of statistics to display
        """
        lines = []
        for key, value in stats.items():
            formatted_key = key.replace('_', ' ')
            if isinstance(value, float):
                value = self.formatter.format_float(value)
            lines.append(f"[bold]{formatted_key}:[/bold] {value}")
        self.console.print(Panel("\n".join(lines), title=title, border_style="blue"))

    def finish(self, passed: bool, extra: Optional[Dict[str, Any]] = None) -> int:
        """Write the manifest and report where the artifacts went."""
        status = 'ok' if passed else 'checks_failed'
        manifest = self.writer.write_manifest(status=status, extra=extra)
        self.console.print(f"\n[dim]{len(self.writer.artifacts)} artifact(s) and {manifest.name} "
                           f"written to {self.writer.directory}[/dim]")
        if passed:
            self.formatter.print_success("All checks passed")
            return EXIT_OK
        self.formatter.print_warning("Some checks failed; see the report for details")
        return EXIT_FAILED
