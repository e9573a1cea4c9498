"""
Progress formatting utilities for the untrained-prior CLI
"""

from typing import Optional

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeRemainingColumn


class ProgressFormatter:
    """Progress bar over experiment runs"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    def create_progress_bar(self, description: str = "Running") -> Progress:
        return Progress(
            TextColumn("[bold blue]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            "[progress.percentage]{task.percentage:>3.0f}%",
            TimeRemainingColumn(),
            console=self.console,
            transient=True,
        )

    @staticmethod
    def format_duration(seconds: float) -> str:
        """Human readable wall clock time"""
        if seconds < 60:
            return f"{seconds:.1f}s"
        elif seconds < 3600:
            return f"{seconds / 60:.1f}m"
        else:
            return f"{seconds / 3600:.1f}h"
