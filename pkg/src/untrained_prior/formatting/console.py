"""
Console formatting utilities for the untrained-prior CLI
"""

from typing import Optional

from rich.console import Console


class ConsoleFormatter:
    """Status messages and small number formats"""

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()

    @staticmethod
    def format_float(value: Optional[float], digits: int = 5) -> str:
        """Fixed precision for moderate values, scientific notation otherwise"""
        if value is None:
            return "-"
        if value == 0 or 1e-3 <= abs(value) < 1e5:
            return f"{value:.{digits}f}"
        return f"{value:.{max(digits - 2, 1)}e}"

    @staticmethod
    def format_status(passed: bool) -> str:
        return "[green]pass[/green]" if passed else "[red]FAIL[/red]"

    def print_error(self, message: str, details: Optional[str] = None):
        self.console.print(f"[red]❌ {message}[/red]")
        if details:
            self.console.print(f"[dim]{details}[/dim]")

    def print_success(self, message: str):
        self.console.print(f"[green]✅ {message}[/green]")

    def print_warning(self, message: str):
        self.console.print(f"[yellow]⚠️  {message}[/yellow]")
