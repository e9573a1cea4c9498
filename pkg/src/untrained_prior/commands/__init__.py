"""
untrained-prior Commands Module

Command handlers grouped by concern:
- experiments.py: gradient descent experiments (single-run, synth-table, rate-fit)
- theory.py: numerical checks of the theory (theory-check, lemma-check)
"""

from .base import BaseCommand, console_logging_mode, json_logging_mode
from .experiments import ExperimentCommands, create_experiment_commands
from .theory import TheoryCommands, create_theory_commands

__all__ = [
    'BaseCommand',
    'console_logging_mode',
    'json_logging_mode',
    'ExperimentCommands',
    'create_experiment_commands',
    'TheoryCommands',
    'create_theory_commands',
]
