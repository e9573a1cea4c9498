"""
Run configuration: YAML sections, validation and flag overrides

Settings are resolved with the precedence command-line flags > config file >
built-in defaults. The defaults reproduce the synthetic experiment grid and
mirror ``config/defaults.yaml``.
"""

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from loguru import logger

from .errors import ConfigError
from .experiments import CellKey, ExperimentGrid, roughness_label

COMMANDS = ('single-run', 'synth-table', 'rate-fit', 'theory-check', 'lemma-check')
OUTPUT_FORMATS = ('csv', 'json')
THREADS_ENV = 'UNTRAINED_PRIOR_THREADS'
OUTPUT_ENV = 'UNTRAINED_PRIOR_OUTPUT'

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'grid': {
        'n': 64,
        'k': 4096,
        'p_values': [1.5, 0.5],
        'q': 4.0,
        'alignments': ['aligned', 'non-aligned'],
        'snr_list': [1.0, 3.0, 9.0, 27.0, 81.0],
        'repetitions': 20,
    },
    'dynamics': {
        'tau_max': 1500,
        'fudge_L': 1.05,
        'eta': 1.0,
    },
    'theory': {
        'horizon': 50,
        'n_probes': 8,
        'delta': 0.05,
        'seeds': 20,
        'lemma_grid_size': 100_000,
        'lemma_max_tau': 100,
    },
    'output': {
        'directory': 'results',
        'formats': ['csv', 'json'],
    },
    'run': {
        'base_seed': 0,
        'rep': 0,
    },
}


class _Field(NamedTuple):
    kind: str
    minimum: Optional[float] = None
    strict: bool = True


SCHEMA: Dict[str, Dict[str, _Field]] = {
    'grid': {
        'n': _Field('int', 1, strict=False),
        'k': _Field('int', 1, strict=False),
        'p_values': _Field('float_list', 0),
        'q': _Field('float', 0),
        'alignments': _Field('alignment_list'),
        'snr_list': _Field('float_list', 0),
        'repetitions': _Field('int', 2, strict=False),
    },
    'dynamics': {
        'tau_max': _Field('int', 0, strict=False),
        'fudge_L': _Field('float', 0),
        'eta': _Field('float', 0),
    },
    'theory': {
        'horizon': _Field('int', 1, strict=False),
        'n_probes': _Field('int', 1, strict=False),
        'delta': _Field('failure_probability'),
        'seeds': _Field('int', 1, strict=False),
        'lemma_grid_size': _Field('int', 1000, strict=False),
        'lemma_max_tau': _Field('int', 1, strict=False),
    },
    'output': {
        'directory': _Field('str'),
        'formats': _Field('format_list'),
    },
    'run': {
        'base_seed': _Field('int', 0, strict=False),
        'rep': _Field('int', 0, strict=False),
    },
}


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_alignment(value: Any) -> Optional[bool]:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return {'aligned': True, 'non-aligned': False}.get(value.strip().lower())
    return None


class RunConfigValidator:
    """Validates configuration mappings and returns a list of errors."""

    @staticmethod
    def _check_minimum(name: str, value: float, rule: _Field) -> List[str]:
        if rule.minimum is None:
            return []
        if rule.strict and not value > rule.minimum:
            return [f"{name}: must be greater than {rule.minimum:g}, got {value}"]
        if not rule.strict and value < rule.minimum:
            return [f"{name}: must be at least {rule.minimum:g}, got {value}"]
        return []

    @classmethod
    def _check_value(cls, name: str, value: Any, rule: _Field) -> List[str]:
        if rule.kind == 'int':
            if not isinstance(value, int) or isinstance(value, bool):
                return [f"{name}: expected an integer, got {value!r}"]
            return cls._check_minimum(name, value, rule)
        if rule.kind == 'float':
            if not _is_number(value):
                return [f"{name}: expected a number, got {value!r}"]
            return cls._check_minimum(name, float(value), rule)
        if rule.kind == 'failure_probability':
            if not _is_number(value) or not 0 < value < 0.25:
                return [f"{name}: expected a number in (0, 0.25), got {value!r}"]
            return []
        if rule.kind == 'str':
            if not isinstance(value, str) or not value:
                return [f"{name}: expected a non-empty string, got {value!r}"]
            return []

        if not isinstance(value, (list, tuple)) or not value:
            return [f"{name}: expected a non-empty list, got {value!r}"]
        errors = []
        for item in value:
            if rule.kind == 'float_list':
                if not _is_number(item):
                    errors.append(f"{name}: expected numbers, got {item!r}")
                else:
                    errors.extend(cls._check_minimum(name, float(item), rule))
            elif rule.kind == 'alignment_list' and _parse_alignment(item) is None:
                errors.append(f"{name}: expected 'aligned' or 'non-aligned', got {item!r}")
            elif rule.kind == 'format_list' and item not in OUTPUT_FORMATS:
                errors.append(f"{name}: expected one of {', '.join(OUTPUT_FORMATS)}, got {item!r}")
        return errors

    @classmethod
    def validate_config(cls, config: Any) -> List[str]:
        """Validate a (possibly partial) configuration mapping."""
        if config is None:
            return []
        if not isinstance(config, Mapping):
            return [f"configuration must be a mapping of sections, got {type(config).__name__}"]

        errors = []
        for section, values in config.items():
            if section not in SCHEMA:
                errors.append(f"{section}: unknown section (expected one of {', '.join(SCHEMA)})")
                continue
            if values is None:
                continue
            if not isinstance(values, Mapping):
                errors.append(f"{section}: section must be a mapping of key: value pairs")
                continue
            for key, value in values.items():
                name = f"{section}.{key}"
                if key not in SCHEMA[section]:
                    errors.append(f"{name}: unknown key")
                    continue
                errors.extend(cls._check_value(name, value, SCHEMA[section][key]))
        return errors


@dataclass
class RunConfig:
    command: str
    settings: Dict[str, Dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    max_workers: Optional[int] = None
    source: Optional[Path] = None

    def section(self, name: str) -> Dict[str, Any]:
        return self.settings[name]

    @property
    def grid(self) -> ExperimentGrid:
        grid = self.settings['grid']
        dynamics = self.settings['dynamics']
        return ExperimentGrid(
            n=grid['n'],
            k=grid['k'],
            p_values=tuple(grid['p_values']),
            q=float(grid['q']),
            alignments=tuple(_parse_alignment(a) for a in grid['alignments']),
            snr_list=tuple(grid['snr_list']),
            repetitions=grid['repetitions'],
            tau_max=dynamics['tau_max'],
            fudge_L=float(dynamics['fudge_L']),
            eta=float(dynamics['eta']),
            base_seed=self.base_seed,
        )

    @property
    def cell(self) -> CellKey:
        """The cell used by single-cell commands: first alignment, first p, first SNR."""
        grid = self.grid
        return CellKey(grid.alignments[0], grid.p_values[0], grid.snr_list[0])

    @property
    def base_seed(self) -> int:
        return self.settings['run']['base_seed']

    @property
    def rep(self) -> int:
        return self.settings['run']['rep']

    @property
    def output_dir(self) -> Path:
        return Path(self.settings['output']['directory'])

    @property
    def formats(self) -> Tuple[str, ...]:
        return tuple(self.settings['output']['formats'])

    def echo(self) -> Dict[str, Any]:
        """Resolved settings as written to the manifest."""
        return {
            'command': self.command,
            'source': None if self.source is None else str(self.source),
            'max_workers': self.max_workers,
            **copy.deepcopy(self.settings),
        }


def _load_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        with open(path, 'r') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError([f"config file {path} is not valid YAML: {e}"]) from e
    return data or {}


def _nest(overrides: Mapping[str, Any]) -> Dict[str, Dict[str, Any]]:
    """Turn {'grid.snr_list': [1, 3]} into {'grid': {'snr_list': [1, 3]}}, skipping None values."""
    nested: Dict[str, Dict[str, Any]] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition('.')
        if isinstance(value, tuple):
            value = list(value)
        nested.setdefault(section, {})[key] = value
    return nested


def _merge(settings: Dict[str, Dict[str, Any]], layer: Mapping[str, Any]) -> None:
    for section, values in layer.items():
        settings[section].update(values or {})


def get_max_workers() -> Optional[int]:
    """Worker cap from the environment; None lets the executor choose."""
    raw = os.getenv(THREADS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError([f"{THREADS_ENV}: expected a positive integer, got {raw!r}"]) from None
    if value < 1:
        raise ConfigError([f"{THREADS_ENV}: expected a positive integer, got {raw!r}"])
    return value


def ensure_output_directory(directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError([f"output.directory: cannot create {directory}: {e.strerror or e}"]) from e
    if not os.access(directory, os.W_OK):
        raise ConfigError([f"output.directory: {directory} is not writable"])
    return directory


def parse_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None,
                 command: str = 'synth-table') -> RunConfig:
    """Resolve defaults, the optional YAML file and dotted flag overrides into a RunConfig.

    Raises:
        ConfigError: naming every offending key.
    """
    if command not in COMMANDS:
        raise ConfigError([f"command: unknown command '{command}'"])
    load_dotenv()

    settings = copy.deepcopy(DEFAULTS)
    env_output = os.getenv(OUTPUT_ENV)
    if env_output:
        settings['output']['directory'] = env_output

    errors: List[str] = []
    file_data: Dict[str, Any] = {}
    if path is not None:
        file_data = _load_file(path)
        errors.extend(RunConfigValidator.validate_config(file_data))

    flag_data = _nest(overrides or {})
    errors.extend(RunConfigValidator.validate_config(flag_data))
    if errors:
        raise ConfigError(errors)

    _merge(settings, file_data)
    _merge(settings, flag_data)
    labels = [roughness_label(float(p)) for p in settings['grid']['p_values']]
    if len(set(labels)) != len(labels):
        raise ConfigError([f"grid.p_values: {settings['grid']['p_values']} share a roughness label; "
                           f"use at most one p >= 1 and one p < 1"])

    config = RunConfig(
        command=command,
        settings=settings,
        max_workers=get_max_workers(),
        source=None if path is None else Path(path),
    )
    ensure_output_directory(config.output_dir)
    logger.debug(f"resolved configuration for {command}: output={config.output_dir} workers={config.max_workers}")
    return config
