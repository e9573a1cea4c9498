"""
Artifact writing: CSV and JSON results, manifest and failure report
"""

import csv
import json
import platform
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from loguru import logger

from . import __version__
from .config import RunConfig

MANIFEST_NAME = 'manifest.json'
FAILURE_NAME = 'failure.json'


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"object of type {type(value).__name__} is not JSON serializable")


class ArtifactWriter:
    """Writes result files into one output directory and keeps track of them."""

    def __init__(self, directory: Union[str, Path], config: Optional[RunConfig] = None):
        self.directory = Path(directory)
        self.config = config
        self.artifacts: List[Path] = []
        self.seeds: Dict[str, Any] = {}
        self._started_at = datetime.now(timezone.utc)
        self._clock = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.directory / name

    def register(self, *paths: Path) -> None:
        for path in paths:
            if path not in self.artifacts:
                self.artifacts.append(path)

    def write_csv(self, name: str, rows: Sequence[Mapping[str, Any]],
                  fieldnames: Optional[Iterable[str]] = None) -> Path:
        path = self.path(name)
        fieldnames = list(fieldnames if fieldnames is not None else (rows[0].keys() if rows else []))
        with open(path, 'w', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
        self.register(path)
        logger.debug(f"wrote {len(rows)} rows to {path}")
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self.path(name)
        with open(path, 'w') as f:
            json.dump(data, f, indent=2, default=_json_default)
        self.register(path)
        return path

    def write_rows(self, stem: str, rows: Sequence[Mapping[str, Any]], formats: Sequence[str]) -> List[Path]:
        """Write the same rows once per requested format."""
        paths = []
        if 'csv' in formats:
            paths.append(self.write_csv(f'{stem}.csv', rows))
        if 'json' in formats:
            paths.append(self.write_json(f'{stem}.json', list(rows)))
        return paths

    def write_manifest(self, status: str = 'ok', partial: bool = False,
                       extra: Optional[Mapping[str, Any]] = None) -> Path:
        manifest = {
            'status': status,
            'partial': partial,
            'version': __version__,
            'started_at': self._started_at.isoformat(),
            'wall_clock_seconds': round(time.perf_counter() - self._clock, 3),
            'python': platform.python_version(),
            'numpy': np.__version__,
            'config': None if self.config is None else self.config.echo(),
            'seeds': dict(self.seeds),
            'artifacts': [p.name for p in self.artifacts],
        }
        manifest.update(extra or {})
        path = self.path(MANIFEST_NAME)
        with open(path, 'w') as f:
            json.dump(manifest, f, indent=2, default=_json_default)
        return path

    def write_failure(self, error: BaseException, context: str, partial: bool = False) -> Path:
        report = {
            'error_type': type(error).__name__,
            'message': str(error),
            'context': context,
            'partial': partial,
        }
        errors = getattr(error, 'errors', None)
        if errors:
            report['errors'] = list(errors)
        path = self.path(FAILURE_NAME)
        with open(path, 'w') as f:
            json.dump(report, f, indent=2, default=_json_default)
        return path
