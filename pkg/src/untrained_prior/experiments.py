"""
Synthetic experiment grid: aligned/non-aligned operators, rough/smooth generators

Every run of the grid is identified by (alignment, p, SNR, repetition) and
gets its random streams from a seed derived from the base seed and those
coordinates, so cells can be run in any order and in parallel and still be
reproduced one by one.
"""

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy import stats

from .dynamics import GDConfig, Trajectory, run_gd
from .errors import DivergenceError
from .generator import ConvGenerator, WeightMatrix, sample_initial_weights
from .problems import LinearInverseProblem, NoiseModel, SpectralDesign, build_problem

METRICS = ('e_min', 'e_dp', 'tau_min', 'tau_dp')
OPERATOR_TAG = 1
RUN_TAG = 2
INFINITE_SNR_CODE = 2 ** 31 - 1


@dataclass(frozen=True)
class ExperimentGrid:
    n: int = 64
    k: int = 4096
    p_values: Tuple[float, ...] = (1.5, 0.5)
    q: float = 4.0
    alignments: Tuple[bool, ...] = (True, False)
    snr_list: Tuple[float, ...] = (1.0, 3.0, 9.0, 27.0, 81.0)
    repetitions: int = 20
    tau_max: int = 1500
    fudge_L: float = 1.05
    eta: float = 1.0
    base_seed: int = 0

    def __post_init__(self):
        if self.repetitions < 2:
            raise ValueError(f"repetitions must be at least 2 for a standard deviation, got {self.repetitions}")
        object.__setattr__(self, 'p_values', tuple(float(p) for p in self.p_values))
        object.__setattr__(self, 'alignments', tuple(bool(a) for a in self.alignments))
        object.__setattr__(self, 'snr_list', tuple(float(s) for s in self.snr_list))
        labels = [roughness_label(p) for p in self.p_values]
        if len(set(labels)) != len(labels):
            # summaries, tables and rate fits are keyed by configuration label
            raise ValueError(f"p values {list(self.p_values)} share a roughness label: {labels}; "
                             f"use at most one p >= 1 and one p < 1")

    def cells(self) -> List["CellKey"]:
        return [CellKey(aligned, p, snr)
                for aligned, p, snr in itertools.product(self.alignments, self.p_values, self.snr_list)]

    def runs(self) -> Iterator[Tuple["CellKey", int]]:
        return itertools.product(self.cells(), range(self.repetitions))

    @property
    def gd_config(self) -> GDConfig:
        return GDConfig(eta=self.eta, tau_max=self.tau_max, fudge_L=self.fudge_L)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['alignments'] = [alignment_label(a) for a in self.alignments]
        data['p_values'] = list(self.p_values)
        data['snr_list'] = list(self.snr_list)
        return data


def alignment_label(aligned: bool) -> str:
    return 'aligned' if aligned else 'non-aligned'


def roughness_label(p: float) -> str:
    """Covariance decay i^-p with p >= 1 is called smooth, slower decay rough."""
    return 'smooth' if p >= 1.0 else 'rough'


@dataclass(frozen=True, order=True)
class CellKey:
    aligned: bool
    p: float
    snr: float

    @property
    def config_label(self) -> str:
        return f"{alignment_label(self.aligned)}-{roughness_label(self.p)}"

    def sort_key(self) -> Tuple:
        return (not self.aligned, self.p, self.snr)


def _encode(coordinate: Any) -> int:
    if isinstance(coordinate, (bool, np.bool_)):
        return int(coordinate)
    if isinstance(coordinate, (int, np.integer)):
        return int(coordinate)
    if math.isinf(coordinate):
        return INFINITE_SNR_CODE
    return int(round(float(coordinate) * 1000))


def derive_seed(base_seed: int, *coordinates: Any) -> int:
    """Stable 32-bit seed from the base seed and integer-encoded coordinates."""
    entropy = [int(base_seed)] + [_encode(c) for c in coordinates]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def operator_seed(grid: ExperimentGrid, aligned: bool) -> int:
    """One random conjugator per alignment, shared by all p, SNR and repetitions."""
    return derive_seed(grid.base_seed, OPERATOR_TAG, aligned)


def run_seeds(grid: ExperimentGrid, key: CellKey, rep: int) -> Dict[str, int]:
    seed = derive_seed(grid.base_seed, RUN_TAG, key.aligned, key.p, key.snr, rep)
    noise_stream, init_stream = np.random.SeedSequence(seed).spawn(2)
    return {
        'run': seed,
        'operator': operator_seed(grid, key.aligned),
        'noise': int(noise_stream.generate_state(1)[0]),
        'init': int(init_stream.generate_state(1)[0]),
    }


@dataclass(eq=False)
class CellSetup:
    design: SpectralDesign
    problem: LinearInverseProblem
    gen: ConvGenerator
    C0: WeightMatrix
    omega: float
    seeds: Dict[str, int]


def prepare_cell(grid: ExperimentGrid, key: CellKey, rep: int) -> CellSetup:
    """Problem, generator and initial weights for one run.

    The initialization variance is omega^2 = sigma^2 / sqrt(n), with sigma
    the per-entry noise standard deviation.
    """
    seeds = run_seeds(grid, key, rep)
    design = SpectralDesign.create(grid.n, key.p, grid.q, key.aligned, seed=seeds['operator'])
    problem = build_problem(design, key.snr, seeds['noise'])
    sigma_noise = NoiseModel.from_snr(problem.y, key.snr).sigma_noise
    omega = sigma_noise / grid.n ** 0.25
    gen = ConvGenerator.create(design.mixing_matrix(), grid.k)
    C0 = sample_initial_weights(gen, omega, seeds['init'])
    return CellSetup(design=design, problem=problem, gen=gen, C0=C0, omega=omega, seeds=seeds)


@dataclass(frozen=True)
class RunRecord:
    aligned: bool
    p: float
    snr: float
    rep: int
    seed: int
    e_min: float
    e_dp: float
    tau_min: int
    tau_dp: int
    saturated: bool
    noise_level: float
    discrepancy_ok: bool

    @property
    def key(self) -> CellKey:
        return CellKey(self.aligned, self.p, self.snr)

    @property
    def config_label(self) -> str:
        return self.key.config_label

    def to_row(self) -> Dict[str, Any]:
        row = {'config': self.config_label}
        row.update(asdict(self))
        return row


def simulate_cell(grid: ExperimentGrid, key: CellKey, rep: int) -> Tuple[RunRecord, Trajectory]:
    """Run gradient descent for one repetition of one cell and extract both stopping indices.

    When the discrepancy level is never reached, tau_dp is set to tau_max and
    the record is flagged as saturated.
    """
    setup = prepare_cell(grid, key, rep)
    try:
        trajectory = run_gd(setup.gen, setup.C0, setup.problem, grid.gd_config)
    except DivergenceError as e:
        raise DivergenceError(e.iteration, e.last_finite_residual,
                              f"{key.config_label} snr={key.snr:g} rep={rep} seed={setup.seeds['run']}") from e

    relative = trajectory.relative_errors(float(np.linalg.norm(setup.problem.x_dag)))
    saturated = trajectory.tau_dp is None
    tau_dp = grid.tau_max if saturated else trajectory.tau_dp
    if saturated:
        logger.debug(f"{key.config_label} snr={key.snr:g} rep={rep}: discrepancy level not reached, saturated")

    record = RunRecord(
        aligned=key.aligned,
        p=key.p,
        snr=key.snr,
        rep=rep,
        seed=setup.seeds['run'],
        e_min=float(relative[trajectory.tau_min]),
        e_dp=float(relative[tau_dp]),
        tau_min=int(trajectory.tau_min),
        tau_dp=int(tau_dp),
        saturated=saturated,
        noise_level=float(setup.problem.noise_level),
        discrepancy_ok=trajectory.discrepancy_holds(),
    )
    return record, trajectory


def run_cell(grid: ExperimentGrid, key: CellKey, rep: int) -> RunRecord:
    return simulate_cell(grid, key, rep)[0]


def run_grid(grid: ExperimentGrid, max_workers: Optional[int] = None,
             on_record: Optional[Callable[[RunRecord], None]] = None) -> List[RunRecord]:
    """Run every (cell, repetition) on a thread pool; records come back sorted."""
    tasks = list(grid.runs())
    logger.info(f"running {len(tasks)} runs on up to {max_workers or 'default'} workers")
    records: List[RunRecord] = []
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(run_cell, grid, key, rep): (key, rep) for key, rep in tasks}
        try:
            for future in as_completed(futures):
                record = future.result()
                records.append(record)
                if on_record is not None:
                    on_record(record)
        except BaseException:
            for pending in futures:
                pending.cancel()
            raise
    return sorted(records, key=lambda r: r.key.sort_key() + (r.rep,))


# ============================================================================
# Aggregation
# ============================================================================

@dataclass
class CellSummary:
    key: CellKey
    count: int
    saturated: int
    mean: Dict[str, float] = field(default_factory=dict)
    std: Dict[str, float] = field(default_factory=dict)

    def standard_error(self, metric: str) -> float:
        return self.std[metric] / math.sqrt(self.count)

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            'config': self.key.config_label,
            'aligned': self.key.aligned,
            'p': self.key.p,
            'snr': self.key.snr,
            'count': self.count,
            'saturated': self.saturated,
        }
        for metric in METRICS:
            row[f'{metric}_mean'] = self.mean[metric]
            row[f'{metric}_std'] = self.std[metric]
        return row

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "CellSummary":
        aligned = row['aligned']
        if isinstance(aligned, str):
            aligned = aligned.strip().lower() in ('true', '1', 'yes')
        return cls(
            key=CellKey(bool(aligned), float(row['p']), float(row['snr'])),
            count=int(row['count']),
            saturated=int(row.get('saturated') or 0),
            mean={m: float(row[f'{m}_mean']) for m in METRICS},
            std={m: float(row[f'{m}_std']) for m in METRICS},
        )


Summary = Dict[CellKey, CellSummary]


def summarize(records: Sequence[RunRecord]) -> Summary:
    """Sample mean and Bessel-corrected standard deviation per cell."""
    if not records:
        raise ValueError("no records to summarize")
    groups: Dict[CellKey, List[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.key, []).append(record)

    summary: Summary = {}
    for key in sorted(groups, key=CellKey.sort_key):
        cell = groups[key]
        if len(cell) < 2:
            raise ValueError(f"cell {key.config_label} snr={key.snr:g} has {len(cell)} record(s); need at least 2")
        values = {m: np.array([getattr(r, m) for r in cell], dtype=np.float64) for m in METRICS}
        summary[key] = CellSummary(
            key=key,
            count=len(cell),
            saturated=sum(r.saturated for r in cell),
            mean={m: float(np.mean(v)) for m, v in values.items()},
            std={m: float(np.std(v, ddof=1)) for m, v in values.items()},
        )
    return summary


@dataclass(frozen=True)
class RateFit:
    config: str
    slope: float
    intercept: float
    nu_hat: float
    r_squared: float
    adjusted_r2: float
    snr_subset: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['nu_hat'] = self.nu_hat if math.isfinite(self.nu_hat) else None
        data['snr_subset'] = list(self.snr_subset)
        return data


def _config_cells(summary: Summary, aligned: bool, p: float,
                  snr_subset: Optional[Sequence[float]] = None) -> List[CellSummary]:
    cells = [s for key, s in summary.items() if key.aligned == aligned and key.p == p]
    if snr_subset is not None:
        wanted = {float(s) for s in snr_subset}
        cells = [s for s in cells if s.key.snr in wanted]
    return sorted(cells, key=lambda s: s.key.snr)


def fit_rate(summary: Summary, aligned: bool, p: float, snr_subset: Optional[Sequence[float]] = None) -> RateFit:
    """Least squares of log(mean e_min) on log(1/SNR).

    The slope s estimates nu/(nu+1), so nu_hat = s/(1-s).
    """
    cells = _config_cells(summary, aligned, p, snr_subset)
    if len(cells) < 3:
        raise ValueError(f"rate fit needs at least 3 SNR levels, got {len(cells)}")
    x = np.log(1.0 / np.array([c.key.snr for c in cells]))
    y = np.log(np.array([c.mean['e_min'] for c in cells]))
    if np.ptp(x) == 0:
        raise ValueError("rate fit design is degenerate: all SNR levels are equal")

    result = stats.linregress(x, y)
    slope = float(result.slope)
    r_squared = float(result.rvalue ** 2)
    points = len(cells)
    adjusted = 1.0 - (1.0 - r_squared) * (points - 1) / (points - 2) if points > 2 else r_squared
    nu_hat = slope / (1.0 - slope) if slope < 1.0 else math.inf
    return RateFit(
        config=cells[0].key.config_label,
        slope=slope,
        intercept=float(result.intercept),
        nu_hat=nu_hat,
        r_squared=r_squared,
        adjusted_r2=adjusted,
        snr_subset=tuple(c.key.snr for c in cells),
    )


# the non-aligned rough fit leaves out the highest SNR level
STANDARD_RATE_FITS = (
    ('aligned-smooth', None),
    ('aligned-rough', None),
    ('non-aligned-rough', (1.0, 3.0, 9.0, 27.0)),
)


def standard_rate_fits(summary: Summary) -> List[RateFit]:
    fits = []
    configs = {key.config_label: (key.aligned, key.p) for key in summary}
    for label, subset in STANDARD_RATE_FITS:
        if label not in configs:
            continue
        aligned, p = configs[label]
        try:
            fits.append(fit_rate(summary, aligned, p, subset))
        except ValueError as e:
            logger.warning(f"skipping rate fit for {label}: {e}")
    return fits


def plot_data(summary: Summary, aligned: bool, p: float, fit: RateFit) -> List[Dict[str, float]]:
    """Rows (snr, log 1/snr, log e_min, fitted line) for external plotting."""
    rows = []
    for cell in _config_cells(summary, aligned, p):
        x = math.log(1.0 / cell.key.snr)
        rows.append({
            'snr': cell.key.snr,
            'log_inv_snr': x,
            'log_e_min': math.log(cell.mean['e_min']),
            'fitted': fit.intercept + fit.slope * x,
        })
    return rows


def result_tables(summary: Summary) -> Dict[str, List[Dict[str, Any]]]:
    """Errors and stopping indices per alignment, one row per SNR, smooth columns first."""
    layouts = {
        'errors': ('e_min', 'e_dp'),
        'indices': ('tau_min', 'tau_dp'),
    }
    tables: Dict[str, List[Dict[str, Any]]] = {}
    for aligned in (True, False):
        cells = [s for key, s in summary.items() if key.aligned == aligned]
        if not cells:
            continue
        p_values = sorted({s.key.p for s in cells}, reverse=True)
        snrs = sorted({s.key.snr for s in cells})
        suffix = alignment_label(aligned).replace('-', '_')
        for name, metrics in layouts.items():
            rows = []
            for snr in snrs:
                row: Dict[str, Any] = {'snr': snr}
                for p in p_values:
                    cell = summary.get(CellKey(aligned, p, snr))
                    label = roughness_label(p)
                    for metric in metrics:
                        row[f'{label}_{metric}_mean'] = None if cell is None else cell.mean[metric]
                        row[f'{label}_{metric}_std'] = None if cell is None else cell.std[metric]
                rows.append(row)
            tables[f'{name}_{suffix}'] = rows
    return tables


# ============================================================================
# Published reference values
# ============================================================================

def _reference(rows: Dict[float, Tuple[Tuple[float, float], ...]], metrics: Tuple[str, ...],
               labels: Tuple[str, str]) -> Dict[Tuple[str, float], Dict[str, Tuple[float, float]]]:
    table: Dict[Tuple[str, float], Dict[str, Tuple[float, float]]] = {}
    for snr, values in rows.items():
        for index, (mean, std) in enumerate(values):
            label = labels[index // len(metrics)]
            table.setdefault((label, snr), {})[metrics[index % len(metrics)]] = (mean, std)
    return table


def _merge(*tables):
    merged: Dict[Tuple[str, float], Dict[str, Tuple[float, float]]] = {}
    for table in tables:
        for key, values in table.items():
            merged.setdefault(key, {}).update(values)
    return merged


# (mean, std) over 20 repetitions; smooth columns then rough columns
REFERENCE_TABLES = _merge(
    _reference({
        1.0: ((0.15249, 0.05875), (0.16671, 0.06045), (0.38918, 0.04846), (0.39578, 0.04824)),
        3.0: ((0.07983, 0.02596), (0.11033, 0.03187), (0.21900, 0.02461), (0.23326, 0.02877)),
        9.0: ((0.04655, 0.01416), (0.07010, 0.01615), (0.12619, 0.01353), (0.13600, 0.01662)),
        27.0: ((0.02480, 0.00602), (0.05134, 0.00987), (0.07194, 0.00718), (0.08339, 0.00922)),
        81.0: ((0.01433, 0.00392), (0.02290, 0.00420), (0.04118, 0.00427), (0.04497, 0.00468)),
    }, ('e_min', 'e_dp'), ('aligned-smooth', 'aligned-rough')),
    _reference({
        1.0: ((9.1, 21.1), (1.0, 0.0), (4.7, 8.1), (1.0, 0.0)),
        3.0: ((16.4, 33.5), (1.0, 0.0), (11.8, 19.8), (1.0, 0.0)),
        9.0: ((63.5, 62.2), (2.0, 0.2), (26.4, 35.2), (2.0, 0.2)),
        27.0: ((137.6, 106.9), (10.1, 6.0), (61.1, 62.0), (6.1, 2.7)),
        81.0: ((302.5, 289.0), (58.9, 6.8), (111.8, 114.1), (28.6, 4.4)),
    }, ('tau_min', 'tau_dp'), ('aligned-smooth', 'aligned-rough')),
    _reference({
        1.0: ((0.99057, 0.01124), (2.73126, 0.32005), (0.71010, 0.06948), (0.73451, 0.06118)),
        3.0: ((0.98495, 0.00653), (3.18721, 0.12216), (0.59641, 0.05367), (0.66424, 0.04862)),
        9.0: ((0.98291, 0.00392), (2.98268, 0.04971), (0.51833, 0.02563), (0.54812, 0.03613)),
        27.0: ((0.98181, 0.00244), (2.89389, 0.03369), (0.48520, 0.01924), (0.49948, 0.01305)),
        81.0: ((0.98079, 0.00149), (2.85632, 0.02754), (0.47499, 0.00942), (0.48097, 0.01054)),
    }, ('e_min', 'e_dp'), ('non-aligned-smooth', 'non-aligned-rough')),
    _reference({
        1.0: ((1.4, 0.8), (48.4, 16.5), (20.8, 25.9), (5.2, 0.8)),
        3.0: ((1.5, 0.6), (433.9, 238.9), (127.7, 81.5), (15.6, 7.6)),
        9.0: ((1.6, 0.5), (1467.2, 105.8), (439.8, 357.3), (82.7, 18.1)),
        27.0: ((1.9, 0.2), (1500.0, 0.0), (1100.2, 569.6), (192.7, 26.6)),
        81.0: ((2.0, 0.0), (1500.0, 0.0), (1500.0, 0.0), (848.6, 441.8)),
    }, ('tau_min', 'tau_dp'), ('non-aligned-smooth', 'non-aligned-rough')),
)

REFERENCE_RATE_FITS = {
    'aligned-smooth': {'nu_hat': 1.16, 'adjusted_r2': 0.99891},
    'aligned-rough': {'nu_hat': 1.04, 'adjusted_r2': 0.99995},
    'non-aligned-rough': {'nu_hat': 0.13, 'adjusted_r2': 0.94691},
}
REFERENCE_REPETITIONS = 20


@dataclass(frozen=True)
class ReferenceComparison:
    config: str
    snr: float
    metric: str
    mean: float
    reference_mean: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.mean - self.reference_mean) <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return dict(asdict(self), passed=self.passed)


def compare_to_reference(summary: Summary, metrics: Sequence[str] = ('e_min', 'e_dp')) -> List[ReferenceComparison]:
    """Cell means against the published values.

    A mean matches when it lies within max(25% of the reference, 2 pooled
    standard errors) of it.
    """
    comparisons = []
    for key, cell in summary.items():
        reference = REFERENCE_TABLES.get((key.config_label, key.snr))
        if reference is None:
            continue
        for metric in metrics:
            reference_mean, reference_std = reference[metric]
            pooled = math.sqrt(cell.std[metric] ** 2 / cell.count + reference_std ** 2 / REFERENCE_REPETITIONS)
            comparisons.append(ReferenceComparison(
                config=key.config_label,
                snr=key.snr,
                metric=metric,
                mean=cell.mean[metric],
                reference_mean=reference_mean,
                tolerance=max(0.25 * abs(reference_mean), 2.0 * pooled),
            ))
    return comparisons


def load_summary(path: Union[str, Path]) -> Summary:
    """Read a summary written by the synthetic table run (CSV or JSON rows)."""
    path = Path(path)
    with open(path, 'r', newline='') as f:
        rows = json.load(f) if path.suffix == '.json' else list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"summary file {path} has no rows")
    summary: Summary = {}
    for row in rows:
        cell = CellSummary.from_row(row)
        summary[cell.key] = cell
    return dict(sorted(summary.items(), key=lambda item: item[0].sort_key()))
