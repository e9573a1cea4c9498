"""
Tests for the untrained-prior command line interface
"""

import json

import pytest

from untrained_prior import __version__
from untrained_prior.cli import main

SMALL_GRID = ['--n', '8', '--k', '64', '--reps', '2', '--tau-max', '60', '--snr', '1,9,81']


def _read_json(path):
    return json.loads(path.read_text())


class TestMainGroup:

    def test_version(self, runner):
        result = runner.invoke(main, ['--version'])
        assert result.exit_code == 0
        assert f"untrained-prior, version {__version__}" in result.output

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ['--help'])
        assert result.exit_code == 0
        for command in ('single-run', 'synth-table', 'rate-fit', 'theory-check', 'lemma-check'):
            assert command in result.output

    def test_unknown_command(self, runner):
        result = runner.invoke(main, ['train'])
        assert result.exit_code == 2


class TestConfigErrors:
    """Invalid settings exit with status 2 and write nothing"""

    def test_invalid_flag(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ['single-run', '--tau-max', '-1', '--out', str(out)])
        assert result.exit_code == 2
        assert "dynamics.tau_max" in result.output
        assert not (out / "failure.json").exists()

    def test_invalid_file_key(self, runner, write_config, tmp_path):
        path = write_config("grid:\n  width: 3\n")
        result = runner.invoke(main, ['lemma-check', '--config', str(path), '--out', str(tmp_path)])
        assert result.exit_code == 2
        assert "grid.width: unknown key" in result.output

    def test_bad_snr_list(self, runner, tmp_path):
        result = runner.invoke(main, ['single-run', '--snr', '1,x', '--out', str(tmp_path)])
        assert result.exit_code == 2
        assert "comma separated list" in result.output

    def test_missing_summary_file(self, runner, tmp_path):
        result = runner.invoke(main, ['rate-fit', '--summary', str(tmp_path / "nope.csv"), '--out', str(tmp_path)])
        assert result.exit_code == 2


class TestSingleRun:

    def test_writes_trajectory(self, runner, tmp_path):
        result = runner.invoke(main, ['single-run', '--aligned', '--p', '1.5', '--n', '8', '--k', '64',
                                      '--snr', '9', '--tau-max', '50', '--seed', '7', '--out', str(tmp_path)])
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "iteration,residual_norm,error_norm,displacement_norm"
        assert len(lines) == 52

        summary = _read_json(tmp_path / "summary.json")
        assert summary['config'] == 'aligned-smooth'
        assert summary['snr'] == 9.0
        assert summary['discrepancy_ok'] is True

        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest['status'] == 'ok'
        assert manifest['seeds']['base_seed'] == 7
        assert manifest['config']['command'] == 'single-run'
        assert set(manifest['artifacts']) == {'trajectory.csv', 'trajectory.json', 'summary.json'}

    def test_json_logging(self, runner, tmp_path):
        result = runner.invoke(main, ['--log-format', 'json', 'single-run', '--n', '4', '--k', '16',
                                      '--tau-max', '5', '--out', str(tmp_path)])
        assert result.exit_code == 0, result.output


class TestSynthTable:
    """Small grids through the full pipeline"""

    def test_artifacts(self, runner, tmp_path):
        result = runner.invoke(main, ['synth-table', *SMALL_GRID, '--out', str(tmp_path)])
        assert result.exit_code == 0, result.output
        for stem in ('runs', 'summary', 'errors_aligned', 'indices_aligned', 'errors_non_aligned',
                     'indices_non_aligned', 'rate_fits', 'reference_comparison'):
            assert (tmp_path / f"{stem}.csv").exists(), stem
            assert (tmp_path / f"{stem}.json").exists(), stem
        assert (tmp_path / "plot_aligned-smooth.csv").exists()

        runs = _read_json(tmp_path / "runs.json")
        assert len(runs) == 24
        assert all(run['discrepancy_ok'] for run in runs)

        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest['status'] == 'ok'
        assert manifest['partial'] is False
        # 4 configurations x 3 SNR levels x (e_min, e_dp)
        assert manifest['reference_cells'] == 24
        assert 0 <= manifest['reference_matches'] <= 24

    def test_byte_identical_reruns(self, runner, tmp_path):
        first, second = tmp_path / "first", tmp_path / "second"
        for out in (first, second):
            result = runner.invoke(main, ['synth-table', *SMALL_GRID, '--seed', '3', '--out', str(out)])
            assert result.exit_code == 0, result.output
        names = sorted(p.name for p in first.glob("*.csv"))
        assert names
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_single_format(self, runner, tmp_path):
        result = runner.invoke(main, ['synth-table', *SMALL_GRID, '--aligned', '--format', 'json',
                                      '--out', str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "summary.json").exists()
        assert not (tmp_path / "summary.csv").exists()
        assert not (tmp_path / "errors_non_aligned.json").exists()

    def test_divergence_writes_failure_report(self, runner, tmp_path):
        result = runner.invoke(main, ['synth-table', *SMALL_GRID, '--eta', '1e150', '--out', str(tmp_path)])
        assert result.exit_code == 1
        failure = _read_json(tmp_path / "failure.json")
        assert failure['error_type'] == 'DivergenceError'
        assert failure['context'] == 'running the experiment grid'
        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest['status'] == 'failed'
        assert manifest['partial'] == failure['partial']


class TestRateFit:

    def test_from_summary(self, runner, tmp_path):
        grid_dir, fit_dir = tmp_path / "grid", tmp_path / "fit"
        result = runner.invoke(main, ['synth-table', *SMALL_GRID, '--out', str(grid_dir)])
        assert result.exit_code == 0, result.output

        result = runner.invoke(main, ['rate-fit', '--summary', str(grid_dir / "summary.csv"), '--out', str(fit_dir)])
        assert result.exit_code == 0, result.output
        fits = _read_json(fit_dir / "rate_fits.json")
        # the non-aligned rough subset keeps only SNR 1 and 9 here, too few for a fit
        assert [fit['config'] for fit in fits] == ['aligned-smooth', 'aligned-rough']
        assert fits[0]['snr_subset'] == [1.0, 9.0, 81.0]
        assert _read_json(grid_dir / "rate_fits.json")[0] == fits[0]

    def test_too_few_levels(self, runner, tmp_path):
        grid_dir, fit_dir = tmp_path / "grid", tmp_path / "fit"
        result = runner.invoke(main, ['synth-table', '--n', '8', '--k', '64', '--reps', '2', '--tau-max', '20',
                                      '--snr', '1,9', '--out', str(grid_dir)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ['rate-fit', '--summary', str(grid_dir / "summary.json"), '--out', str(fit_dir)])
        assert result.exit_code == 1
        assert _read_json(fit_dir / "failure.json")['context'] == 'fitting convergence rates'


class TestTheoryCommands:

    def test_lemma_check(self, runner, write_config, tmp_path):
        path = write_config("theory:\n  lemma_grid_size: 1000\n  lemma_max_tau: 5\n")
        result = runner.invoke(main, ['lemma-check', '--config', str(path), '--out', str(tmp_path)])
        assert result.exit_code == 0, result.output
        report = _read_json(tmp_path / "lemma_checks.json")
        assert report['all_passed'] is True
        assert report['max_tau'] == 5
        assert len(report['checks']) == 39
        assert (tmp_path / "lemma_checks.csv").exists()
        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest['status'] == 'ok'
        assert manifest['checks'] == 39

    def test_theory_check(self, runner, write_config, tmp_path):
        path = write_config("theory:\n  seeds: 2\n  horizon: 5\n  n_probes: 2\n")
        result = runner.invoke(main, ['theory-check', '--config', str(path), '--aligned', '--p', '1.5',
                                      '--n', '8', '--k', '64', '--snr', '9', '--out', str(tmp_path)])
        assert result.exit_code in (0, 1), result.output
        report = _read_json(tmp_path / "theory_report.json")
        assert (result.exit_code == 0) == report['all_passed']
        assert report['cell'] == {'config': 'aligned-smooth', 'p': 1.5, 'snr': 9.0}
        assert len(report['runs']) == 2
        assert len(report['closeness']) == 2
        assert len(report['closeness'][0]['rows']) == 6
        assert report['checks']['alignment_identity'] is True
        assert report['checks']['error_decomposition'] is True
        assert report['tau_star'] >= 1
        assert report['linearization_setup']['budget_ok'] is True
        assert (tmp_path / "closeness.csv").exists()
        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest['status'] == ('ok' if result.exit_code == 0 else 'checks_failed')

    @pytest.mark.slow
    def test_theory_check_aligned_smooth(self, runner, write_config, tmp_path):
        """Measured constants keep all closeness bounds at every tau <= 50 over 20 seeds"""
        path = write_config("theory:\n  seeds: 20\n  horizon: 50\n")
        result = runner.invoke(main, ['theory-check', '--config', str(path), '--aligned', '--p', '1.5',
                                      '--out', str(tmp_path)])
        report = _read_json(tmp_path / "theory_report.json")
        assert all(closeness['all_passed'] for closeness in report['closeness'])
        assert result.exit_code in (0, 1)
