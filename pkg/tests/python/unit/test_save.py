import pandas as pd
import pytest

from cmab.constants import CSV_COLUMNS
from cmab.harness import grid_search, horizon_sweep, run_experiment
from cmab.params import config_echo, get_run_config
from cmab.save import (
    ResultWriteError,
    emit_grid_search,
    emit_results,
    emit_sweep,
    format_summary,
)


@pytest.fixture(scope="module")
def config():
    return get_run_config(
        {
            "d_x": 2,
            "d_a": 1,
            "horizon": 50,
            "repetitions": 2,
            "stride": 10,
            "oracle": {"resolution": 50},
            "algorithms": [
                {"name": "cmab_rl", "multiplier": 0.1},
                {"name": "uniform"},
            ],
        }
    )


@pytest.fixture(scope="module")
def results(config):
    return run_experiment(config)


def _contents(directory):
    return {
        path.relative_to(directory).as_posix(): path.read_bytes()
        for path in sorted(directory.rglob("*"))
        if path.is_file()
    }


class TestEmitResults:
    def test_layout(self, tmp_path, config, results):
        paths = emit_results(results, tmp_path / "out", config)
        assert [path.name for path in paths] == [
            "cmab_rl.csv",
            "uniform.csv",
            "summary.txt",
        ]
        frame = pd.read_csv(tmp_path / "out" / "cmab_rl.csv")
        assert tuple(frame.columns) == CSV_COLUMNS
        assert frame["round"].tolist() == [10, 20, 30, 40, 50]

    def test_header(self, tmp_path, config, results):
        emit_results(results, tmp_path, config)
        header = (tmp_path / "uniform.csv").read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)

    def test_reruns_are_identical(self, tmp_path, config, results):
        emit_results(results, tmp_path / "first", config)
        emit_results(run_experiment(config), tmp_path / "second", config)
        first = _contents(tmp_path / "first")
        assert first == _contents(tmp_path / "second")
        assert len(first) == 3

    def test_not_a_directory(self, tmp_path, config, results):
        out = tmp_path / "taken"
        out.write_text("")
        with pytest.raises(ResultWriteError):
            emit_results(results, out, config)


class TestSummary:
    def test_echoes_config(self, config, results):
        summary = format_summary(config, results)
        for key in config_echo(config):
            assert f"\n{key}:" in summary

    def test_totals(self, config, results):
        summary = format_summary(config, results)
        assert "final totals:" in summary
        assert "  cmab_rl: mean_cum_reward=" in summary
        assert "  uniform: mean_cum_reward=" in summary
        assert "seeds: 0, 1" in summary

    def test_extra_lines(self, config, results):
        summary = format_summary(config, results, "sweep", ["", "note"])
        assert summary.startswith("cmab ")
        assert ": sweep\n" in summary.splitlines(keepends=True)[0]
        assert "\nnote\n" in summary


class TestEmitReports:
    def test_grid_search(self, tmp_path, config):
        report = grid_search(config, [0.1, 1.0])
        emit_grid_search(report, tmp_path, config)
        assert set(_contents(tmp_path)) == {
            "grid_search.csv",
            "cmab_rl/multiplier_0.1.csv",
            "cmab_rl/multiplier_1.csv",
            "summary.txt",
        }
        frame = pd.read_csv(tmp_path / "grid_search.csv")
        assert frame["selected"].sum() == 1
        summary = (tmp_path / "summary.txt").read_text()
        assert "selected multipliers:" in summary
        assert f"  cmab_rl: {report.best['cmab_rl']:g}" in summary

    def test_sweep(self, tmp_path, config):
        report = horizon_sweep(config, [20, 30])
        emit_sweep(report, tmp_path, config)
        assert set(_contents(tmp_path)) == {
            "sweep.csv",
            "horizon_20/cmab_rl.csv",
            "horizon_20/uniform.csv",
            "horizon_30/cmab_rl.csv",
            "horizon_30/uniform.csv",
            "summary.txt",
        }
        frame = pd.read_csv(tmp_path / "sweep.csv")
        assert frame["horizon"].tolist() == [20, 20, 30, 30]
        summary = (tmp_path / "summary.txt").read_text()
        assert "horizons: 20, 30" in summary
        assert "horizon: 30" in summary
