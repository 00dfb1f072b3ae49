import dataclasses
import logging
import pathlib

import yaml

from cmab import __version__
from cmab.params import config_echo

FLOAT_FORMAT = "%.6f"


class ResultWriteError(OSError):
    """Raised when a result file can't be written"""


def _write_frame(frame, path):
    logging.info("Writing: %s", path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as err:
        raise ResultWriteError(f"Could not write {path}: {err}") from err
    return path


def _write_text(text, path):
    logging.info("Writing: %s", path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as err:
        raise ResultWriteError(f"Could not write {path}: {err}") from err
    return path


def _format_float(value):
    return FLOAT_FORMAT % value


def format_summary(config, results, title="run", extra_lines=()):
    """Plain-text summary of an experiment

    Holds nothing that changes between two runs of the same config, so
    that reruns give identical files.

    :param config: Run config
    :type config: cmab.params.RunConfig
    :param results: Results by algorithm name
    :type results: Mapping[str, cmab.harness.AggregateResult]
    :param title: Name of the command that produced the results
    :type title: str
    :param extra_lines: Lines appended after the final totals
    :type extra_lines: Iterable[str]

    :rtype: str
    """
    lines = [
        f"cmab {__version__}: {title}",
        f"horizon: {config.horizon}",
        f"repetitions: {config.repetitions}",
        f"stride: {config.record_stride}",
        f"seeds: {', '.join(str(s) for s in config.seeds)}",
        "",
        "final totals:",
    ]
    for name, result in results.items():
        lines.append(
            f"  {name}: "
            f"mean_cum_reward={_format_float(result.final_mean_reward)} "
            f"std_cum_reward={_format_float(result.std_cum_reward[-1])} "
            f"mean_cum_regret={_format_float(result.final_mean_regret)} "
            f"std_cum_regret={_format_float(result.std_cum_regret[-1])}"
        )
    lines.extend(extra_lines)
    lines.extend(["", "config:"])
    echo = yaml.safe_dump(
        config_echo(config), sort_keys=False, default_flow_style=None
    )
    return "\n".join(lines) + "\n" + echo


def emit_results(results, out_dir, config):
    """Write one CSV per algorithm and summary.txt

    :param results: Results by algorithm name
    :type results: Mapping[str, cmab.harness.AggregateResult]
    :param out_dir: Output directory, created if missing
    :type out_dir: str | os.PathLike
    :param config: Run config the results come from
    :type config: cmab.params.RunConfig

    :raises ResultWriteError: A file can't be written

    :return: Written paths
    :rtype: list[pathlib.Path]
    """
    out_dir = pathlib.Path(out_dir)
    paths = [
        _write_frame(result.to_frame(), out_dir / f"{name}.csv")
        for name, result in results.items()
    ]
    paths.append(
        _write_text(format_summary(config, results), out_dir / "summary.txt")
    )
    return paths


def emit_grid_search(report, out_dir, config):
    """Write grid_search.csv, per-multiplier CSVs under one directory per
    algorithm, and summary.txt

    :param report: Grid search report
    :type report: cmab.harness.GridSearchReport

    :rtype: list[pathlib.Path]
    """
    out_dir = pathlib.Path(out_dir)
    paths = [_write_frame(report.to_frame(), out_dir / "grid_search.csv")]
    for (name, multiplier), result in report.results.items():
        path = out_dir / name / f"multiplier_{multiplier:g}.csv"
        paths.append(_write_frame(result.to_frame(), path))

    selected = {
        name: report.results[(name, multiplier)]
        for name, multiplier in report.best.items()
    }
    extra = ["", "selected multipliers:"] + [
        f"  {name}: {multiplier:g}" for name, multiplier in report.best.items()
    ]
    summary = format_summary(config, selected, "grid-search", extra)
    paths.append(_write_text(summary, out_dir / "summary.txt"))
    return paths


def emit_sweep(report, out_dir, config):
    """Write sweep.csv, per-algorithm CSVs under one directory per
    horizon, and summary.txt

    :param report: Sweep report
    :type report: cmab.harness.SweepReport

    :rtype: list[pathlib.Path]
    """
    out_dir = pathlib.Path(out_dir)
    paths = [_write_frame(report.to_frame(), out_dir / "sweep.csv")]
    for horizon, by_algorithm in report.results.items():
        for name, result in by_algorithm.items():
            path = out_dir / f"horizon_{horizon}" / f"{name}.csv"
            paths.append(_write_frame(result.to_frame(), path))

    last = report.horizons[-1]
    extra = ["", f"horizons: {', '.join(str(h) for h in report.horizons)}"]
    summary = format_summary(
        dataclasses.replace(config, horizon=last),
        report.results[last],
        "sweep",
        extra,
    )
    paths.append(_write_text(summary, out_dir / "summary.txt"))
    return paths
