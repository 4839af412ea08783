"""Command-line entry points.

One subcommand per task plus `serve` for the adaptive session service.
Every task command loads a config file, runs the task, prints a summary
table, and exits 0 on success, 2 on configuration errors, 3 on numerical
failures, and 4 when a search target was not reached.

Set QMETRO_THREADS to cap the BLAS thread pool; it must be decided here,
before numpy loads.
"""

import os

_threads = os.environ.get("QMETRO_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import click

from . import artifacts
from .config import load_config
from .errors import (
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    DimensionError,
    DomainError,
    InfeasibilityError,
    NonExistenceError,
    UnsupportedError,
)
from .tasks import run_task

_CONFIG_ERRORS = (ConfigError, DomainError, DimensionError, UnsupportedError)
_NUMERICAL_ERRORS = (
    ConvergenceError,
    DegeneracyError,
    InfeasibilityError,
    NonExistenceError,
)


def _common(fn):
    fn = click.option(
        "--save-all", is_flag=True, default=False,
        help="Record candidate artifacts every episode/round.",
    )(fn)
    fn = click.option(
        "--output-dir", type=click.Path(file_okay=False), default=None,
        help="Override the config's output directory.",
    )(fn)
    fn = click.option(
        "--seed", type=int, default=None,
        help="Override the config's random seed.",
    )(fn)
    fn = click.option(
        "--config", "config_path", required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Scenario config file.",
    )(fn)
    return fn


def _print_report(report) -> None:
    click.echo(f"task {report.task}: artifacts in {report.directory}")
    width = max((len(k) for k, _ in report.summary), default=0)
    for key, val in report.summary:
        click.echo(f"  {key:<{width}}  {val}")


def _execute(task_name, config_path, seed, output_dir, save_all, outcomes=None):
    try:
        cfg = load_config(config_path)
        if cfg.task != task_name:
            raise ConfigError(
                f"config declares task {cfg.task!r}; this command runs {task_name!r}"
            )
        report = run_task(
            cfg, seed=seed, output_dir=output_dir,
            save_all=True if save_all else None, outcomes=outcomes,
        )
    except _CONFIG_ERRORS as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(2) from exc
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical error: {exc}", err=True)
        raise SystemExit(3) from exc
    _print_report(report)
    if not report.found:
        click.echo("target not reached on the configured horizon", err=True)
        raise SystemExit(4)


@click.group()
def main():
    """Quantum parameter estimation: bounds, scheme design, adaptive runs."""


_TASK_HELP = {
    "bounds": "Evaluate the configured metrological bounds at the endpoint.",
    "bayes": "Simulate outcomes at x_true and run Bayesian + MLE estimation.",
    "copt": "Optimize control amplitudes.",
    "sopt": "Optimize the probe state.",
    "mopt": "Optimize the measurement.",
    "compopt": "Joint design search (SM, SC, CM, or SCM).",
    "mintime": "Earliest time the optimized objective reaches a target.",
}


def _task_command(task_name: str):
    @main.command(name=task_name, help=_TASK_HELP[task_name])
    @_common
    def _cmd(config_path, seed, output_dir, save_all):
        _execute(task_name, config_path, seed, output_dir, save_all)

    return _cmd


for _name in _TASK_HELP:
    _task_command(_name)


@main.group()
def adapt():
    """Adaptive measurement sessions."""


@adapt.command("replay")
@_common
@click.option(
    "--outcomes", "outcomes_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Recorded y.csv to feed through the session.",
)
def adapt_replay(config_path, seed, output_dir, save_all, outcomes_path):
    """Replay a recorded outcome file through a fresh session."""
    y = artifacts.read_y(outcomes_path)
    _execute("adapt", config_path, seed, output_dir, save_all, outcomes=y)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
@click.option(
    "--data-dir", default="sessions", show_default=True,
    type=click.Path(file_okay=False),
    help="Directory for per-session append-only logs.",
)
@click.option(
    "--static", "static_dir", default=None,
    type=click.Path(file_okay=False, exists=True),
    help="Directory with a built console bundle to serve at /.",
)
def serve(host, port, data_dir, static_dir):
    """Start the adaptive-session HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
