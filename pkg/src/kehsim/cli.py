"""Command-line interface for kehsim."""

import sys
from functools import wraps
from pathlib import Path

import click

from kehsim import __version__
from kehsim.errors import ConfigError, KehsimError
from kehsim.pipeline import run_classify, run_pipeline
from kehsim.power_table import run_power
from kehsim.simulate import run_features, run_sample, run_simulate
from kehsim.utils.config import load_config
from kehsim.utils.log import setup_logging

EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _handle_errors(func):
    """Map kehsim errors to exit codes: 2 for configuration, 1 for runtime."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except (KehsimError, OSError, ValueError) as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME_ERROR)

    return wrapper


def _config(ctx: click.Context):
    return load_config(ctx.obj["config_path"], ctx.obj["overrides"])


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="YAML or key=value configuration file.",
)
@click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="KEY=VALUE",
    help="Override one configuration key (repeatable).",
)
@click.option("-v", "--verbose", is_flag=True, help="Log debug detail.")
@click.version_option(__version__, prog_name="kehsim")
@click.pass_context
def main(ctx, config_path, overrides, verbose):
    """KEH activity sensing - simulate capacitor-voltage activity recognition."""
    setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["overrides"] = overrides


@main.command(name="simulate")
@click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default="result/sim"
)
@click.option("--stride", type=click.IntRange(min=1), default=10, help="Write every Nth sample.")
@click.pass_context
@_handle_errors
def simulate(ctx, out_dir, stride):
    """Simulate: Write front/rear capacitor traces for every subject."""
    run_simulate(_config(ctx), out_dir, stride=stride)


@main.command(name="sample")
@click.argument("trace_file", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--t-c", "t_c", type=float, default=None, help="Accumulation window in seconds.")
@click.pass_context
@_handle_errors
def sample(ctx, trace_file, out_path, t_c):
    """Sample: Duty-cycled ADC readings of one trace CSV."""
    run_sample(_config(ctx), trace_file, out_path, t_c=t_c)


@main.command(name="features")
@click.argument("traces_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default="result/features"
)
@click.option("--t-c", "t_c", type=float, default=None, help="Accumulation window in seconds.")
@click.option(
    "--from-samples",
    is_flag=True,
    help="Read <subject>_front.csv / <subject>_rear.csv sample files instead of traces.",
)
@click.pass_context
@_handle_errors
def features(ctx, traces_dir, out_dir, t_c, from_samples):
    """Features: Fused (rear, front) charging rates per subject."""
    run_features(_config(ctx), traces_dir, out_dir, t_c=t_c, from_samples=from_samples)


@main.command(name="classify")
@click.argument("feature_files", nargs=-1, type=click.Path(dir_okay=False, path_type=Path))
@click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default="result/classify"
)
@click.pass_context
@_handle_errors
def classify(ctx, feature_files, out_dir):
    """Classify: Cross-validate feature CSVs (one per subject)."""
    run_classify(_config(ctx), list(feature_files), out_dir)


@main.command(name="pipeline")
@click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default="result/pipeline"
)
@click.option("--overwrite", is_flag=True, help="Replace an existing output directory.")
@click.pass_context
@_handle_errors
def pipeline(ctx, out_dir, overwrite):
    """Pipeline: Simulate, extract features and evaluate across the t_c sweep."""
    run_pipeline(_config(ctx), out_dir, overwrite=overwrite)


@main.command(name="power")
@click.option("--rate", type=click.FloatRange(min=0), default=None, help="Sampling rate in Hz.")
@click.option("--payload", type=click.IntRange(min=0), default=None, help="Payload in bytes.")
@click.option("--sleep-uw", type=click.FloatRange(min=0), default=None, help="Sleep power in uW.")
@click.option("--period", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--format", "fmt", type=click.Choice(["text", "csv"]), default="text")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.pass_context
@_handle_errors
def power(ctx, rate, payload, sleep_uw, period, fmt, out_path):
    """Power: Sensing, transmission and system power comparison."""
    run_power(
        _config(ctx),
        rate=rate,
        payload=payload,
        sleep_uw=sleep_uw,
        period=period,
        fmt=fmt,
        out_path=out_path,
    )


if __name__ == "__main__":
    main()
