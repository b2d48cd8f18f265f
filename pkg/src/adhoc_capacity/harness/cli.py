"""Command line entry point, ``adhoc-capacity``."""
import dataclasses
import functools
import json
import logging
import logging.config
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import anyconfig
import click
import pandas as pd
from click import secho

from .. import rng
from ..analysis import classify_regime, fit_exponent, log_probes
from ..config import NetworkConfig, read_flat_config
from ..errors import AdhocCapacityError, InvalidConfigError, SweepFailedError
from ..network.topology import place_nodes
from ..rdp.analysis import constant_q_function, solve_lambda, table_q_function
from ..rdp.flood import run_concurrent_floods
from .experiment import load_spec, run_sweep
from .presets import SCENARIOS, scenario_presets

logger = logging.getLogger(__name__)

CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])

LOGGING_CONFIG = Path("conf") / "logging.yml"

SPEC_HELP = """Flat key=value experiment file. Keys are the ExperimentSpec
fields (n_values, replications, scenario, horizon_slots, output_dir) and the
NetworkConfig fields of the base network."""

WORKERS_HELP = """Worker processes for the sweep. Defaults to the number of
available CPUs; 1 runs every point in this process."""

QPRIME_HELP = """Either a constant Q' in [0, 1] or a CSV file with columns
lambda and q_prime, interpolated linearly."""

SCENARIO_HELP = f"""One of {", ".join(s for s in SCENARIOS if s != "custom")} or a
key=value file with tau_model and gmodel entries."""

COLUMN_ALIASES = {"throughput": "throughput_per_node", "xi": "xi_measured",
                  "lambda": "lambda_measured", "q": "q_measured"}

EXIT_INVALID = 1
EXIT_FAILED = 2


def _configure_logging(level: str):
    if LOGGING_CONFIG.is_file():
        conf = anyconfig.load(str(LOGGING_CONFIG))
        Path("logs").mkdir(exist_ok=True)
        logging.config.dictConfig(conf)
    else:
        logging.basicConfig(
            level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        )
    logging.getLogger("adhoc_capacity").setLevel(level)


def _exit_codes(func):
    """Map package errors to exit codes: 2 when a sweep failed entirely, 1
    for any other validation or domain error."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SweepFailedError as exc:
            secho(f"Sweep failed: {exc}", fg="red", err=True)
            sys.exit(EXIT_FAILED)
        except AdhocCapacityError as exc:
            secho(f"Error: {exc}", fg="red", err=True)
            sys.exit(EXIT_INVALID)

    return wrapper


def _echo_json(payload):
    click.echo(json.dumps(payload, indent=2, default=str))


@contextmanager
def _usage_is_invalid():
    try:
        yield
    except click.UsageError as exc:
        exc.exit_code = EXIT_INVALID
        raise


class _CliGroup(click.Group):
    """Click group whose usage errors exit with ``EXIT_INVALID`` rather than
    click's 2, which is reserved for failed sweeps."""

    def make_context(self, info_name, args, parent=None, **extra):
        with _usage_is_invalid():
            return super().make_context(info_name, args, parent=parent, **extra)

    def invoke(self, ctx):
        with _usage_is_invalid():
            return super().invoke(ctx)


@click.group(cls=_CliGroup, context_settings=CONTEXT_SETTINGS, name="adhoc-capacity")
@click.option(
    "--log-level",
    default="INFO",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Level of the package loggers.",
)
def cli(log_level):
    """Throughput capacity of random ad hoc networks with route discovery."""
    _configure_logging(log_level.upper())


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help=SPEC_HELP)
@click.option("--workers", type=int, default=None, help=WORKERS_HELP)
@click.option("--out", "output_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory, overrides output_dir of the spec.")
@_exit_codes
def sweep(spec_path, workers, output_dir):
    """Run an experiment sweep and persist its record."""
    spec = load_spec(spec_path)
    if output_dir:
        spec = dataclasses.replace(spec, output_dir=output_dir)
    record = run_sweep(spec, workers=workers or os.cpu_count())
    _echo_json({
        "spec_hash": record.spec_hash,
        "verdict": record.verdict.regime,
        "fits": {k: (v.slope if v else None) for k, v in record.fits.items()},
        "failures": len(record.failures),
        "acceptance": record.acceptance,
    })


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Node count.")
@click.option("--ca", "area_coeff", type=float, default=16.0, show_default=True,
              help="Reception area constant, a(n) = min(1, ca / n).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--origins", type=int, default=1, show_default=True,
              help="Concurrent floods started in the same slot.")
@click.option("--budget", type=int, default=200, show_default=True,
              help="Slot budget per flood.")
@_exit_codes
def flood(n, area_coeff, seed, origins, budget):
    """Flood statistics of one placement, as JSON."""
    config = NetworkConfig(n=n, area_coeff=area_coeff, seed=seed, flood_slot_budget=budget)
    if not 1 <= origins <= n:
        raise InvalidConfigError(f"origins must lie in [1, {n}], got {origins}")
    placement = place_nodes(config)
    picks = rng.stream(seed, rng.FLOODS).choice(n, size=origins, replace=False)
    _, stats = run_concurrent_floods(picks, placement, config)
    _echo_json(dataclasses.asdict(stats))


def _q_prime_function(text):
    try:
        return constant_q_function(float(text))
    except ValueError as exc:
        if isinstance(exc, AdhocCapacityError):
            raise
    path = Path(text)
    if not path.is_file():
        raise InvalidConfigError(f"--qprime is neither a number nor a file: {text!r}")
    table = pd.read_csv(path)
    missing = {"lambda", "q_prime"} - set(table.columns)
    if missing:
        raise InvalidConfigError(f"{path} lacks columns {sorted(missing)}")
    return table_q_function(zip(table["lambda"], table["q_prime"]))


@cli.command("solve-lambda")
@click.option("--n", "n", type=int, required=True)
@click.option("--nu", type=float, required=True, help="Per node initiation rate.")
@click.option("--tau", type=float, required=True, help="Route lifetime, slots.")
@click.option("--qprime", required=True, help=QPRIME_HELP)
@_exit_codes
def solve_lambda_command(n, nu, tau, qprime):
    """Print the total RDP arrival rate."""
    click.echo(repr(solve_lambda(n, nu, tau, _q_prime_function(qprime))))


@cli.command()
@click.option("--scenario", required=True, help=SCENARIO_HELP)
@click.option("--n-min", type=int, default=100, show_default=True)
@click.option("--n-max", type=int, default=100000, show_default=True)
@click.option("--threshold", type=float, default=-0.1, show_default=True,
              help="Slope of lhs / rhs below which route discovery limits.")
@_exit_codes
def classify(scenario, n_min, n_max, threshold):
    """Print the regime verdict of a scenario as JSON."""
    if Path(scenario).is_file():
        config = NetworkConfig.from_mapping(read_flat_config(scenario))
        tau_model, gmodel = config.tau_model, config.gmodel
    else:
        tau_model, gmodel = scenario_presets(scenario)
    verdict = classify_regime(tau_model, gmodel, log_probes(n_min, n_max), threshold=threshold)
    _echo_json(verdict.to_dict())


@cli.command()
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--x", "x", default="n", show_default=True)
@click.option("--y", "y", default="throughput", show_default=True)
@_exit_codes
def fit(csv_path, x, y):
    """Fit a log-log exponent to two CSV columns, as JSON."""
    df = pd.read_csv(csv_path)
    if y not in df.columns:
        y = COLUMN_ALIASES.get(y, y)
    missing = [c for c in (x, y) if c not in df.columns]
    if missing:
        raise InvalidConfigError(f"{csv_path} has no column(s) {missing}")
    _echo_json(fit_exponent(zip(df[x], df[y])).to_dict())


if __name__ == "__main__":
    cli()
