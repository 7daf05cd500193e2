"""CLI for the kpeaks numerical laboratory."""
from io import TextIOWrapper
import logging
import os
from pathlib import Path
import pprint
from typing import Optional, Tuple

import click

from kpeaks.__version__ import __version__
from kpeaks.artifacts import RunManifest
from kpeaks.config import (
    DEFAULT_OUT_DIR,
    RunConfig,
    get_kpeaks_config,
    parse_tolerances,
)
from kpeaks.decorators import add_logging_options, exit_with, handle_common_errors
from kpeaks.errors import KpeaksError
from kpeaks.loggers import setup_logging
from kpeaks.use_cases import (
    run_coercivity,
    run_defect_scan,
    run_energy_scan,
    run_pohozaev,
    run_reduction,
    run_spectrum,
    solve_ground_states,
    solve_limit_system,
)


logger = logging.getLogger(__name__ + ".v" + __version__)


TOL_HELP = (
    "Override a tolerance as NAME=VALUE, with NAME one of shooting, limit, "
    "newton, simplex, boundary, eigen. Repeat for several tolerances."
)
PRESET_HELP = (
    "The potential preset: two_well_quadratic, three_well_quadratic, "
    "two_well_hoelder(theta), single_well_quadratic, constant, tilted_well, "
    "two_well_tilted or two_well_shifted."
)


# pylint: disable=too-many-arguments
@click.group(invoke_without_command=True)
@click.option(
    "--config",
    "-c",
    "config_file",
    type=click.File(),
    help=(
        "A configuration file with KEY=VALUE defined (one per line). "
        "Keys should be formatted as KPEAKS_***."
    ),
)
@click.option(
    "--out-dir",
    "-o",
    type=click.Path(file_okay=False, path_type=Path),
    help=(
        "The directory for CSV, JSON and binary outputs. "
        f"Falls back to $KPEAKS_OUT_DIR, then {DEFAULT_OUT_DIR}."
    ),
)
@click.option(
    "--threads",
    "-t",
    type=int,
    help="The number of worker threads for scans.",
)
@click.option(
    "--tol",
    "-T",
    multiple=True,
    help=TOL_HELP,
)
@click.option(
    "--preset",
    "-p",
    help=PRESET_HELP,
)
@click.option(
    "--no-progress-bar",
    "-P",
    is_flag=True,
    help="Do not show progress bars for scans.",
)
@add_logging_options
@click.pass_context
def main(
    ctx,
    config_file: Optional[TextIOWrapper],
    out_dir: Optional[Path],
    threads: Optional[int],
    tol: Tuple[str, ...],
    preset: Optional[str],
    no_progress_bar: bool,
    log_file: str,
    verbose: bool,
):
    """
    Meet kpeaks, a numerical laboratory for multi-peak solutions
    of the Kirchhoff equation.

    Configure kpeaks with a KPEAKS_ config file and command-line options.
    Values passed on the command line take precedence over values in a
    config file. Every numeric subcommand writes its results and a
    run-manifest.json into the output directory.
    """
    if ctx.invoked_subcommand is None:
        print(ctx.get_help())
        return
    if ctx.invoked_subcommand == "version":
        return
    ctx.ensure_object(dict)
    command = ctx.invoked_subcommand
    try:
        kpeaks_config = get_kpeaks_config(
            config_file,
            KPEAKS_OUT_DIR=None if out_dir is None else str(out_dir),
            KPEAKS_THREADS=threads,
            KPEAKS_PRESET=preset,
            KPEAKS_LOG_FILE=log_file,
            KPEAKS_VERBOSE=verbose,
            **parse_tolerances(tol),
        )
        run_config = RunConfig.from_mapping(kpeaks_config)
    except KpeaksError as err:
        fallback = out_dir or Path(
            os.environ.get("KPEAKS_OUT_DIR") or DEFAULT_OUT_DIR
        )
        manifest = None if command == "config" else RunManifest(command, fallback)
        exit_with(err, manifest)
    ctx.obj["config"] = run_config
    if command == "config":
        return
    setup_logging(run_config.log_file, run_config.verbose)
    ctx.obj["manifest"] = RunManifest(command, run_config.out_dir, run_config)
    ctx.obj["no_progress_bar"] = no_progress_bar


@main.command()
@handle_common_errors
@click.pass_context
def groundstate(ctx):
    """Shoot the ground state of -u'' - 2u'/r + lam u = u^p per well value."""
    run_config = ctx.obj["config"]
    logger.info(
        "Ground states initiated: p=%s, tol=%s",
        run_config.params.p,
        run_config.shooting_tol,
    )
    for lam, result in solve_ground_states(run_config, ctx.obj["manifest"]):
        print(
            f"lam={lam:g}: u(0)={result.u0:.17g}, "
            f"residual {result.residual_sup:.3e}"
        )
    logger.info("Ground states completed")


@main.command(name="limit-system")
@handle_common_errors
@click.pass_context
def limit_system(ctx):
    """
    Solve the coupled limit system of the configured wells.

    Set KPEAKS_B_BAR in the config file to impose b-bar instead of solving for it.
    """
    run_config = ctx.obj["config"]
    logger.info("Limit system initiated: preset %s", run_config.model.name)
    limit = solve_limit_system(run_config, ctx.obj["manifest"])
    print(
        f"c={limit.c:.17g}, b_bar={limit.b_bar:.17g}, "
        f"self-consistent: {limit.self_consistent}"
    )
    logger.info("Limit system completed: c=%.17g", limit.c)


@main.command(name="energy-scan")
@handle_common_errors
@click.pass_context
def energy_scan(ctx):
    """Compare I_eps(W) with its small-eps expansion along the eps list."""
    run_config = ctx.obj["config"]
    logger.info("Energy scan command initiated: eps %s", run_config.eps_list)
    report = run_energy_scan(
        run_config, ctx.obj["manifest"], ctx.obj["no_progress_bar"]
    )
    for row in report.rows():
        print(
            f"eps={row['eps']:g}: I={row['I_measured']:.12g}, "
            f"predicted {row['I_predicted']:.12g}"
        )
    print(f"Fitted residual order: {report.fitted_order:.4f}")
    logger.info("Energy scan command completed")


@main.command(name="defect-scan")
@handle_common_errors
@click.pass_context
def defect_scan(ctx):
    """Compare the defects of the naive and the system ansatz."""
    run_config = ctx.obj["config"]
    logger.info("Defect scan command initiated: eps %s", run_config.defect_eps_list)
    report = run_defect_scan(
        run_config, ctx.obj["manifest"], ctx.obj["no_progress_bar"]
    )
    for row in report.rows():
        print(", ".join(f"{key}={value:.6g}" for key, value in row.items()))
    print(f"Oracle b K_j G_j: {', '.join(f'{value:.6g}' for value in report.oracle)}")
    logger.info("Defect scan command completed")


@main.command()
@handle_common_errors
@click.pass_context
def spectrum(ctx):
    """Eigenvalues of the linearized limit operator per well and angular mode."""
    run_config = ctx.obj["config"]
    logger.info("Spectrum command initiated: l <= %d", run_config.ell_max)
    report = run_spectrum(run_config, ctx.obj["manifest"], ctx.obj["no_progress_bar"])
    print(f"Kernel found at (well, l): {report.kernel_modes()}")
    for cosine in report.translation_cosines:
        print(f"l=1 kernel cosine against w': {cosine:.6f}")
    logger.info("Spectrum command completed")


@main.command()
@handle_common_errors
@click.pass_context
def coercivity(ctx):
    """Estimate the coercivity constant of the projected Hessian on the lattice."""
    run_config = ctx.obj["config"]
    logger.info("Coercivity command initiated: eps=%s", run_config.eps)
    report = run_coercivity(run_config, ctx.obj["manifest"])
    print(
        f"eps={report.eps:g}, n={report.n}: rho={report.rho_estimate:.6g}, "
        f"C={report.upper_C:.6g}, negative directions {report.negative_count}, "
        f"unprojected |mu|min {report.unprojected_min_abs:.3g}"
    )
    logger.info("Coercivity command completed")


@main.command()
@handle_common_errors
@click.pass_context
def reduce(ctx):
    """
    Run the reduction and the multi-peak diagnostics.

    Each eps solves the corrector, evaluates the reduced energy and
    minimizes it over the peak domain.

    This is the most expensive subcommand; see configs/ for lattice settings.
    """
    run_config = ctx.obj["config"]
    logger.info("Reduction command initiated: eps %s", run_config.reduce_eps_list)
    result = run_reduction(
        run_config, ctx.obj["manifest"], ctx.obj["no_progress_bar"]
    )
    for landscape, report in zip(result.landscapes, result.diagnostics):
        print(
            f"eps={landscape.eps:g}: j={landscape.energy:.12g}, "
            f"peaks {landscape.argmin.round(6).tolist()}, "
            f"multi-peak clauses passed: {report.passed}"
        )
    print(f"|grad V| at extrapolated peaks: {result.critical.gradient_norms.tolist()}")
    logger.info("Reduction command completed")


@main.command()
@handle_common_errors
@click.pass_context
def pohozaev(ctx):
    """Evaluate the local Pohozaev identity around each well for the ansatz."""
    run_config = ctx.obj["config"]
    logger.info("Pohozaev command initiated: radius %s", run_config.pohozaev_radius)
    for row in run_pohozaev(run_config, ctx.obj["manifest"]):
        print(
            f"eps={row['eps']:g}, well {row['well']}: residual {row['residual']:.3e}"
        )
    logger.info("Pohozaev command completed")


@main.command()
@click.pass_context
def config(ctx):
    """Show the configuration that kpeaks is using."""
    pprint.pprint(ctx.obj["config"].raw)


@main.command()
def version():
    """Show kpeaks version and exit."""
    print(f"kpeaks v{__version__}")
