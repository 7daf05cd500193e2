"""A module for the use cases of the linearized spectra and coercivity."""
import logging

from kpeaks.artifacts import CsvTable, RunManifest
from kpeaks.config import RunConfig
from kpeaks.fields3d import AnsatzState
from kpeaks.spectral import (
    CoercivityReport,
    SpectrumReport,
    coercivity_check,
    spectrum_scan,
)
from kpeaks.use_cases.limit_system import build_limit


logger = logging.getLogger(__name__)


def run_spectrum(
    config: RunConfig, manifest: RunManifest, no_progress_bar: bool = True
) -> SpectrumReport:
    """Eigenvalues of L+ for l = 0..ell_max and every well, written to spectrum.csv."""
    with manifest.stage("limit-system"):
        limit = build_limit(config)
    with manifest.stage("spectrum"):
        report = spectrum_scan(
            limit,
            config.ell_max,
            config.eigen_count,
            config.threads,
            no_progress_bar,
            config.eigen_tol,
        )
    table = CsvTable.from_rows(report.rows())
    manifest.add_output(table.save(config.out_dir, "spectrum.csv"))
    manifest.check(
        "kernel_only_at_l1",
        report.nondegenerate(),
        report.kernel_modes(),
        "one per well at l=1",
    )
    return report


def run_coercivity(config: RunConfig, manifest: RunManifest) -> CoercivityReport:
    """Rayleigh-quotient estimate of rho on the configured lattice.

    The estimate is written to coercivity.csv.
    """
    with manifest.stage("limit-system"):
        limit = build_limit(config)
    settings = config.reduction
    grid = settings.grid_for(config.model.centers)
    state = AnsatzState.at_wells(config.eps, limit, config.domain)
    with manifest.stage("coercivity"):
        report = coercivity_check(
            state,
            grid,
            config.model,
            settings.nodes_per_peak,
            settings.boundary_tol,
        )
    table = CsvTable.from_rows([report.row()])
    manifest.add_output(table.save(config.out_dir, "coercivity.csv"))
    manifest.check("rho_positive", report.rho_estimate > 0.0, report.rho_estimate, 0.0)
    manifest.check(
        "constraints_remove_near_kernel",
        report.rho_estimate > report.unprojected_min_abs,
        report.unprojected_min_abs,
        report.rho_estimate,
    )
    return report
