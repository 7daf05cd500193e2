"""A module for the use case of the full reduction pipeline."""
from dataclasses import dataclass
import logging
from typing import List

import numpy as np

from kpeaks.artifacts import CsvTable, RunManifest, save_field, save_json
from kpeaks.config import RunConfig
from kpeaks.energy import l_eps_dual_norm
from kpeaks.fields3d import assemble_ansatz
from kpeaks.reduction import (
    CriticalPointReport,
    MultipeakReport,
    ReducedLandscape,
    ReductionProblem,
    comparison_points,
    critical_point_check,
    default_energy_constant,
    minimize_j,
    multipeak_diagnostics,
    reduced_energy,
    remainder_check,
)
from kpeaks.use_cases.limit_system import build_limit


logger = logging.getLogger(__name__)


PHI_SCALED_BOUND = 0.2
PEAK_DISTANCE = 0.05
UNPROJECTED_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class ReductionRun:
    """Landscapes and diagnostics per eps, and the extrapolated critical points."""

    landscapes: List[ReducedLandscape]
    diagnostics: List[MultipeakReport]
    critical: CriticalPointReport


# pylint: disable=too-many-locals
def run_reduction(
    config: RunConfig, manifest: RunManifest, no_progress_bar: bool = True
) -> ReductionRun:
    """Minimize j_eps over D_delta for every reduce eps.

    The solutions are diagnosed and the peaks extrapolated to eps -> 0.
    """
    with manifest.stage("limit-system"):
        limit = build_limit(config)
    settings = config.reduction
    problem = ReductionProblem(limit, config.model, settings)
    c_energy = config.c_energy
    if c_energy is None:
        c_energy = default_energy_constant(limit)
    theta = min(well.hoelder_theta for well in config.model.wells)
    landscapes, diagnostics = [], []
    for eps in config.reduce_eps_list:
        with manifest.stage(f"reduce eps={eps:g}"):
            landscape = minimize_j(
                problem, eps, config.domain, config.threads, no_progress_bar
            )
            state = problem.state(landscape.argmin, eps)
            state = state.with_corrector(landscape.phi.corrector)
            solution = assemble_ansatz(
                state, "box", problem.grid, settings.boundary_tol
            )
            report = multipeak_diagnostics(
                solution,
                eps,
                config.model.centers,
                c_energy,
                config.params.a,
                config.diag_r,
                config.diag_tau,
                PEAK_DISTANCE,
            )
            remainder = remainder_check(problem, state, landscape.phi)
            comparison = comparison_points(eps, config.domain)
            j_comparison = reduced_energy(problem, comparison, eps)
            plain = problem.state(landscape.argmin, eps)
            defect = l_eps_dual_norm(plain, config.model, problem.grid)
        stem = f"eps{eps:g}"
        table = CsvTable.from_rows(landscape.rows())
        manifest.add_output(table.save(config.out_dir, f"landscape_{stem}.csv"))
        details = report.to_dict()
        details.update(
            peaks=landscape.argmin.tolist(),
            j_eps=landscape.energy,
            j_at_wells=landscape.energy_at_wells,
            j_comparison=j_comparison,
            comparison_peaks=comparison.tolist(),
            refined=landscape.refined,
            ansatz_defect_over_eps15=defect / eps**1.5,
            phi_scaled_norm=landscape.phi.scaled_norm,
            phi_bound_shape=landscape.phi.bound(theta, settings.tau),
            remainder=remainder.remainder,
            remainder_ratio=remainder.ratio,
        )
        diagnostics_name = f"diagnostics_{stem}.json"
        diagnostics_path = save_json(details, config.out_dir, diagnostics_name)
        manifest.add_output(diagnostics_path)
        for path in save_field(solution, config.out_dir, f"solution_{stem}"):
            manifest.add_output(path)
        phi = landscape.phi
        manifest.check(
            f"phi_scaled_norm_{stem}",
            phi.scaled_norm <= PHI_SCALED_BOUND,
            phi.scaled_norm,
            PHI_SCALED_BOUND,
        )
        distance = float(np.max(landscape.distances))
        manifest.check(
            f"peak_distance_{stem}", distance <= PEAK_DISTANCE, distance, PEAK_DISTANCE
        )
        manifest.check(
            f"multipeak_{stem}",
            report.passed,
            len(report.maxima),
            len(config.model.wells),
        )
        bound = UNPROJECTED_FACTOR * settings.newton_tol
        manifest.check(
            f"unprojected_residual_{stem}",
            landscape.unprojected_residual <= bound,
            landscape.unprojected_residual,
            bound,
        )
        manifest.check(
            f"energy_ordering_{stem}",
            landscape.energy_ordering,
            landscape.energy,
            landscape.energy_at_wells,
        )
        slack = 1e-9 * abs(j_comparison)
        manifest.check(
            f"comparison_ordering_{stem}",
            landscape.energy <= j_comparison + slack,
            landscape.energy,
            j_comparison,
        )
        landscapes.append(landscape)
        diagnostics.append(report)

    ordered = sorted(landscapes, key=lambda item: -item.eps)
    for coarse, fine in zip(ordered, ordered[1:]):
        grew = float(np.max(fine.distances - coarse.distances))
        manifest.check(
            f"concentration_eps{fine.eps:g}",
            grew <= settings.simplex_tol,
            grew,
            settings.simplex_tol,
        )
    with manifest.stage("critical-point-check"):
        critical = critical_point_check(landscapes, config.model)
    manifest.add_output(
        save_json(
            dict(
                eps_list=list(critical.eps_list),
                limit_points=critical.limit_points.tolist(),
                gradient_norms=critical.gradient_norms.tolist(),
                critical_points=critical.critical_points.tolist(),
                passed=critical.passed,
            ),
            config.out_dir,
            "peak_limits.json",
        )
    )
    manifest.check(
        "critical_points",
        critical.passed,
        float(np.max(critical.gradient_norms)),
        critical.tolerance,
    )
    return ReductionRun(landscapes, diagnostics, critical)
