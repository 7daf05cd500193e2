"""A module for the use cases of solving ground states and the limit system."""
import logging
from typing import List, Tuple

from kpeaks.artifacts import RunManifest, save_json, save_profile
from kpeaks.config import RunConfig
from kpeaks.kirchhoff_limit import (
    LimitSystemSolution,
    build_limit_system,
    system_residual,
)
from kpeaks.radial_core import ShootingResult, solve_ground_state


logger = logging.getLogger(__name__)


LIMIT_RESIDUAL_TOL = 1e-7


def build_limit(config: RunConfig, b_bar=None) -> LimitSystemSolution:
    """Solve the limit system for the configured wells."""
    return build_limit_system(
        config.params, config.model.wells, config.limit_tol, config.threads, b_bar
    )


def solve_ground_states(
    config: RunConfig, manifest: RunManifest
) -> List[Tuple[float, ShootingResult]]:
    """Shoot one ground state per distinct well value and save each profile."""
    results = []
    for lam in sorted({well.value for well in config.model.wells}):
        with manifest.stage(f"groundstate lam={lam:g}"):
            result = solve_ground_state(lam, config.params.p, config.shooting_tol)
        logger.info(
            "Ground state lambda=%s: u0=%.17g after %d bisections",
            lam,
            result.u0,
            result.iterations,
        )
        stem = f"groundstate_lam{lam:g}"
        paths = save_profile(result.profile, result.residual_sup, config.out_dir, stem)
        for path in paths:
            manifest.add_output(path)
        manifest.check(
            f"groundstate_residual_lam{lam:g}",
            result.residual_sup <= config.shooting_tol,
            result.residual_sup,
            config.shooting_tol,
        )
        results.append((lam, result))
    return results


def solve_limit_system(config: RunConfig, manifest: RunManifest) -> LimitSystemSolution:
    """Solve the limit system and check the residuals.

    The JSON summary and every w-profile are saved.
    """
    with manifest.stage("limit-system"):
        limit = build_limit(config, config.b_bar)
        summary = limit.summary()
    manifest.add_output(save_json(summary, config.out_dir, "limit_system.json"))
    residuals = system_residual(limit)
    for index, (profile, residual) in enumerate(zip(limit.w_profiles, residuals)):
        stem = f"w_profile_{index + 1}"
        for path in save_profile(profile, float(residual), config.out_dir, stem):
            manifest.add_output(path)
        manifest.check(
            f"limit_residual_{index + 1}",
            residual <= LIMIT_RESIDUAL_TOL,
            float(residual),
            LIMIT_RESIDUAL_TOL,
        )
    return limit
