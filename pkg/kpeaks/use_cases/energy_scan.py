"""A module for the use case of scanning the energy expansion in eps."""
import logging

from kpeaks.artifacts import CsvTable, RunManifest, save_json
from kpeaks.config import RunConfig
from kpeaks.energy import EnergyReport, expansion_scan, offsets_for_potential_gap
from kpeaks.fields3d import AnsatzState, cross_terms
from kpeaks.use_cases.limit_system import build_limit


logger = logging.getLogger(__name__)


MIN_RESIDUAL_ORDER = 3.5
LINEAR_TOLERANCE = 0.05


def run_energy_scan(
    config: RunConfig, manifest: RunManifest, no_progress_bar: bool = True
) -> EnergyReport:
    """Measure I_eps(W_{eps,Y}) against C1 eps^3 and write energy_scan.csv."""
    with manifest.stage("limit-system"):
        limit = build_limit(config)
    offsets = None
    if config.offset_dv > 0.0:
        offsets = offsets_for_potential_gap(config.model, config.offset_dv)
        logger.info(
            "Peak offsets for a potential gap of %s: %s",
            config.offset_dv,
            offsets.tolist(),
        )
    with manifest.stage("energy-scan"):
        report = expansion_scan(
            limit,
            config.model,
            config.eps_list,
            offsets,
            config.orders,
            config.threads,
            no_progress_bar,
        )
    columns = ["eps", "I_measured", "I_predicted", "residual", "fitted_order"]
    table = CsvTable(columns, report.rows())
    table.append(dict(fitted_order=report.fitted_order))
    manifest.add_output(table.save(config.out_dir, "energy_scan.csv"))
    if limit.k > 1:
        with manifest.stage("cross-terms"):
            interactions = [
                cross_terms(AnsatzState.at_wells(eps, limit)) for eps in config.eps_list
            ]
        pairs = [
            dict(eps=item.eps, i=i + 1, j=j + 1, interaction=entry, rate=rate)
            for item in interactions
            for i, j, entry, rate in item.pairs()
        ]
        path = save_json(dict(pairs=pairs), config.out_dir, "energy_interactions.json")
        manifest.add_output(path)
    manifest.check(
        "energy_residual_order",
        report.fitted_order >= MIN_RESIDUAL_ORDER,
        report.fitted_order,
        MIN_RESIDUAL_ORDER,
    )
    error = report.linear_relative_error
    if error is not None:
        manifest.check(
            "energy_linear_term", error <= LINEAR_TOLERANCE, error, LINEAR_TOLERANCE
        )
    return report
