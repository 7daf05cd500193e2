"""A module for the use case of comparing the naive and system ansatz defects."""
import logging

import numpy as np

from kpeaks.artifacts import CsvTable, RunManifest
from kpeaks.config import RunConfig
from kpeaks.energy import DefectReport, nonexistence_defect


logger = logging.getLogger(__name__)


NAIVE_TOLERANCE = 0.05
SYSTEM_FRACTION = 0.1


def run_defect_scan(
    config: RunConfig, manifest: RunManifest, no_progress_bar: bool = True
) -> DefectReport:
    """Measure both defect ratios along the defect eps list; write defect_scan.csv."""
    with manifest.stage("defect-scan"):
        report = nonexistence_defect(
            config.params,
            config.model.wells,
            config.model,
            config.defect_eps_list,
            config.limit_tol,
            config.orders,
            config.threads,
            no_progress_bar,
        )
    table = CsvTable.from_rows(report.rows())
    manifest.add_output(table.save(config.out_dir, "defect_scan.csv"))
    if config.params.b > 0.0:
        manifest.check(
            "naive_defect_converges",
            report.naive_converged(NAIVE_TOLERANCE),
            None,
            NAIVE_TOLERANCE,
        )
        smallest = int(np.argmin(report.eps_list))
        ratios = np.abs(report.system[smallest]) / np.array(report.oracle)
        fraction = float(np.max(ratios))
        manifest.check(
            "system_defect_small",
            fraction <= SYSTEM_FRACTION,
            fraction,
            SYSTEM_FRACTION,
        )
    return report
