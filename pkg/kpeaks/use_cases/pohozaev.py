"""A module for the use case of checking the local Pohozaev identity on the ansatz."""
import logging
from typing import Dict, List

import numpy as np

from kpeaks.artifacts import CsvTable, RunManifest
from kpeaks.config import RunConfig
from kpeaks.energy import pohozaev_terms
from kpeaks.fields3d import AnsatzState
from kpeaks.use_cases.limit_system import build_limit


logger = logging.getLogger(__name__)


CONSTANT_TOLERANCE = 1e-6
TILT_TOLERANCE = 0.1


def run_pohozaev(config: RunConfig, manifest: RunManifest) -> List[Dict]:
    """Evaluate both sides on B_R(a_j) for every well and eps; write pohozaev.csv."""
    with manifest.stage("limit-system"):
        limit = build_limit(config)
    l2_norms = limit.l2_norms
    rows = []
    with manifest.stage("pohozaev"):
        for eps in config.eps_list:
            field = AnsatzState.at_wells(eps, limit).field()
            for index, well in enumerate(config.model.wells):
                terms = pohozaev_terms(
                    field,
                    eps,
                    config.model,
                    config.params,
                    well.center,
                    config.pohozaev_radius,
                    config.orders,
                )
                predicted = np.array(well.tilt) * l2_norms[index]
                row = dict(eps=eps, well=index + 1)
                row.update({f"lhs_{a}": float(v) for a, v in zip("xyz", terms.lhs)})
                row.update({f"rhs_{a}": float(v) for a, v in zip("xyz", terms.rhs)})
                row.update(
                    residual=terms.residual,
                    lhs_x_over_eps3=float(terms.lhs[0]) / eps**3,
                    tilt_prediction_x=float(predicted[0]),
                )
                rows.append(row)
    manifest.add_output(CsvTable.from_rows(rows).save(config.out_dir, "pohozaev.csv"))

    smallest = min(config.eps_list)
    last = [row for row in rows if row["eps"] == smallest]
    flat = all(w.curvature == 0.0 and not any(w.tilt) for w in config.model.wells)
    if flat:
        worst = max(row["residual"] / smallest**3 for row in last)
        manifest.check(
            "pohozaev_constant_potential",
            worst <= CONSTANT_TOLERANCE,
            worst,
            CONSTANT_TOLERANCE,
        )
    for row in last:
        prediction = row["tilt_prediction_x"]
        if prediction != 0.0:
            error = abs(row["lhs_x_over_eps3"] - prediction) / abs(prediction)
            manifest.check(
                f"pohozaev_tilt_well_{row['well']}",
                error <= TILT_TOLERANCE,
                error,
                TILT_TOLERANCE,
            )
    return rows
