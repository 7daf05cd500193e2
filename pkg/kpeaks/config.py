"""Run configuration: KPEAKS_ key files merged with command-line values."""
from dataclasses import dataclass, field
import hashlib
from io import TextIOWrapper
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Tuple

from kpeaks.errors import ParameterError, UnknownConfigKey
from kpeaks.kirchhoff_limit import ProblemParams
from kpeaks.reduction import ReductionSettings
from kpeaks.fields3d.ansatz import PeakDomain
from kpeaks.fields3d.potential import PotentialModel, potential_preset
from kpeaks.fields3d.quadrature import QuadratureOrders


logger = logging.getLogger(__name__)


KEY_PREFIX = "KPEAKS_"
SCHEMA_VERSION = 1
DEFAULT_OUT_DIR = "./kpeaks-out"

DEFAULTS: Dict[str, Optional[str]] = {
    "KPEAKS_SCHEMA": str(SCHEMA_VERSION),
    "KPEAKS_PRESET": "two_well_quadratic",
    "KPEAKS_A": "1",
    "KPEAKS_B": "0.01",
    "KPEAKS_P": "3",
    "KPEAKS_B_BAR": None,
    "KPEAKS_WELL_SEPARATION": None,
    "KPEAKS_WELL_VALUES": None,
    "KPEAKS_WELL_CURVATURE": None,
    "KPEAKS_BACKGROUND": None,
    "KPEAKS_TILT": None,
    "KPEAKS_EPS_LIST": "0.2,0.1,0.05,0.025",
    "KPEAKS_OFFSET_DV": "0",
    "KPEAKS_DEFECT_EPS_LIST": "0.004,0.002,0.001,0.0005",
    "KPEAKS_EPS": "0.1",
    "KPEAKS_REDUCE_EPS_LIST": "0.2,0.1",
    "KPEAKS_GRID_N": "48",
    "KPEAKS_BOX_L": "1.6",
    "KPEAKS_NEWTON_TOL": "1e-9",
    "KPEAKS_MAX_NEWTON": "30",
    "KPEAKS_TAU": "0.1",
    "KPEAKS_SIMPLEX_TOL": "1e-3",
    "KPEAKS_MAX_EVALUATIONS": "150",
    "KPEAKS_N_STARTS": "3",
    "KPEAKS_BOUNDARY_TOL": "1e-10",
    "KPEAKS_NODES_PER_PEAK": "8",
    "KPEAKS_SHOOTING_TOL": "1e-8",
    "KPEAKS_LIMIT_TOL": "1e-8",
    "KPEAKS_EIGEN_TOL": "1e-6",
    "KPEAKS_QUAD_RADIAL": "160",
    "KPEAKS_QUAD_ANGULAR": "48",
    "KPEAKS_ELL_MAX": "3",
    "KPEAKS_EIGEN_COUNT": "4",
    "KPEAKS_POHOZAEV_RADIUS": "0.4",
    "KPEAKS_C_ENERGY": None,
    "KPEAKS_DIAG_R": "10",
    "KPEAKS_DIAG_TAU": "0.01",
    "KPEAKS_OUT_DIR": None,
    "KPEAKS_THREADS": "1",
    "KPEAKS_LOG_FILE": None,
    "KPEAKS_VERBOSE": None,
}

TOLERANCE_KEYS = {
    "shooting": "KPEAKS_SHOOTING_TOL",
    "limit": "KPEAKS_LIMIT_TOL",
    "newton": "KPEAKS_NEWTON_TOL",
    "simplex": "KPEAKS_SIMPLEX_TOL",
    "boundary": "KPEAKS_BOUNDARY_TOL",
    "eigen": "KPEAKS_EIGEN_TOL",
}


def get_kpeaks_config(config_file: Optional[TextIOWrapper], **kwargs) -> dict:
    """Combine configuration from a file and from keyword arguments.

    Keyword values win over file values.
    """
    kpeaks_config = {}
    if config_file:
        for number, raw in enumerate(config_file, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UnknownConfigKey(
                    f'Line {number} of "{config_file.name}" is not KEY=VALUE: {line!r}'
                )
            key, value = (part.strip() for part in line.split("=", 1))
            check_key(key)
            kpeaks_config[key] = value
        if not kpeaks_config:
            logger.warning(
                'Trying to use config file "%s" but found no keys named "KPEAKS_***"',
                config_file.name,
            )
    for key, value in kwargs.items():
        if value is not None:
            check_key(key)
            kpeaks_config[key] = value
    return kpeaks_config


def check_key(key: str) -> None:
    """Raise UnknownConfigKey for keys outside the schema."""
    if not key.startswith(KEY_PREFIX):
        raise UnknownConfigKey(
            f'Configuration key "{key}" does not start with {KEY_PREFIX}'
        )
    if key not in DEFAULTS:
        raise UnknownConfigKey(
            f'Unknown configuration key "{key}"; '
            f'keys must be one of {", ".join(DEFAULTS)}'
        )


def parse_tolerances(items) -> Dict[str, str]:
    """Map repeated NAME=VALUE tolerance flags to configuration keys."""
    result = {}
    for item in items or ():
        if "=" not in item:
            raise ParameterError(f'Tolerance "{item}" is not NAME=VALUE')
        name, value = (part.strip() for part in item.split("=", 1))
        if name not in TOLERANCE_KEYS:
            raise UnknownConfigKey(
                f'Unknown tolerance "{name}"; use one of {", ".join(TOLERANCE_KEYS)}'
            )
        result[TOLERANCE_KEYS[name]] = value
    return result


def _float(mapping, key) -> float:
    try:
        return float(mapping[key])
    except (TypeError, ValueError) as err:
        raise ParameterError(f"{key} must be a number, got {mapping[key]!r}") from err


def _int(mapping, key) -> int:
    value = _float(mapping, key)
    if value != int(value):
        raise ParameterError(f"{key} must be an integer, got {mapping[key]!r}")
    return int(value)


def _floats(mapping, key) -> Tuple[float, ...]:
    raw = mapping[key]
    if isinstance(raw, (list, tuple)):
        items = raw
    else:
        items = [item for item in str(raw).split(",") if item.strip()]
    try:
        return tuple(float(item) for item in items)
    except ValueError as err:
        raise ParameterError(
            f"{key} must be a comma-separated list of numbers, got {raw!r}"
        ) from err


def _eps_list(mapping, key) -> Tuple[float, ...]:
    values = _floats(mapping, key)
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    if len(values) < 2 or any(v <= 0.0 for v in values) or not decreasing:
        raise ParameterError(
            f"{key} must be a strictly decreasing list of at least two positive values"
        )
    return values


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True, eq=False)
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """Validated settings of one kpeaks run."""

    raw: Dict[str, str]
    params: ProblemParams
    model: PotentialModel
    domain: PeakDomain
    b_bar: Optional[float]
    eps_list: Tuple[float, ...]
    offset_dv: float
    defect_eps_list: Tuple[float, ...]
    eps: float
    reduce_eps_list: Tuple[float, ...]
    reduction: ReductionSettings
    orders: QuadratureOrders
    shooting_tol: float
    limit_tol: float
    eigen_tol: float
    ell_max: int
    eigen_count: int
    pohozaev_radius: float
    c_energy: Optional[float]
    diag_r: float
    diag_tau: float
    out_dir: Path
    threads: int
    overrides: Dict = field(default_factory=dict)

    # pylint: disable=too-many-locals
    @classmethod
    def from_mapping(cls, mapping: Dict) -> "RunConfig":
        """Merge with defaults, parse and validate everything a stage could need."""
        for key in mapping:
            check_key(key)
        merged = dict(DEFAULTS)
        merged.update(
            {key: value for key, value in mapping.items() if value is not None}
        )
        if _int(merged, "KPEAKS_SCHEMA") != SCHEMA_VERSION:
            raise ParameterError(
                f"Unsupported KPEAKS_SCHEMA {merged['KPEAKS_SCHEMA']}; "
                f"expected {SCHEMA_VERSION}"
            )

        params = ProblemParams(
            _float(merged, "KPEAKS_A"),
            _float(merged, "KPEAKS_B"),
            _float(merged, "KPEAKS_P"),
        )
        overrides = {}
        if merged["KPEAKS_WELL_SEPARATION"] is not None:
            overrides["separation"] = _float(merged, "KPEAKS_WELL_SEPARATION")
        if merged["KPEAKS_WELL_VALUES"] is not None:
            overrides["values"] = _floats(merged, "KPEAKS_WELL_VALUES")
        if merged["KPEAKS_WELL_CURVATURE"] is not None:
            overrides["curvature"] = _float(merged, "KPEAKS_WELL_CURVATURE")
        if merged["KPEAKS_BACKGROUND"] is not None:
            overrides["background"] = _float(merged, "KPEAKS_BACKGROUND")
        if merged["KPEAKS_TILT"] is not None:
            tilt = _floats(merged, "KPEAKS_TILT")
            if len(tilt) != 3:
                raise ParameterError(f"KPEAKS_TILT needs three components, got {tilt}")
            overrides["tilt"] = tilt
        model = potential_preset(str(merged["KPEAKS_PRESET"]), overrides)
        domain = PeakDomain.default(model.centers)

        reduction = ReductionSettings(
            n=_int(merged, "KPEAKS_GRID_N"),
            half_width=_float(merged, "KPEAKS_BOX_L"),
            newton_tol=_float(merged, "KPEAKS_NEWTON_TOL"),
            max_newton=_int(merged, "KPEAKS_MAX_NEWTON"),
            tau=_float(merged, "KPEAKS_TAU"),
            simplex_tol=_float(merged, "KPEAKS_SIMPLEX_TOL"),
            max_evaluations=_int(merged, "KPEAKS_MAX_EVALUATIONS"),
            n_starts=_int(merged, "KPEAKS_N_STARTS"),
            boundary_tol=_float(merged, "KPEAKS_BOUNDARY_TOL"),
            nodes_per_peak=_float(merged, "KPEAKS_NODES_PER_PEAK"),
        )
        reduction.check_tau(min(well.hoelder_theta for well in model.wells))
        angular = _int(merged, "KPEAKS_QUAD_ANGULAR")
        try:
            orders = QuadratureOrders(
                n_radial=_int(merged, "KPEAKS_QUAD_RADIAL"),
                n_theta=angular,
                n_phi=angular,
            )
        except ValueError as err:
            raise ParameterError(str(err)) from err

        threads = _int(merged, "KPEAKS_THREADS")
        if threads < 1:
            raise ParameterError(f"KPEAKS_THREADS must be at least 1, got {threads}")
        eps = _float(merged, "KPEAKS_EPS")
        if not eps > 0.0:
            raise ParameterError(f"KPEAKS_EPS must be positive, got {eps}")
        out_dir = (
            merged["KPEAKS_OUT_DIR"]
            or os.environ.get("KPEAKS_OUT_DIR")
            or DEFAULT_OUT_DIR
        )
        merged["KPEAKS_OUT_DIR"] = str(out_dir)
        raw = {
            key: None if value is None else str(value) for key, value in merged.items()
        }
        b_bar = merged["KPEAKS_B_BAR"]
        c_energy = merged["KPEAKS_C_ENERGY"]
        return cls(
            raw=raw,
            params=params,
            model=model,
            domain=domain,
            b_bar=None if b_bar is None else _float(merged, "KPEAKS_B_BAR"),
            eps_list=_eps_list(merged, "KPEAKS_EPS_LIST"),
            offset_dv=_float(merged, "KPEAKS_OFFSET_DV"),
            defect_eps_list=_eps_list(merged, "KPEAKS_DEFECT_EPS_LIST"),
            eps=eps,
            reduce_eps_list=_eps_list(merged, "KPEAKS_REDUCE_EPS_LIST"),
            reduction=reduction,
            orders=orders,
            shooting_tol=_float(merged, "KPEAKS_SHOOTING_TOL"),
            limit_tol=_float(merged, "KPEAKS_LIMIT_TOL"),
            eigen_tol=_float(merged, "KPEAKS_EIGEN_TOL"),
            ell_max=_int(merged, "KPEAKS_ELL_MAX"),
            eigen_count=_int(merged, "KPEAKS_EIGEN_COUNT"),
            pohozaev_radius=_float(merged, "KPEAKS_POHOZAEV_RADIUS"),
            c_energy=None if c_energy is None else _float(merged, "KPEAKS_C_ENERGY"),
            diag_r=_float(merged, "KPEAKS_DIAG_R"),
            diag_tau=_float(merged, "KPEAKS_DIAG_TAU"),
            out_dir=Path(out_dir),
            threads=threads,
            overrides=overrides,
        )

    @property
    def verbose(self) -> bool:
        """Console logging requested."""
        return _bool(self.raw.get("KPEAKS_VERBOSE") or False)

    @property
    def log_file(self) -> Optional[str]:
        """Log file path, if any."""
        return self.raw.get("KPEAKS_LOG_FILE")

    def tolerances(self) -> Dict[str, float]:
        """Every tolerance that affects results, by flag name."""
        return {name: float(self.raw[key]) for name, key in TOLERANCE_KEYS.items()}

    def normalized(self) -> str:
        """Sorted KEY=VALUE lines of the numeric configuration."""
        skip = {"KPEAKS_OUT_DIR", "KPEAKS_LOG_FILE", "KPEAKS_VERBOSE"}
        return "\n".join(
            f"{key}={value}"
            for key, value in sorted(self.raw.items())
            if key not in skip and value is not None
        )

    def config_hash(self) -> str:
        """SHA-256 of the normalized configuration."""
        return hashlib.sha256(self.normalized().encode("utf-8")).hexdigest()
