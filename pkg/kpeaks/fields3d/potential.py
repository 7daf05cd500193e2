"""Multi-well potentials on a constant background."""
from dataclasses import dataclass
import logging
import math
import re
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from kpeaks.errors import GradAtCusp, ParameterError, UnknownPreset
from kpeaks.kirchhoff_limit import LocalShape, WellData, check_distinct


logger = logging.getLogger(__name__)


MOLLIFIER_FRACTION = 0.1
CUSP_RADIUS = 1e-12

PRESET_NAMES = (
    "two_well_quadratic",
    "three_well_quadratic",
    "two_well_hoelder(theta)",
    "single_well_quadratic",
    "constant",
    "tilted_well",
    "two_well_tilted",
    "two_well_shifted",
)


def _bump(s: np.ndarray) -> np.ndarray:
    safe = np.where(s > 0.0, s, 1.0)
    return np.where(s > 0.0, np.exp(-1.0 / safe), 0.0)


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    left, right = _bump(s), _bump(1.0 - s)
    return left / (left + right)


def smooth_step_derivative(s: np.ndarray) -> np.ndarray:
    """Derivative of smooth_step."""
    s = np.asarray(s, dtype=float)
    left, right = _bump(s), _bump(1.0 - s)
    safe_s = np.where(s > 0.0, s, 1.0)
    safe_r = np.where(s < 1.0, 1.0 - s, 1.0)
    d_left = np.where(s > 0.0, left / safe_s**2, 0.0)
    d_right = np.where(s < 1.0, right / safe_r**2, 0.0)
    return (d_left * right + left * d_right) / (left + right) ** 2


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """V(x) = background + sum_i eta_i(x) (g_i(x) - background).

    The wells g_i are blended into the background by a smooth step eta_i.
    """

    background: float
    wells: Tuple[WellData, ...]
    well_radius: float
    name: str = "custom"
    compliant: bool = True

    def __post_init__(self):
        object.__setattr__(self, "wells", tuple(self.wells))
        check_distinct(self.wells)
        if not self.background > 0.0:
            raise ParameterError(f"Background must be positive, got {self.background}")
        if not self.well_radius > 0.0:
            raise ParameterError(
                f"Well radius must be positive, got {self.well_radius}"
            )
        half_gap = 0.5 * self.min_separation * (1.0 + 1e-12)
        if len(self.wells) > 1 and self.well_radius > half_gap:
            raise ParameterError(
                "Well radius exceeds half the smallest well separation"
            )
        for index, well in enumerate(self.wells):
            shape = well.local_shape
            if shape is not LocalShape.QUADRATIC and well.value > self.background:
                raise ParameterError(
                    f"Well {index} lies above the background; its cap would be negative"
                )
        low, _ = self.bounds()
        if not low > 0.0:
            raise ParameterError(
                f"Potential {self.name} is not bounded below by a positive constant"
            )

    @property
    def centers(self) -> np.ndarray:
        """Well centers as a (k, 3) array."""
        return np.array([well.center for well in self.wells])

    @property
    def min_separation(self) -> float:
        """Smallest distance between two well centers (inf for one well)."""
        centers = self.centers
        if len(centers) < 2:
            return math.inf
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        return float(np.min(dist[np.triu_indices(len(centers), 1)]))

    @property
    def blend_radius(self) -> float:
        """Radius rho = R0 / 2 inside which V equals the local well shape."""
        return 0.5 * self.well_radius

    @property
    def mollifier_width(self) -> float:
        """Width of the transition from the well shape to the background."""
        return MOLLIFIER_FRACTION * self.well_radius

    @property
    def cap(self) -> float:
        """Global bound M with V <= M."""
        return self.bounds()[1]

    def _cap_of(self, well: WellData) -> float:
        return max(self.background - well.value, 0.0)

    def _local(self, well: WellData, delta: np.ndarray, dist: np.ndarray) -> np.ndarray:
        tilt = delta @ np.array(well.tilt)
        shape = well.local_shape
        if shape is LocalShape.QUADRATIC:
            rise = well.curvature * dist**2
        elif shape is LocalShape.HOELDER_CUSP:
            rise = np.minimum(
                well.curvature * dist**well.hoelder_theta, self._cap_of(well)
            )
        else:
            rise = np.minimum(well.curvature * dist**2, self._cap_of(well))
        return well.value + rise + tilt

    def _local_gradient(
        self, well: WellData, delta: np.ndarray, dist: np.ndarray
    ) -> np.ndarray:
        shape = well.local_shape
        if shape is LocalShape.QUADRATIC:
            slope = np.full_like(dist, 2.0 * well.curvature)
        elif shape is LocalShape.HOELDER_CUSP:
            theta = well.hoelder_theta
            safe = np.where(dist > 0.0, dist, 1.0)
            below = well.curvature * safe**theta < self._cap_of(well)
            slope = np.where(below, well.curvature * theta * safe ** (theta - 2.0), 0.0)
        else:
            below = well.curvature * dist**2 < self._cap_of(well)
            slope = np.where(below, 2.0 * well.curvature, 0.0)
        return slope[:, None] * delta + np.array(well.tilt)[None, :]

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate V at an (m, 3) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        result = np.full(points.shape[0], self.background)
        rho, width = self.blend_radius, self.mollifier_width
        for well in self.wells:
            delta = points - np.array(well.center)
            dist = np.linalg.norm(delta, axis=1)
            near = dist < rho + width
            if not np.any(near):
                continue
            eta = 1.0 - smooth_step((dist[near] - rho) / width)
            local = self._local(well, delta[near], dist[near])
            result[near] += eta * (local - self.background)
        return result

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Evaluate grad V at an (m, 3) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        result = np.zeros_like(points)
        rho, width = self.blend_radius, self.mollifier_width
        for index, well in enumerate(self.wells):
            delta = points - np.array(well.center)
            dist = np.linalg.norm(delta, axis=1)
            at_cusp = np.any(dist <= CUSP_RADIUS * self.well_radius)
            if well.local_shape is LocalShape.HOELDER_CUSP and at_cusp:
                raise GradAtCusp(
                    f"grad V requested at the cusp center of well {index}",
                    well_index=index,
                )
            near = dist < rho + width
            if not np.any(near):
                continue
            d, r = delta[near], dist[near]
            s = (r - rho) / width
            eta = 1.0 - smooth_step(s)
            d_eta = -smooth_step_derivative(s) / width
            safe = np.where(r > 0.0, r, 1.0)
            radial = np.where(r > 0.0, d_eta, 0.0) / safe
            local = self._local(well, d, r) - self.background
            inner = eta[:, None] * self._local_gradient(well, d, r)
            result[near] += (radial * local)[:, None] * d + inner
        return result

    def _well_range(self, well: WellData) -> Tuple[float, float]:
        reach = self.blend_radius + self.mollifier_width
        tilt = float(np.linalg.norm(well.tilt))
        shape = well.local_shape
        if shape is LocalShape.QUADRATIC:
            if well.curvature > 0.0:
                low = well.value - tilt**2 / (4.0 * well.curvature)
            else:
                low = well.value - tilt * reach
            high = well.value + well.curvature * reach**2 + tilt * reach
        elif shape is LocalShape.HOELDER_CUSP:
            low = well.value - tilt * reach
            rise = min(well.curvature * reach**well.hoelder_theta, self._cap_of(well))
            high = well.value + rise + tilt * reach
        else:
            low = well.value - tilt * reach
            rise = min(well.curvature * reach**2, self._cap_of(well))
            high = well.value + rise + tilt * reach
        return low, high

    def bounds(self) -> Tuple[float, float]:
        """Analytic (inf V, sup V) from the descriptor."""
        ranges = [self._well_range(well) for well in self.wells]
        low = min([self.background] + [r[0] for r in ranges])
        high = max([self.background] + [r[1] for r in ranges])
        return low, high

    def sample_bounds(self, count: int = 2**20, seed: int = 0) -> Tuple[float, float]:
        """Sampled (min V, max V) over Sobol points in a box around the wells."""
        centers = self.centers
        margin = 2.0 * (self.blend_radius + self.mollifier_width)
        lower = centers.min(axis=0) - margin
        upper = centers.max(axis=0) + margin
        sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
        points = qmc.scale(sampler.random_base2(int(math.log2(count))), lower, upper)
        values = self.values(points)
        return float(values.min()), float(values.max())

    def check_local_minimum(
        self, n_shells: int = 20, n_directions: int = 256, seed: int = 0
    ) -> bool:
        """Sample shells around each well: V(x) > V(a_i) for 0 < |x - a_i| < r."""
        rng = np.random.default_rng(seed)
        directions = rng.normal(size=(n_directions, 3))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        radii = np.linspace(0.0, self.blend_radius, n_shells + 1)[1:]
        shells = (radii[:, None, None] * directions[None, :, :]).reshape(-1, 3)
        for well in self.wells:
            points = np.array(well.center) + shells
            if np.any(self.values(points) <= well.value):
                return False
        return True

    def critical_points(self) -> np.ndarray:
        """Local minima a_i - tilt / (2 kappa) of the well shapes, where defined."""
        points = []
        for well in self.wells:
            center = np.array(well.center)
            shape = well.local_shape
            if well.curvature > 0.0 and shape is not LocalShape.HOELDER_CUSP:
                points.append(center - np.array(well.tilt) / (2.0 * well.curvature))
            else:
                points.append(center)
        return np.array(points)


def eval_potential(model: PotentialModel, x: Sequence[float]) -> float:
    """Return V(x) at a single point."""
    return float(model.values(np.asarray(x, dtype=float)[None, :])[0])


def grad_potential(model: PotentialModel, x: Sequence[float]) -> np.ndarray:
    """Return grad V(x) at a single point."""
    return model.gradients(np.asarray(x, dtype=float)[None, :])[0]


# pylint: disable=too-many-arguments
def quadratic_wells(
    centers: Sequence[Sequence[float]],
    values: Sequence[float],
    curvature: float = 1.0,
    background: float = 1.5,
    well_radius: Optional[float] = None,
    tilt: Sequence[float] = (0.0, 0.0, 0.0),
    shape: LocalShape = LocalShape.QUADRATIC,
    theta: float = 1.0,
    name: str = "custom",
    compliant: bool = True,
) -> PotentialModel:
    """Build a model whose wells all share one local shape."""
    wells = tuple(
        WellData(
            tuple(center),
            value,
            hoelder_theta=theta,
            local_shape=shape,
            curvature=curvature,
            tilt=tuple(tilt),
        )
        for center, value in zip(centers, values)
    )
    if len(wells) != len(centers) or len(values) != len(centers):
        raise ParameterError("Each well center needs exactly one value")
    if well_radius is None:
        centers_array = np.array(centers, dtype=float)
        if len(centers_array) > 1:
            diffs = centers_array[:, None, :] - centers_array[None, :, :]
            dist = np.linalg.norm(diffs, axis=-1)
            pairs = np.triu_indices(len(centers_array), 1)
            well_radius = 0.5 * float(np.min(dist[pairs]))
        else:
            well_radius = 1.0
    return PotentialModel(
        background, wells, well_radius, name=name, compliant=compliant
    )


_HOELDER = re.compile(r"^two_well_hoelder\(\s*([0-9.eE+-]+)\s*\)$")


def _pair(separation: float) -> List[Tuple[float, float, float]]:
    return [(-0.5 * separation, 0.0, 0.0), (0.5 * separation, 0.0, 0.0)]


def _values(overrides: Dict, count: int) -> List[float]:
    values = overrides.get("values")
    if values is None:
        return [1.0] * count
    values = [float(v) for v in values]
    if len(values) == 1:
        values = values * count
    if len(values) != count:
        raise ParameterError(f"Expected {count} well values, got {len(values)}")
    return values


def potential_preset(name: str, overrides: Optional[Dict] = None) -> PotentialModel:
    """Build a named potential.

    Overrides may set the separation, the well values, the curvature, the
    background or the tilt.
    """
    overrides = dict(overrides or {})
    separation = float(overrides.get("separation", 2.0))
    curvature = float(overrides.get("curvature", 1.0))
    background = float(overrides.get("background", 1.5))
    tilt = overrides.get("tilt")
    name = name.strip()
    hoelder = _HOELDER.match(name)

    if name == "two_well_quadratic":
        return quadratic_wells(
            _pair(separation),
            _values(overrides, 2),
            curvature,
            background,
            tilt=tilt or (0, 0, 0),
            name=name,
        )
    if name == "three_well_quadratic":
        radius = separation / math.sqrt(3.0)
        angles = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
        centers = [(radius * math.cos(a), radius * math.sin(a), 0.0) for a in angles]
        return quadratic_wells(
            centers,
            _values(overrides, 3),
            curvature,
            background,
            tilt=tilt or (0, 0, 0),
            name=name,
        )
    if hoelder:
        theta = float(hoelder.group(1))
        return quadratic_wells(
            _pair(separation),
            _values(overrides, 2),
            curvature,
            background,
            shape=LocalShape.HOELDER_CUSP,
            theta=theta,
            tilt=tilt or (0, 0, 0),
            name=name,
        )
    if name == "single_well_quadratic":
        return quadratic_wells(
            [(0.0, 0.0, 0.0)], _values(overrides, 1), curvature, background, name=name
        )
    if name == "constant":
        value = _values(overrides, 1)[0]
        return quadratic_wells(
            [(0.0, 0.0, 0.0)], [value], 0.0, value, name=name, compliant=False
        )
    if name == "tilted_well":
        return quadratic_wells(
            [(0.0, 0.0, 0.0)],
            _values(overrides, 1),
            curvature,
            background,
            tilt=tilt or (0.2, 0, 0),
            name=name,
            compliant=False,
        )
    if name == "two_well_tilted":
        return quadratic_wells(
            _pair(separation),
            _values(overrides, 2),
            0.0,
            background,
            tilt=tilt or (0.5, 0, 0),
            name=name,
            compliant=False,
        )
    if name == "two_well_shifted":
        return quadratic_wells(
            _pair(separation),
            _values(overrides, 2),
            curvature,
            background,
            tilt=tilt or (0.1, 0, 0),
            name=name,
            compliant=False,
        )
    raise UnknownPreset(
        f'Unknown potential preset "{name}". '
        f'Valid presets: {", ".join(PRESET_NAMES)}'
    )
