"""Multi-peak ansatz fields and their pairwise interactions."""
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from kpeaks.errors import (
    BackendMismatch,
    BoxTooSmall,
    InvariantViolation,
    ParameterError,
)
from kpeaks.kirchhoff_limit import LimitSystemSolution
from kpeaks.radial_core import RadialProfile, grad_norm_sq, lp_norm_pow
from kpeaks.fields3d.lattice import BoxGrid, Field3D
from kpeaks.fields3d.quadrature import bipolar_cosine, bipolar_integral


logger = logging.getLogger(__name__)


DOMAIN_FRACTION = 0.24
MAX_DELTA = 0.5
RATE_STEPS = (1.0, 1.2, 1.44)


@dataclass(frozen=True, eq=False)
class PeakDomain:
    """D_delta, the product of closed balls of radius delta around the wells."""

    delta: float
    centers: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.array(self.centers, dtype=float))
        object.__setattr__(self, "centers", centers)
        if not self.delta > 0.0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if len(centers) > 1 and not self.delta < 0.25 * self.min_separation:
            raise ParameterError(
                f"delta={self.delta} must be smaller than a quarter "
                f"of the well separation {self.min_separation}"
            )

    @classmethod
    def default(cls, centers: Sequence[Sequence[float]]) -> "PeakDomain":
        """delta = min(0.24 * min|a_i - a_j|, 0.5)."""
        centers = np.atleast_2d(np.array(centers, dtype=float))
        delta = MAX_DELTA
        if len(centers) > 1:
            diffs = centers[:, None, :] - centers[None, :, :]
            dist = np.linalg.norm(diffs, axis=-1)[np.triu_indices(len(centers), 1)]
            delta = min(DOMAIN_FRACTION * float(dist.min()), MAX_DELTA)
        return cls(delta, centers)

    @property
    def k(self) -> int:
        """Number of balls."""
        return len(self.centers)

    @property
    def min_separation(self) -> float:
        """Smallest distance between two centers."""
        diffs = self.centers[:, None, :] - self.centers[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        return float(np.min(dist[np.triu_indices(len(self.centers), 1)]))

    def distances(self, peaks: np.ndarray) -> np.ndarray:
        """Per-peak distances |y^i - a_i|."""
        offsets = np.reshape(peaks, self.centers.shape) - self.centers
        return np.linalg.norm(offsets, axis=1)

    def contains(self, peaks: np.ndarray, slack: float = 1e-12) -> bool:
        """Check Y in D_delta."""
        return bool(np.all(self.distances(peaks) <= self.delta * (1.0 + slack)))

    def boundary_distance(self, peaks: np.ndarray) -> float:
        """Smallest distance from a peak to its sphere; negative outside."""
        return float(np.min(self.delta - self.distances(peaks)))

    def project(self, peaks: np.ndarray) -> np.ndarray:
        """Radially project every peak into its ball."""
        peaks = np.reshape(np.array(peaks, dtype=float), self.centers.shape)
        offsets = peaks - self.centers
        lengths = np.linalg.norm(offsets, axis=1)
        safe = np.where(lengths > 0.0, lengths, 1.0)
        factor = np.where(lengths > self.delta, self.delta / safe, 1.0)
        return self.centers + offsets * factor[:, None]


class SmoothField(ABC):
    """A field known pointwise with its gradient and Laplacian."""

    @property
    @abstractmethod
    def centers(self) -> np.ndarray:
        """Points the field concentrates around."""

    @property
    @abstractmethod
    def support_radius(self) -> float:
        """Radius around each center outside of which the field is negligible."""

    @abstractmethod
    def values(self, points: np.ndarray) -> np.ndarray:
        """Field values at an (m, 3) array of points."""

    @abstractmethod
    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Field gradients, shape (m, 3)."""

    @abstractmethod
    def laplacians(self, points: np.ndarray) -> np.ndarray:
        """Field Laplacians, shape (m,)."""

    def negated(self) -> "SmoothField":
        """Return -u."""
        return self.scaled(-1.0)

    def scaled(self, factor: float) -> "SmoothField":
        """Return factor * u."""
        return FieldCombination((self,), (factor,))

    def on_grid(self, grid: BoxGrid) -> Field3D:
        """Sample on a lattice."""
        return Field3D(grid, np.reshape(self.values(grid.points), (grid.n,) * 3))


def _offsets(
    points: np.ndarray, center: np.ndarray, eps: float
) -> Tuple[np.ndarray, np.ndarray]:
    delta = np.atleast_2d(points) - center
    return delta, np.linalg.norm(delta, axis=1) / eps


class AnsatzField(SmoothField):
    """factor * sum_i w^i((x - y^i) / eps)."""

    def __init__(
        self,
        profiles: Sequence[RadialProfile],
        peaks: np.ndarray,
        eps: float,
        factor: float = 1.0,
    ):
        self.profiles = tuple(profiles)
        self.peaks = np.reshape(np.array(peaks, dtype=float), (len(self.profiles), 3))
        self.eps = float(eps)
        self.factor = float(factor)

    @property
    def centers(self) -> np.ndarray:
        return self.peaks

    @property
    def support_radius(self) -> float:
        return self.eps * max(q.grid.r_max for q in self.profiles)

    def scaled(self, factor: float) -> "AnsatzField":
        return AnsatzField(self.profiles, self.peaks, self.eps, self.factor * factor)

    def values(self, points: np.ndarray) -> np.ndarray:
        total = np.zeros(np.atleast_2d(points).shape[0])
        for profile, center in zip(self.profiles, self.peaks):
            _, z = _offsets(points, center, self.eps)
            total += profile.evaluate(z)
        return self.factor * total

    def _radial_gradients(self, points: np.ndarray) -> np.ndarray:
        """Per-peak gradients, shape (m, k, 3)."""
        points = np.atleast_2d(points)
        out = np.zeros((points.shape[0], len(self.profiles), 3))
        for index, (profile, center) in enumerate(zip(self.profiles, self.peaks)):
            delta, z = _offsets(points, center, self.eps)
            slope = profile.evaluate(z, 1) / self.eps
            radius = z * self.eps
            safe = np.where(radius > 0.0, radius, 1.0)[:, None]
            unit = np.where(radius[:, None] > 0.0, delta / safe, 0.0)
            out[:, index, :] = slope[:, None] * unit
        return out

    def gradients(self, points: np.ndarray) -> np.ndarray:
        return self.factor * np.sum(self._radial_gradients(points), axis=1)

    def laplacians(self, points: np.ndarray) -> np.ndarray:
        total = np.zeros(np.atleast_2d(points).shape[0])
        for profile, center in zip(self.profiles, self.peaks):
            _, z = _offsets(points, center, self.eps)
            total += profile.laplacian(z) / self.eps**2
        return self.factor * total

    def translation_derivatives(self, points: np.ndarray) -> np.ndarray:
        """d/dy^i_j of w^i((x - y^i) / eps), shape (m, k, 3)."""
        return -self.factor * self._radial_gradients(points)


class GaussianBump(SmoothField):
    """amplitude * exp(-|x - center|^2 / (2 width^2))."""

    def __init__(self, center: Sequence[float], width: float, amplitude: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)
        self.amplitude = float(amplitude)

    @property
    def centers(self) -> np.ndarray:
        return self.center[None, :]

    @property
    def support_radius(self) -> float:
        return 9.0 * self.width

    def values(self, points: np.ndarray) -> np.ndarray:
        delta = np.atleast_2d(points) - self.center
        r_sq = np.sum(delta**2, axis=1)
        return self.amplitude * np.exp(-r_sq / (2.0 * self.width**2))

    def gradients(self, points: np.ndarray) -> np.ndarray:
        delta = np.atleast_2d(points) - self.center
        return -(self.values(points) / self.width**2)[:, None] * delta

    def laplacians(self, points: np.ndarray) -> np.ndarray:
        delta = np.atleast_2d(points) - self.center
        r_sq = np.sum(delta**2, axis=1)
        return self.values(points) * (r_sq / self.width**4 - 3.0 / self.width**2)


class FieldCombination(SmoothField):
    """A linear combination of smooth fields."""

    def __init__(self, fields: Sequence[SmoothField], coefficients: Sequence[float]):
        if len(fields) != len(coefficients):
            raise ValueError("Every field needs exactly one coefficient")
        self.fields = tuple(fields)
        self.coefficients = tuple(float(c) for c in coefficients)

    @property
    def centers(self) -> np.ndarray:
        return np.unique(np.concatenate([f.centers for f in self.fields]), axis=0)

    @property
    def support_radius(self) -> float:
        return max(f.support_radius for f in self.fields)

    def values(self, points: np.ndarray) -> np.ndarray:
        terms = zip(self.coefficients, self.fields)
        return sum(c * f.values(points) for c, f in terms)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        terms = zip(self.coefficients, self.fields)
        return sum(c * f.gradients(points) for c, f in terms)

    def laplacians(self, points: np.ndarray) -> np.ndarray:
        terms = zip(self.coefficients, self.fields)
        return sum(c * f.laplacians(points) for c, f in terms)


@dataclass(frozen=True, eq=False)
class AnsatzState:
    """eps, the peak positions Y (k x 3) and the limit profiles.

    An optional lattice corrector rides along.
    """

    eps: float
    peaks: np.ndarray
    limit: LimitSystemSolution
    corrector: Optional[Field3D] = None
    domain: Optional[PeakDomain] = None

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ParameterError(f"eps must be positive, got {self.eps}")
        peaks = np.reshape(np.array(self.peaks, dtype=float), (self.limit.k, 3))
        peaks.setflags(write=False)
        object.__setattr__(self, "peaks", peaks)
        if self.domain is not None and not self.domain.contains(peaks):
            raise InvariantViolation(
                f"Peaks {peaks.tolist()} leave D_delta with delta={self.domain.delta}"
            )

    @classmethod
    def at_wells(
        cls,
        eps: float,
        limit: LimitSystemSolution,
        domain: Optional[PeakDomain] = None,
    ) -> "AnsatzState":
        """The state with Y = A."""
        centers = np.array([w.center for w in limit.wells])
        return cls(eps, centers, limit, domain=domain)

    def with_peaks(self, peaks: np.ndarray) -> "AnsatzState":
        """Same eps and limit at new peaks, without corrector."""
        return replace(self, peaks=peaks, corrector=None)

    def with_corrector(self, corrector: Optional[Field3D]) -> "AnsatzState":
        """Attach a lattice corrector phi."""
        return replace(self, corrector=corrector)

    def field(self) -> AnsatzField:
        """W_{eps,Y} as a smooth field."""
        return AnsatzField(self.limit.w_profiles, self.peaks, self.eps)


def assemble_ansatz(
    state: AnsatzState,
    backend: str = "spherical",
    grid: Optional[BoxGrid] = None,
    boundary_tol: float = 1e-10,
):
    """Return W_{eps,Y} (plus the corrector, if any) on the requested backend."""
    ansatz = state.field()
    if backend == "spherical":
        if state.corrector is not None:
            raise BackendMismatch(
                "A lattice corrector cannot be evaluated by the spherical backend"
            )
        return ansatz
    if backend != "box":
        raise BackendMismatch(f'Unknown backend "{backend}"; use "spherical" or "box"')
    if grid is None:
        grid = state.corrector.grid if state.corrector is not None else None
    if grid is None:
        raise BackendMismatch("The box backend needs a BoxGrid")
    sampled = ansatz.on_grid(grid)
    if state.corrector is not None:
        sampled = sampled + state.corrector
    ratio = sampled.boundary_ratio()
    if ratio > boundary_tol:
        raise BoxTooSmall(
            f"Boundary values reach {ratio:.3e} of the maximum "
            f"(tolerance {boundary_tol:.1e}); "
            f"enlarge the box beyond L={grid.half_width}"
        )
    return sampled


@dataclass(frozen=True, eq=False)
class InteractionReport:
    """Pairwise interaction matrix.

    The off-diagonal entries carry fitted exponential rates.
    """

    eps: float
    matrix: np.ndarray
    rates: np.ndarray

    def pairs(self):
        """Yield (i, j, entry, rate) for i < j."""
        k = self.matrix.shape[0]
        for i in range(k):
            for j in range(i + 1, k):
                yield i, j, float(self.matrix[i, j]), float(self.rates[i, j])


def _pair_interaction(
    first: RadialProfile, second: RadialProfile, distance: float
) -> float:
    """Integral of grad w1 . grad w2 + w1 w2 for centers distance apart.

    Lengths are in peak units.
    """

    def kernel(r1, r2):
        slopes = first.evaluate(r1, 1) * second.evaluate(r2, 1)
        gradient = slopes * bipolar_cosine(r1, r2, distance)
        return gradient + first.evaluate(r1) * second.evaluate(r2)

    reach = distance + max(first.grid.r_max, second.grid.r_max)
    scale = min(math.sqrt(q.diffusion / q.lam) for q in (first, second))
    return bipolar_integral(kernel, distance, reach, reach, scale)


def _interaction_matrix(
    limit: LimitSystemSolution, peaks: np.ndarray, eps: float
) -> np.ndarray:
    k = limit.k
    matrix = np.zeros((k, k))
    for i, profile in enumerate(limit.w_profiles):
        matrix[i, i] = eps**3 * (grad_norm_sq(profile) + lp_norm_pow(profile, 2.0))
        for j in range(i + 1, k):
            distance = float(np.linalg.norm(peaks[i] - peaks[j])) / eps
            pair = _pair_interaction(profile, limit.w_profiles[j], distance)
            matrix[i, j] = matrix[j, i] = eps**3 * pair
    return matrix


def cross_terms(state: AnsatzState) -> InteractionReport:
    """Interactions of the translated peaks.

    Rates are fitted from log M = log A + m log eps - gamma / eps.
    """
    matrix = _interaction_matrix(state.limit, state.peaks, state.eps)
    k = state.limit.k
    rates = np.full((k, k), np.nan)
    if k > 1:
        samples = [matrix] + [
            _interaction_matrix(state.limit, state.peaks, state.eps * step)
            for step in RATE_STEPS[1:]
        ]
        eps_values = np.array([state.eps * step for step in RATE_STEPS])
        design = np.column_stack([np.ones(3), np.log(eps_values), -1.0 / eps_values])
        for i in range(k):
            for j in range(i + 1, k):
                entries = np.array([sample[i, j] for sample in samples])
                if np.all(entries > 0.0):
                    coefficients = np.linalg.solve(design, np.log(entries))
                    rates[i, j] = rates[j, i] = coefficients[2]
    logger.debug("Cross terms at eps=%s: %s", state.eps, matrix.tolist())
    return InteractionReport(state.eps, matrix, rates)
