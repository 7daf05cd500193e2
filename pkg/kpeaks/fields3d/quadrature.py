"""Product rules around peak centers and two-center integrals.

The per-center rules are glued by a fuzzy partition.
"""
from dataclasses import dataclass, replace
import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss


logger = logging.getLogger(__name__)


BECKE_STEPS = 3
BIPOLAR_PANELS = 64
BIPOLAR_NODES = 8


@dataclass(frozen=True)
class QuadratureOrders:
    """Radial points, split in equal panels, and angular orders of a ball rule."""

    n_radial: int = 160
    n_theta: int = 48
    n_phi: int = 48
    n_panels: int = 4

    def __post_init__(self):
        if self.n_radial % self.n_panels:
            raise ValueError(
                f"{self.n_radial} radial points do not split "
                f"into {self.n_panels} panels"
            )
        if min(self.n_radial, self.n_theta, self.n_phi, self.n_panels) < 1:
            raise ValueError("Quadrature orders must be positive")

    def angular_doubled(self) -> "QuadratureOrders":
        """Return the orders with both angular counts doubled."""
        return replace(self, n_theta=2 * self.n_theta, n_phi=2 * self.n_phi)


def _composite_legendre(
    left: float, right: float, panels: int, points: int
) -> Tuple[np.ndarray, np.ndarray]:
    abscissae, weights = leggauss(points)
    edges = np.linspace(left, right, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + half[:, None] * abscissae[None, :]).ravel()
    return nodes, (half[:, None] * weights[None, :]).ravel()


def _unit_sphere(n_theta: int, n_phi: int) -> Tuple[np.ndarray, np.ndarray]:
    cos_theta, theta_weights = leggauss(n_theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    sin_theta = np.sqrt(1.0 - cos_theta**2)
    directions = np.stack(
        [
            np.outer(sin_theta, np.cos(phi)),
            np.outer(sin_theta, np.sin(phi)),
            np.outer(cos_theta, np.ones(n_phi)),
        ],
        axis=-1,
    ).reshape(-1, 3)
    weights = np.outer(theta_weights, np.full(n_phi, 2.0 * math.pi / n_phi)).ravel()
    return directions, weights


def _frame(axis: Sequence[float]) -> np.ndarray:
    """Rows e1, e2, e3 of an orthonormal frame with e3 along axis."""
    e3 = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    helper = np.eye(3)[int(np.argmin(np.abs(e3)))]
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1)
    return np.stack([e1, np.cross(e3, e1), e3])


@dataclass(frozen=True, eq=False)
class SphericalQuadrature:
    """Volume rule on the ball of a given radius around a center."""

    center: np.ndarray
    radius: float
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(
        cls,
        center: Sequence[float],
        radius: float,
        orders: QuadratureOrders = QuadratureOrders(),
        axis: Optional[Sequence[float]] = None,
    ):
        """Product rule on the ball of the given radius.

        Composite Gauss-Legendre in r on [0, radius], Gauss-Legendre in
        cos(theta) and uniform in phi. The polar axis is z unless ``axis`` is given.
        """
        center = np.asarray(center, dtype=float)
        radii, radial_weights = _composite_legendre(
            0.0, radius, orders.n_panels, orders.n_radial // orders.n_panels
        )
        directions, angular_weights = _unit_sphere(orders.n_theta, orders.n_phi)
        if axis is not None:
            directions = directions @ _frame(axis)
        offsets = radii[:, None, None] * directions[None, :, :]
        points = center + offsets.reshape(-1, 3)
        weights = np.outer(radial_weights * radii**2, angular_weights).ravel()
        return cls(center, float(radius), points, weights)

    def integrate(self, values: np.ndarray) -> float:
        """Sum weights times values in a fixed order."""
        return math.fsum(self.weights * values)


@dataclass(frozen=True, eq=False)
class SphereSurface:
    """Surface rule on the sphere of a given radius, with outward normals."""

    center: np.ndarray
    radius: float
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(
        cls,
        center: Sequence[float],
        radius: float,
        orders: QuadratureOrders = QuadratureOrders(),
    ):
        """Angular product rule scaled to the sphere."""
        center = np.asarray(center, dtype=float)
        directions, weights = _unit_sphere(orders.n_theta, orders.n_phi)
        points = center + radius * directions
        return cls(center, float(radius), points, directions, radius**2 * weights)

    def integrate(self, values: np.ndarray) -> float:
        """Sum weights times values in a fixed order."""
        return math.fsum(self.weights * values)


def _cell_function(mu: np.ndarray) -> np.ndarray:
    f = mu
    for _ in range(BECKE_STEPS):
        f = 1.5 * f - 0.5 * f**3
    return 0.5 * (1.0 - f)


def becke_weights(points: np.ndarray, centers: np.ndarray, owner: int) -> np.ndarray:
    """Fuzzy Voronoi weight of the cell of centers[owner] at each point."""
    if len(centers) == 1:
        return np.ones(points.shape[0])
    dist = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=-1)
    cell = np.ones_like(dist)
    for i in range(len(centers)):
        for j in range(len(centers)):
            if i == j:
                continue
            separation = np.linalg.norm(centers[i] - centers[j])
            cell[:, i] *= _cell_function((dist[:, i] - dist[:, j]) / separation)
    return cell[:, owner] / np.sum(cell, axis=1)


@dataclass(frozen=True, eq=False)
class MulticenterQuadrature:
    """One spherical rule per center; each rule is weighted by its fuzzy cell.

    A cell keeps a small share of the neighbouring peaks, so every ball
    reaches past the farthest other center. Polar axes point at the
    nearest other center.
    """

    centers: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(
        cls,
        centers: Sequence[Sequence[float]],
        radius: float,
        orders: QuadratureOrders = QuadratureOrders(),
    ) -> "MulticenterQuadrature":
        """Glue the per-center rules into one set of points and weights."""
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        diffs = centers[:, None, :] - centers[None, :, :]
        separation = np.linalg.norm(diffs, axis=-1)
        points, weights = [], []
        for owner, center in enumerate(centers):
            axis, reach = None, 0.0
            if len(centers) > 1:
                others = np.delete(np.arange(len(centers)), owner)
                nearest = others[np.argmin(separation[owner, others])]
                axis = centers[nearest] - center
                reach = float(np.max(separation[owner, others]))
            rule = SphericalQuadrature.build(center, radius + reach, orders, axis)
            points.append(rule.points)
            weights.append(rule.weights * becke_weights(rule.points, centers, owner))
        weights = np.concatenate(weights)
        logger.debug(
            "Multicenter quadrature: %d centers, radius %.4g, %d points",
            len(centers),
            radius,
            weights.size,
        )
        return cls(centers, np.concatenate(points), weights)

    def integrate(self, values: np.ndarray) -> float:
        """Sum weights times values in a fixed order."""
        return math.fsum(self.weights * values)


def _graded_nodes(
    left: np.ndarray, right: np.ndarray, scale: float, panels: int, points: int
):
    """Composite Gauss-Legendre nodes on [left, right], row by row.

    The panels crowd towards left.
    """
    length = np.maximum(right - left, 0.0)
    alpha = np.log1p(length / scale)
    edges = np.linspace(0.0, 1.0, panels + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        graded = np.expm1(alpha[:, None] * edges[None, :]) / np.expm1(alpha)[:, None]
        stretched = np.where(alpha[:, None] > 0.0, graded, edges)
    abscissae, weights = leggauss(points)
    lo, hi = stretched[:, :-1], stretched[:, 1:]
    half = 0.5 * (hi - lo)
    unit = (0.5 * (lo + hi))[:, :, None] + half[:, :, None] * abscissae[None, None, :]
    unit_weights = half[:, :, None] * weights[None, None, :]
    nodes = left[:, None] + length[:, None] * unit.reshape(len(left), -1)
    return nodes, length[:, None] * unit_weights.reshape(len(left), -1)


# pylint: disable=too-many-arguments
def bipolar_integral(
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    distance: float,
    extent_1: float,
    extent_2: float,
    scale: float,
    panels: int = BIPOLAR_PANELS,
    points: int = BIPOLAR_NODES,
) -> float:
    """Integrate F(|x|, |x - D|) over R^3 for |D| = distance.

    The volume integral reduces to (2 pi / d) times the integral of
    F(r1, r2) r1 r2 over r1 in [0, extent_1] and r2 in [|d - r1|, d + r1],
    truncated at extent_2. The outer range is split at r1 = d, and both
    ranges crowd their panels towards the peak of size ``scale``.
    """
    if not distance > 0.0:
        raise ValueError(
            f"Bipolar integrals need distinct centers, got distance {distance}"
        )
    pieces = []
    for left, right in ((0.0, min(distance, extent_1)), (distance, extent_1)):
        if right <= left:
            continue
        outer, outer_weights = _graded_nodes(
            np.array([left]), np.array([right]), scale, panels, points
        )
        outer, outer_weights = outer[0], outer_weights[0]
        lower = np.abs(distance - outer)
        upper = np.minimum(distance + outer, extent_2)
        inner, inner_weights = _graded_nodes(
            lower, np.maximum(upper, lower), scale, panels, points
        )
        r1 = np.broadcast_to(outer[:, None], inner.shape)
        safe_inner = np.where(inner > 0.0, inner, 1.0)
        values = kernel(r1, safe_inner) * r1 * inner
        row = np.sum(inner_weights * values, axis=1)
        pieces.extend((outer_weights * row).tolist())
    return 2.0 * math.pi / distance * math.fsum(pieces)


def bipolar_cosine(r1: np.ndarray, r2: np.ndarray, distance: float) -> np.ndarray:
    """Cosine of the angle between x and x - D in bipolar coordinates."""
    return (r1**2 + r2**2 - distance**2) / (2.0 * r1 * r2)
