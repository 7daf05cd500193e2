import math

import numpy as np
import pytest

from kpeaks.fields3d import (
    MulticenterQuadrature,
    QuadratureOrders,
    SphereSurface,
    SphericalQuadrature,
    bipolar_integral,
)
from kpeaks.fields3d.quadrature import becke_weights


def gaussians(points, centers, width):
    return sum(
        np.exp(-np.sum((points - c) ** 2, axis=1) / (2 * width**2)) for c in centers
    )


def test_orders_must_split_into_panels():
    with pytest.raises(ValueError):
        QuadratureOrders(n_radial=10, n_panels=4)
    doubled = QuadratureOrders().angular_doubled()
    assert (doubled.n_theta, doubled.n_phi) == (96, 96)


def test_ball_volume():
    rule = SphericalQuadrature.build((0.5, 0.0, -1.0), 2.0)
    volume = rule.integrate(np.ones(rule.weights.size))
    assert volume == pytest.approx(32.0 * math.pi / 3.0, rel=1e-12)


def test_sphere_area_and_first_moment():
    surface = SphereSurface.build((0.0, 1.0, 0.0), 0.5)
    area = surface.integrate(np.ones(surface.weights.size))
    assert area == pytest.approx(math.pi, rel=1e-12)
    second = surface.integrate(surface.normals[:, 2] ** 2)
    assert second == pytest.approx(math.pi / 3.0, rel=1e-12)
    assert surface.integrate(surface.normals[:, 0]) == pytest.approx(0.0, abs=1e-14)


def test_becke_weights_partition_unity():
    centers = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0]])
    points = np.random.default_rng(1).uniform(-2.0, 2.0, size=(50, 3))
    total = sum(becke_weights(points, centers, owner) for owner in range(len(centers)))
    assert total == pytest.approx(np.ones(50))


def test_multicenter_gaussians():
    centers = np.array([[-1.5, 0.0, 0.0], [1.5, 0.0, 0.0]])
    rule = MulticenterQuadrature.build(centers, 3.0)
    values = gaussians(rule.points, centers, 0.2)
    expected = 2.0 * (2.0 * math.pi * 0.2**2) ** 1.5
    assert rule.integrate(values) == pytest.approx(expected, rel=1e-7)


@pytest.mark.parametrize("width", [0.2, 0.3])
def test_multicenter_narrow_peaks_at_production_orders(width):
    centers = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    rule = MulticenterQuadrature.build(centers, 9.0 * width, QuadratureOrders())
    values = gaussians(rule.points, centers, width)
    expected = 2.0 * (2.0 * math.pi * width**2) ** 1.5
    assert rule.integrate(values) == pytest.approx(expected, rel=1e-7)


def test_multicenter_balls_reach_past_the_other_center():
    centers = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
    orders = QuadratureOrders(n_radial=40, n_theta=8, n_phi=8)
    rule = MulticenterQuadrature.build(centers, 0.5, orders)
    first_ball = rule.points[: 40 * 8 * 8]
    reach = np.linalg.norm(first_ball - centers[0], axis=1)
    assert reach.max() > np.linalg.norm(centers[2] - centers[0])


def test_tilted_ball_rule_keeps_moments():
    axis = np.array([1.0, 2.0, -0.5])
    rule = SphericalQuadrature.build((0.0, 0.0, 0.0), 1.5, axis=axis)
    along = rule.points @ axis / np.linalg.norm(axis)
    volume = rule.integrate(np.ones(rule.weights.size))
    assert volume == pytest.approx(4.5 * math.pi, rel=1e-12)
    assert rule.integrate(along) == pytest.approx(0.0, abs=1e-12)
    expected = 4.0 * math.pi * 1.5**5 / 15.0
    assert rule.integrate(along**2) == pytest.approx(expected, rel=1e-12)


def test_bipolar_integral_of_two_exponentials():
    distance = 3.0

    def kernel(r1, r2):
        return np.exp(-r1) * np.exp(-r2)

    expected = math.pi * (1.0 + distance + distance**2 / 3.0) * math.exp(-distance)
    value = bipolar_integral(kernel, distance, 60.0, 60.0, 1.0)
    assert value == pytest.approx(expected, rel=1e-8)


def test_bipolar_integral_needs_distinct_centers():
    with pytest.raises(ValueError):
        bipolar_integral(lambda r1, r2: r1 * r2, 0.0, 1.0, 1.0, 1.0)
