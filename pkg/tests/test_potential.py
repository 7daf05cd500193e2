import numpy as np
import pytest

from kpeaks.errors import GradAtCusp, ParameterError, UnknownPreset
from kpeaks.fields3d import (
    PRESET_NAMES,
    eval_potential,
    grad_potential,
    potential_preset,
    quadratic_wells,
)
from kpeaks.fields3d.potential import smooth_step


def test_smooth_step_limits():
    values = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.5)
    assert values[3] == 1.0 and values[4] == 1.0


def test_two_well_values(two_well_model):
    assert eval_potential(two_well_model, (-1.0, 0.0, 0.0)) == pytest.approx(1.0)
    assert eval_potential(two_well_model, (1.0, 0.2, 0.0)) == pytest.approx(1.04)
    assert eval_potential(two_well_model, (0.0, 5.0, 0.0)) == pytest.approx(1.5)


def test_wells_are_critical_points(two_well_model):
    for center in two_well_model.centers:
        gradient = grad_potential(two_well_model, center)
        assert np.linalg.norm(gradient) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(two_well_model.critical_points(), two_well_model.centers)


def test_gradients_match_finite_differences(two_well_model):
    points = np.array(
        [[-0.7, 0.1, 0.2], [1.3, -0.35, 0.1], [-1.0, 0.55, 0.0], [0.2, 0.3, -0.4]]
    )
    step = 1e-6
    for point in points:
        numeric = [
            (
                eval_potential(two_well_model, point + step * e)
                - eval_potential(two_well_model, point - step * e)
            )
            / (2 * step)
            for e in np.eye(3)
        ]
        assert grad_potential(two_well_model, point) == pytest.approx(numeric, abs=1e-6)


def test_bounds_are_positive(two_well_model):
    low, high = two_well_model.bounds()
    assert low == pytest.approx(1.0)
    assert high >= 1.5
    sampled_low, sampled_high = two_well_model.sample_bounds(count=2**12)
    assert low <= sampled_low and sampled_high <= high


def test_local_minimum_check(two_well_model):
    assert two_well_model.check_local_minimum()
    assert not potential_preset("two_well_tilted").check_local_minimum()


def test_three_wells_are_equidistant():
    model = potential_preset("three_well_quadratic", {"separation": 2.0})
    assert len(model.wells) == 3
    assert model.min_separation == pytest.approx(2.0)


def test_shifted_preset_moves_the_critical_points():
    model = potential_preset("two_well_shifted")
    shifted = model.critical_points()
    assert shifted[:, 0] == pytest.approx(model.centers[:, 0] - 0.05)
    assert not model.compliant


def test_hoelder_preset_and_cusp_gradient():
    model = potential_preset("two_well_hoelder(0.5)")
    assert all(well.hoelder_theta == 0.5 for well in model.wells)
    assert eval_potential(model, (-1.0 + 0.04, 0.0, 0.0)) == pytest.approx(1.2)
    with pytest.raises(GradAtCusp) as err:
        grad_potential(model, model.centers[1])
    assert err.value.well_index == 1


def test_constant_preset_is_flat(constant_model):
    points = np.array([[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [3.0, 0.0, 1.0]])
    assert np.allclose(constant_model.values(points), 1.0)
    assert np.allclose(constant_model.gradients(points), 0.0)


def test_overrides_apply():
    model = potential_preset(
        "two_well_quadratic",
        {"separation": 3.0, "values": [1.0, 1.2], "background": 2.0},
    )
    assert model.centers[:, 0].tolist() == [-1.5, 1.5]
    assert [well.value for well in model.wells] == [1.0, 1.2]
    assert model.background == 2.0


def test_unknown_preset_names_the_valid_ones():
    with pytest.raises(UnknownPreset) as err:
        potential_preset("four_wells")
    assert "two_well_quadratic" in str(err.value)
    assert "two_well_quadratic" in PRESET_NAMES


def test_well_values_must_match_the_well_count():
    with pytest.raises(ParameterError):
        potential_preset("two_well_quadratic", {"values": [1.0, 1.1, 1.2]})


def test_overlapping_wells_are_rejected():
    with pytest.raises(ParameterError):
        quadratic_wells([(-0.5, 0, 0), (0.5, 0, 0)], [1.0, 1.0], well_radius=0.8)
