import numpy as np
import pytest

from kpeaks.errors import (
    BackendMismatch,
    BoxTooSmall,
    InvariantViolation,
    ParameterError,
)
from kpeaks.fields3d import (
    AnsatzField,
    AnsatzState,
    BoxGrid,
    FieldCombination,
    GaussianBump,
    PeakDomain,
    assemble_ansatz,
    cross_terms,
)
from kpeaks.radial_core import grad_norm_sq, lp_norm_pow


def test_default_domain_radius(two_well_model):
    domain = PeakDomain.default(two_well_model.centers)
    assert domain.delta == pytest.approx(0.48)
    assert domain.k == 2
    assert PeakDomain.default([(0.0, 0.0, 0.0)]).delta == 0.5


def test_domain_rejects_large_delta(two_well_model):
    with pytest.raises(ParameterError):
        PeakDomain(0.6, two_well_model.centers)


def test_domain_membership_and_projection(two_well_model):
    domain = PeakDomain.default(two_well_model.centers)
    inside = domain.centers + np.array([[0.1, 0.0, 0.0], [0.0, -0.2, 0.0]])
    outside = domain.centers + np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert domain.contains(inside)
    assert not domain.contains(outside)
    assert domain.distances(inside) == pytest.approx(np.array([0.1, 0.2]))
    assert domain.boundary_distance(inside) == pytest.approx(0.28)
    projected = domain.project(outside)
    assert domain.distances(projected) == pytest.approx(np.array([0.48, 0.0]))
    assert domain.contains(projected)


def test_state_outside_domain_is_rejected(two_well_limit, two_well_model):
    domain = PeakDomain.default(two_well_model.centers)
    with pytest.raises(InvariantViolation):
        AnsatzState(0.1, two_well_model.centers + 0.5, two_well_limit, domain=domain)


def test_ansatz_central_value(single_well_limit):
    state = AnsatzState.at_wells(0.1, single_well_limit)
    field = state.field()
    expected = single_well_limit.w_profiles[0].central_value
    assert field.values(np.zeros((1, 3)))[0] == pytest.approx(expected)


def test_ansatz_is_a_sum_of_translates(two_well_limit):
    state = AnsatzState.at_wells(0.2, two_well_limit)
    points = np.random.default_rng(3).uniform(-2.0, 2.0, size=(20, 3))
    parts = [
        AnsatzField((w,), peak[None, :], 0.2)
        for w, peak in zip(two_well_limit.w_profiles, state.peaks)
    ]
    expected = sum(part.values(points) for part in parts)
    assert state.field().values(points) == pytest.approx(expected)


def test_translation_derivatives_are_minus_gradients(single_well_limit):
    field = AnsatzState.at_wells(0.2, single_well_limit).field()
    points = np.random.default_rng(4).normal(scale=0.3, size=(10, 3))
    derivatives = field.translation_derivatives(points)[:, 0, :]
    assert derivatives == pytest.approx(-field.gradients(points))


def test_ansatz_laplacian_matches_finite_differences(single_well_limit):
    field = AnsatzState.at_wells(0.2, single_well_limit).field()
    point = np.array([0.11, -0.07, 0.05])
    step = 1e-4
    total = -6.0 * field.values(point[None, :])[0]
    for e in np.eye(3):
        total += field.values((point + step * e)[None, :])[0]
        total += field.values((point - step * e)[None, :])[0]
    laplacian = field.laplacians(point[None, :])[0]
    assert laplacian == pytest.approx(total / step**2, rel=1e-3)


def test_gaussian_bump_derivatives():
    bump = GaussianBump((0.1, 0.0, -0.2), 0.3, amplitude=2.0)
    point = np.array([[0.2, 0.1, 0.0]])
    step = 1e-5
    numeric = np.array(
        [
            (bump.values(point + step * e)[0] - bump.values(point - step * e)[0])
            / (2 * step)
            for e in np.eye(3)
        ]
    )
    assert bump.gradients(point)[0] == pytest.approx(numeric, rel=1e-7)
    middle = bump.values(point)[0]
    second = (
        sum(
            bump.values(point + step * e)[0]
            - 2.0 * middle
            + bump.values(point - step * e)[0]
            for e in np.eye(3)
        )
        / step**2
    )
    assert bump.laplacians(point)[0] == pytest.approx(second, rel=1e-4)


def test_field_combination_is_linear():
    first = GaussianBump((0.0, 0.0, 0.0), 0.3)
    second = GaussianBump((0.5, 0.0, 0.0), 0.2)
    combined = FieldCombination((first, second), (2.0, -1.0))
    points = np.random.default_rng(5).normal(size=(8, 3))
    expected = 2.0 * first.values(points) - second.values(points)
    assert combined.values(points) == pytest.approx(expected)
    assert combined.negated().values(points) == pytest.approx(-combined.values(points))
    assert combined.support_radius == pytest.approx(2.7)


def test_spherical_and_box_backends_agree(single_well_limit):
    state = AnsatzState.at_wells(0.2, single_well_limit)
    grid = BoxGrid(2.0, 21)
    smooth = assemble_ansatz(state, "spherical")
    sampled = assemble_ansatz(state, "box", grid, boundary_tol=1e-3)
    expected = np.reshape(smooth.values(grid.points), (21, 21, 21))
    assert sampled.values == pytest.approx(expected, abs=1e-8)


def test_box_backend_checks_decay(single_well_limit):
    state = AnsatzState.at_wells(0.2, single_well_limit)
    with pytest.raises(BoxTooSmall):
        assemble_ansatz(state, "box", BoxGrid(0.3, 9), boundary_tol=1e-10)


def test_backend_mismatches(single_well_limit):
    state = AnsatzState.at_wells(0.2, single_well_limit)
    with pytest.raises(BackendMismatch):
        assemble_ansatz(state, "spectral")
    with pytest.raises(BackendMismatch):
        assemble_ansatz(state, "box")


def test_cross_terms_diagonal_and_decay(two_well_limit):
    eps = 0.2
    report = cross_terms(AnsatzState.at_wells(eps, two_well_limit))
    w = two_well_limit.w_profiles[0]
    diagonal = eps**3 * (grad_norm_sq(w) + lp_norm_pow(w, 2.0))
    assert report.matrix[0, 0] == pytest.approx(diagonal, rel=1e-12)
    assert report.matrix[0, 1] == report.matrix[1, 0]
    assert 0.0 < report.matrix[0, 1] < report.matrix[0, 0]
    ((_, _, entry, rate),) = list(report.pairs())
    assert entry == report.matrix[0, 1]
    assert rate > 0.0
    smaller = cross_terms(AnsatzState.at_wells(eps / 2, two_well_limit))
    assert smaller.matrix[0, 1] / (eps / 2) ** 3 < report.matrix[0, 1] / eps**3


def test_cross_terms_of_a_single_peak(single_well_limit):
    report = cross_terms(AnsatzState.at_wells(0.2, single_well_limit))
    assert report.matrix.shape == (1, 1)
    assert list(report.pairs()) == []
