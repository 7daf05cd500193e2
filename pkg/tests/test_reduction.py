import math
from types import SimpleNamespace

import numpy as np
import pytest

from kpeaks import reduction
from kpeaks.errors import BoundaryMinimum, ParameterError
from kpeaks.fields3d import (
    BoxGrid,
    Field3D,
    PeakDomain,
    assemble_ansatz,
    potential_preset,
)
from kpeaks.kirchhoff_limit import build_limit_system
from kpeaks.reduction import (
    ReducedLandscape,
    ReductionProblem,
    ReductionSettings,
    RemainderReport,
    comparison_points,
    critical_point_check,
    default_energy_constant,
    lattice_energy_norm,
    minimize_j,
    multipeak_diagnostics,
    remainder_check,
    solve_phi,
    _refinement_accepted,
)

WELLS = np.array([[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]])


def gaussian_field(grid, centers, eps, amplitudes=None):
    amplitudes = np.ones(len(centers)) if amplitudes is None else amplitudes
    values = sum(
        amplitude * np.exp(-np.sum((grid.points - c) ** 2, axis=1) / (2.0 * eps**2))
        for c, amplitude in zip(centers, amplitudes)
    )
    return Field3D(grid, np.reshape(values, (grid.n,) * 3))


@pytest.mark.parametrize(
    "overrides",
    [
        dict(tau=0.5),
        dict(tau=0.0),
        dict(newton_tol=0.0),
        dict(n_starts=0),
        dict(max_newton=0),
    ],
)
def test_settings_validation(overrides):
    with pytest.raises(ParameterError):
        ReductionSettings(**overrides)


def test_tau_against_hoelder_order():
    settings = ReductionSettings(tau=0.1)
    settings.check_tau(1.0)
    settings.check_tau(0.5)
    with pytest.raises(ParameterError):
        settings.check_tau(0.2)


def test_grid_is_centered_on_the_wells():
    settings = ReductionSettings(n=21, half_width=2.0)
    grid = settings.grid_for(WELLS + np.array([0.0, 1.0, 0.0]))
    assert grid.center == (0.0, 1.0, 0.0)
    assert grid.n == 21
    assert grid.half_width == 2.0


def test_comparison_points(two_well_model):
    domain = PeakDomain.default(two_well_model.centers)
    near = comparison_points(0.04, domain)
    shift = np.array([[0.2, 0.0, 0.0], [0.2, 0.0, 0.0]])
    assert near - domain.centers == pytest.approx(shift)
    far = comparison_points(0.5, domain)
    assert domain.distances(far) == pytest.approx(np.full(2, domain.delta))


def test_remainder_ratio():
    assert RemainderReport(0.1, 2.0, 4.0).ratio == 0.5
    assert RemainderReport(0.1, 2.0, 0.0).ratio == 0.0


def test_lattice_energy_norm_of_a_gaussian():
    grid = BoxGrid(1.5, 61)
    eps = 0.1
    u = gaussian_field(grid, WELLS, eps)
    scaled = lattice_energy_norm(u, eps, 1.0) / eps**3
    assert scaled == pytest.approx(5.0 * math.pi**1.5, rel=0.1)
    assert lattice_energy_norm(Field3D(grid, np.zeros((61,) * 3)), eps, 1.0) == 0.0


def test_multipeak_diagnostics_pass():
    grid = BoxGrid(1.5, 61)
    eps = 0.1
    u = gaussian_field(grid, WELLS, eps)
    report = multipeak_diagnostics(u, eps, WELLS, c_energy=100.0)
    assert report.passed
    assert report.maxima_distances == pytest.approx(np.zeros(2), abs=1e-12)
    assert report.to_dict()["clause_i"] == dict(passed=True, count=2)


def test_multipeak_diagnostics_flag_each_clause():
    grid = BoxGrid(1.5, 61)
    eps = 0.1
    stray = np.vstack([WELLS, [[0.0, 1.0, 0.0]]])
    u = gaussian_field(grid, stray, eps, [1.0, 1.0, 0.5])
    report = multipeak_diagnostics(u, eps, WELLS, c_energy=100.0)
    assert not report.clause_i
    assert not report.clause_ii
    assert report.outside_sup == pytest.approx(0.5)
    u = gaussian_field(grid, WELLS, eps)
    tight = multipeak_diagnostics(u, eps, WELLS, c_energy=10.0)
    assert tight.clause_i and tight.clause_ii
    assert not tight.clause_iii


def test_default_energy_constant(single_well_limit):
    expected = 10.0 * (single_well_limit.grad_norms[0] + single_well_limit.l2_norms[0])
    assert default_energy_constant(single_well_limit) == pytest.approx(expected)
    assert expected > 0.0


def test_critical_point_extrapolation(two_well_model):
    drifting = [
        SimpleNamespace(eps=eps, argmin=WELLS * 2.0 + eps * 0.1) for eps in (0.2, 0.1)
    ]
    report = critical_point_check(drifting, two_well_model)
    assert report.limit_points == pytest.approx(WELLS * 2.0, abs=1e-12)
    assert report.passed
    offset = [SimpleNamespace(eps=eps, argmin=WELLS * 2.0 + 0.1) for eps in (0.2, 0.1)]
    assert not critical_point_check(offset, two_well_model).passed


def test_critical_point_needs_two_eps(two_well_model):
    with pytest.raises(ParameterError):
        repeated = [SimpleNamespace(eps=0.1, argmin=WELLS * 2.0)] * 2
        critical_point_check(repeated, two_well_model)


@pytest.fixture(scope="module")
def single_well_problem(single_well_limit, single_well_model):
    settings = ReductionSettings(
        n=41,
        half_width=1.6,
        newton_tol=1e-8,
        n_starts=1,
        max_evaluations=40,
        simplex_tol=1e-2,
        boundary_tol=1e-2,
        nodes_per_peak=3,
    )
    return ReductionProblem(single_well_limit, single_well_model, settings)


@pytest.mark.slow
def test_corrector_stays_in_the_constraint_space(single_well_problem):
    state = single_well_problem.state(single_well_problem.wells, 0.2)
    solution = solve_phi(single_well_problem, state)
    assert solution.residual <= 1e-8
    bound = 1e-10 * max(solution.norm_eps, 1e-300)
    assert np.all(solution.projection_residuals <= bound)
    assert solution.scaled_norm == pytest.approx(solution.norm_eps / 0.2**1.5)
    assert math.isfinite(solution.energy)
    report = remainder_check(single_well_problem, state, solution)
    assert report.remainder >= 0.0


@pytest.mark.slow
def test_reduced_energy_is_minimized_at_the_well(single_well_problem):
    domain = PeakDomain.default(single_well_problem.wells)
    landscape = minimize_j(single_well_problem, 0.2, domain)
    assert landscape.interior
    assert landscape.energy_ordering
    assert np.max(landscape.distances) < 0.5 * domain.delta
    assert len(landscape.rows()) == len(landscape.entries)
    columns = {"y0_x", "y0_y", "y0_z", "j_eps", "phi_norm", "newton_iters"}
    assert set(landscape.rows()[0]) >= columns


TARGET = np.array([[0.1, 0.0, 0.0]])


@pytest.fixture
def quadratic_landscape(monkeypatch):
    """minimize_j over one ball with j(Y) = 1 + |Y - TARGET|^2 and no lattice."""

    def fake_solve_phi(_problem, state):
        energy = 1.0 + float(np.sum((state.peaks - TARGET) ** 2))
        return SimpleNamespace(
            energy=energy,
            norm_eps=0.0,
            newton_iterations=0,
            peaks=state.peaks,
            eps=state.eps,
        )

    problem = SimpleNamespace(
        settings=ReductionSettings(n_starts=1, max_evaluations=200),
        state=lambda peaks, eps, domain=None: SimpleNamespace(
            peaks=np.reshape(peaks, (-1, 3)), eps=eps
        ),
    )
    monkeypatch.setattr(reduction, "solve_phi", fake_solve_phi)
    monkeypatch.setattr(reduction, "unprojected_residual", lambda *_: 0.0)

    def run(root_point):
        root = SimpleNamespace(
            x=np.ravel(root_point), success=True, message="converged"
        )
        monkeypatch.setattr(reduction.optimize, "root", lambda *args, **kwargs: root)
        return minimize_j(problem, 0.1, PeakDomain(0.4, np.zeros((1, 3))))

    return run


def test_refinement_with_higher_energy_is_rejected(quadratic_landscape):
    landscape = quadratic_landscape([[-0.2, 0.0, 0.0]])
    assert not landscape.refined
    assert landscape.argmin == pytest.approx(TARGET, abs=1e-2)
    assert landscape.energy <= 1.0 + 1e-4


def test_refinement_at_the_minimum_is_accepted(quadratic_landscape):
    landscape = quadratic_landscape(TARGET)
    assert landscape.refined
    assert landscape.argmin == pytest.approx(TARGET)
    assert landscape.energy == 1.0


def test_refinement_acceptance_threshold():
    assert _refinement_accepted(1.0, 1.0, 1e-3)
    assert _refinement_accepted(-2.001, -2.0, 1e-3)
    assert not _refinement_accepted(-1.99, -2.0, 1e-3)
    assert not _refinement_accepted(1.01, 1.0, 1e-3)


def test_interior_follows_the_minimizer():
    domain = PeakDomain(0.4, np.zeros((1, 3)))
    fields = dict(eps=0.1, domain=domain, entries=(), energy=1.0, energy_at_wells=1.0)
    fields.update(unprojected_residual=0.0, refined=False, phi=None)
    assert ReducedLandscape(argmin=np.array([[0.1, 0.0, 0.0]]), **fields).interior
    assert not ReducedLandscape(argmin=np.array([[0.0, 0.395, 0.0]]), **fields).interior


def reduction_settings(**overrides):
    values = dict(
        n=67,
        half_width=2.8,
        newton_tol=1e-8,
        nodes_per_peak=3,
        boundary_tol=1e-2,
        n_starts=1,
        max_evaluations=150,
    )
    values.update(overrides)
    return ReductionSettings(**values)


@pytest.mark.slow
def test_two_peak_reduction(two_well_limit, two_well_model):
    eps = 0.2
    problem = ReductionProblem(two_well_limit, two_well_model, reduction_settings())
    domain = PeakDomain.default(two_well_model.centers)
    landscape = minimize_j(problem, eps, domain)
    assert landscape.interior
    assert landscape.energy_ordering
    assert np.max(landscape.distances) <= 0.05
    assert landscape.phi.scaled_norm <= 0.2
    state = problem.state(landscape.argmin, eps).with_corrector(landscape.phi.corrector)
    solution = assemble_ansatz(state, "box", problem.grid, 1e-2)
    c_energy = default_energy_constant(two_well_limit)
    report = multipeak_diagnostics(solution, eps, two_well_model.centers, c_energy)
    assert report.passed


@pytest.mark.slow
def test_tilted_wells_have_no_interior_minimum(params):
    model = potential_preset("two_well_tilted")
    limit = build_limit_system(params, model.wells)
    problem = ReductionProblem(limit, model, reduction_settings())
    with pytest.raises(BoundaryMinimum):
        minimize_j(problem, 0.2, PeakDomain.default(model.centers))
