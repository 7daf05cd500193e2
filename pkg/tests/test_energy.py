import math

import numpy as np
import pytest

from kpeaks.energy import (
    energy_functional,
    expansion_constants,
    expansion_scan,
    fit_order,
    l_eps,
    l_eps_dual_norm,
    nonexistence_defect,
    offsets_for_potential_gap,
    pohozaev_residual,
    pohozaev_terms,
)
from kpeaks.errors import BackendMismatch, ParameterError
from kpeaks.fields3d import (
    AnsatzField,
    AnsatzState,
    BoxGrid,
    FieldCombination,
    GaussianBump,
    QuadratureOrders,
    potential_preset,
)
from kpeaks.kirchhoff_limit import ProblemParams, build_limit_system
from kpeaks.radial_core import grad_norm_sq, lp_norm_pow


def test_fit_order_recovers_powers():
    eps = [0.2, 0.1, 0.05]
    assert fit_order(eps, [3.0 * e**4 for e in eps]) == pytest.approx(4.0)
    assert fit_order(eps, [-(e**2) for e in eps]) == pytest.approx(2.0)
    assert fit_order(eps, [0.0, 0.0, 1e-3]) == math.inf


def test_expansion_constants_without_nonlocal_term(constant_model):
    limit = build_limit_system(ProblemParams(1.0, 0.0, 3.0), constant_model.wells)
    constants = expansion_constants(limit)
    w = limit.w_profiles[0]
    assert constants.C1 == pytest.approx(lp_norm_pow(w, 2.0), rel=1e-5)
    assert constants.C2 == pytest.approx((0.5 * lp_norm_pow(w, 2.0),))
    assert constants.theta == 1.0


def test_expansion_constants_with_nonlocal_term(two_well_limit):
    constants = expansion_constants(two_well_limit)
    grad_total = sum(grad_norm_sq(w) for w in two_well_limit.w_profiles)
    quartic = sum(lp_norm_pow(w, 4.0) for w in two_well_limit.w_profiles)
    assert constants.C1 == pytest.approx(0.25 * quartic - 0.25 * 0.01 * grad_total**2)
    assert constants.predicted(0.1, (0.0, 0.0)) == pytest.approx(1e-3 * constants.C1)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_energy_is_exact_for_constant_potential(constant_model, constant_limit, eps):
    field = AnsatzState.at_wells(eps, constant_limit).field()
    energy = energy_functional(field, eps, constant_model, constant_limit.params)
    expected = eps**3 * expansion_constants(constant_limit).C1
    assert energy == pytest.approx(expected, rel=1e-4)


def test_energy_rejects_unknown_fields(constant_model, params):
    with pytest.raises(BackendMismatch):
        energy_functional(np.zeros(8), 0.1, constant_model, params)


def test_offsets_for_potential_gap(two_well_model):
    offsets = offsets_for_potential_gap(two_well_model, 0.04)
    expected = np.array([[0.2, 0.0, 0.0], [0.2, 0.0, 0.0]])
    assert offsets == pytest.approx(expected, abs=1e-10)
    assert not np.any(offsets_for_potential_gap(two_well_model, 0.0))


def test_offsets_out_of_reach(two_well_model):
    with pytest.raises(ParameterError):
        offsets_for_potential_gap(two_well_model, 10.0)


def test_expansion_scan_residual_order(two_well_model, two_well_limit):
    report = expansion_scan(two_well_limit, two_well_model, [0.05, 0.035, 0.025])
    assert report.fitted_order == pytest.approx(5.0, abs=0.3)
    pairs = zip(report.residuals, report.predicted)
    assert all(abs(r) < 0.05 * abs(p) for r, p in pairs)
    assert [row["eps"] for row in report.rows()] == [0.05, 0.035, 0.025]
    assert report.linear_measured is None


def test_expansion_scan_linear_coefficient(two_well_model, two_well_limit):
    offsets = offsets_for_potential_gap(two_well_model, 0.04)
    report = expansion_scan(
        two_well_limit, two_well_model, [0.05, 0.025], offsets=offsets
    )
    assert report.gaps == pytest.approx((0.04, 0.04))
    assert report.linear_relative_error < 1e-3


def test_expansion_scan_needs_decreasing_eps(two_well_model, two_well_limit):
    with pytest.raises(ParameterError):
        expansion_scan(two_well_limit, two_well_model, [0.05, 0.1])
    with pytest.raises(ParameterError):
        expansion_scan(two_well_limit, two_well_model, [0.1])


def test_linear_form_vanishes_on_exact_profiles(constant_model, constant_limit):
    state = AnsatzState.at_wells(0.1, constant_limit)
    bump = GaussianBump((0.05, 0.02, 0.0), 0.1)
    raised = potential_preset("constant", {"values": [1.2]})
    reference = l_eps(state, bump, raised)
    assert reference > 0.0
    assert abs(l_eps(state, bump, constant_model)) < 1e-3 * reference


def test_linear_form_on_the_lattice_is_linear(single_well_model, single_well_limit):
    grid = BoxGrid(1.0, 17)
    state = AnsatzState.at_wells(0.2, single_well_limit)
    test = GaussianBump((0.1, 0.0, 0.0), 0.2).on_grid(grid)
    once = l_eps(state, test, single_well_model)
    twice = l_eps(state, test + test, single_well_model)
    assert twice == pytest.approx(2.0 * once)
    assert l_eps_dual_norm(state, single_well_model, grid) >= 0.0


def test_linear_form_rejects_unknown_tests(constant_model, constant_limit):
    with pytest.raises(BackendMismatch):
        l_eps(AnsatzState.at_wells(0.1, constant_limit), [0.0], constant_model)


def test_pohozaev_balances_for_constant_potential(constant_model, constant_limit):
    eps = 0.1
    field = AnsatzState.at_wells(eps, constant_limit).field()
    terms = pohozaev_terms(
        field, eps, constant_model, constant_limit.params, (0.0, 0.0, 0.0), 0.4
    )
    assert terms.lhs == pytest.approx(np.zeros(3), abs=1e-12)
    assert terms.residual <= 1e-9


def test_pohozaev_volume_side_sees_the_tilt(single_well_limit):
    eps = 0.05
    model = potential_preset("tilted_well", {"tilt": (0.2, 0.0, 0.0)})
    field = AnsatzState.at_wells(eps, single_well_limit).field()
    terms = pohozaev_terms(
        field, eps, model, single_well_limit.params, (0.0, 0.0, 0.0), 0.4
    )
    w = single_well_limit.w_profiles[0]
    assert terms.lhs[0] / eps**3 == pytest.approx(0.2 * lp_norm_pow(w, 2.0), rel=1e-3)
    assert terms.eps1_sq == pytest.approx(eps**2 * single_well_limit.c, rel=1e-4)


def test_defect_of_the_naive_ansatz_does_not_vanish(params, two_well_model):
    report = nonexistence_defect(
        params, two_well_model.wells, two_well_model, [0.02, 0.01]
    )
    assert report.naive_converged(0.05)
    smallest_oracle = min(abs(value) for value in report.oracle)
    assert np.max(np.abs(report.system[-1])) < 0.05 * smallest_oracle
    assert set(report.rows()[0]) == {
        "eps",
        "naive_ratio_1",
        "naive_ratio_2",
        "system_ratio_1",
        "system_ratio_2",
    }


def test_defect_needs_two_wells(params, single_well_model):
    with pytest.raises(ParameterError):
        nonexistence_defect(
            params, single_well_model.wells, single_well_model, [0.02, 0.01]
        )


def test_linear_form_is_the_derivative_of_the_energy(constant_limit):
    raised = potential_preset("constant", {"values": [1.2]})
    state = AnsatzState.at_wells(0.1, constant_limit)
    ansatz = state.field()
    bump = GaussianBump((0.05, 0.02, 0.0), 0.1)
    step = 1e-4

    def energy(t):
        field = FieldCombination([ansatz, bump], [1.0, t])
        return energy_functional(field, 0.1, raised, constant_limit.params)

    slope = (energy(step) - energy(-step)) / (2.0 * step)
    assert l_eps(state, bump, raised) == pytest.approx(slope, rel=1e-6)


def test_pohozaev_residual_shrinks_with_quadrature_order(
    constant_model, constant_limit
):
    eps = 0.1
    field = AnsatzField(constant_limit.w_profiles, np.array([[0.05, 0.02, 0.0]]), eps)
    params = constant_limit.params

    def residual(orders):
        return pohozaev_residual(
            field, eps, constant_model, params, (0.0, 0.0, 0.0), 0.4, orders
        )

    coarse = residual(QuadratureOrders(n_radial=16, n_theta=6, n_phi=6))
    fine = residual(QuadratureOrders())
    assert fine < 0.1 * coarse
    assert fine <= 1e-6 * eps**3


@pytest.mark.slow
def test_energy_expansion_over_four_eps(two_well_model, two_well_limit):
    offsets = offsets_for_potential_gap(two_well_model, 1e-2)
    report = expansion_scan(
        two_well_limit, two_well_model, [0.2, 0.1, 0.05, 0.025], offsets=offsets
    )
    assert report.gaps == pytest.approx((1e-2, 1e-2))
    assert report.fitted_order >= 3.5
    assert report.linear_relative_error <= 0.05


@pytest.mark.slow
def test_defect_dichotomy_under_strong_coupling(two_well_model):
    params = ProblemParams(1.0, 1.0, 3.0)
    eps_list = [0.004, 0.002, 0.001, 0.0005]
    report = nonexistence_defect(
        params,
        two_well_model.wells,
        two_well_model,
        eps_list,
        orders=QuadratureOrders(200),
    )
    assert report.naive_converged(0.05)
    oracle = np.abs(np.array(report.oracle))
    assert np.all(np.abs(report.system[-1]) <= 0.1 * oracle)
