import numpy as np
import pytest

from kpeaks.errors import ParameterError
from kpeaks.fields3d import AnsatzState, BoxGrid
from kpeaks.spectral import (
    build_lplus_radial,
    coercivity_check,
    smallest_eigenpairs,
    spectrum_scan,
    translation_cosine,
)


def test_radial_matrix_is_symmetric(single_well_limit):
    matrix = build_lplus_radial(single_well_limit, 0, 1)
    assert abs(matrix.local - matrix.local.T).max() == 0.0
    assert matrix.radii[0] == pytest.approx(matrix.spacing)


def test_nonlocal_term_only_in_the_radial_mode(single_well_limit):
    assert build_lplus_radial(single_well_limit, 0, 0).rank_one is not None
    local_only = build_lplus_radial(single_well_limit, 0, 0, include_nonlocal=False)
    assert local_only.rank_one is None
    assert build_lplus_radial(single_well_limit, 0, 1).rank_one is None


def test_inverse_includes_the_rank_one_term(single_well_limit):
    matrix = build_lplus_radial(single_well_limit, 0, 0)
    x = np.random.default_rng(0).standard_normal(matrix.size)
    round_trip = matrix.inverse().matvec(matrix.matvec(x))
    assert round_trip == pytest.approx(x, rel=1e-6, abs=1e-8)


def test_radial_mode_has_a_negative_direction(single_well_limit):
    matrix = build_lplus_radial(single_well_limit, 0, 0, include_nonlocal=False)
    w = np.asarray(single_well_limit.w_profiles[0].evaluate(matrix.radii))
    v = matrix.radii * w
    assert float(v @ matrix.matvec(v)) < 0.0


def test_translation_kernel(single_well_limit):
    matrix = build_lplus_radial(single_well_limit, 0, 1)
    pairs = smallest_eigenpairs(matrix, 3)
    assert abs(pairs.values[0]) < 1e-6 * abs(pairs.values[1])
    assert translation_cosine(matrix, single_well_limit, pairs.vectors[:, 0]) >= 0.999


def test_higher_modes_are_positive(single_well_limit):
    pairs = smallest_eigenpairs(build_lplus_radial(single_well_limit, 0, 2), 2)
    assert np.all(pairs.values > 0.0)


def test_spectrum_scan_flags_translations(two_well_limit):
    report = spectrum_scan(two_well_limit, ell_max=2, count=3)
    assert report.kernel_modes() == [(0, 1), (1, 1)]
    assert report.nondegenerate()
    assert len(report.rows()) == 2 * 3 * 3
    assert set(report.rows()[0]) == {
        "well",
        "ell",
        "eigenvalue_rank",
        "eigenvalue",
        "kernel_flag",
    }


def test_spectrum_scan_through_ell_three(two_well_limit):
    report = spectrum_scan(two_well_limit, ell_max=3, count=3)
    assert report.kernel_modes() == [(0, 1), (1, 1)]
    assert all(cosine >= 0.999 for cosine in report.translation_cosines)
    assert len(report.radial_gaps) == 2
    assert all(gap >= 0.01 for gap in report.radial_gaps)
    higher = [e for e in report.entries if e.ell >= 2]
    assert {e.ell for e in higher} == {2, 3}
    assert all(e.eigenvalue > 0.0 for e in higher)
    assert report.nondegenerate()


@pytest.mark.parametrize(
    "call",
    [
        lambda limit: build_lplus_radial(limit, 0, -1),
        lambda limit: build_lplus_radial(limit, 1, 0),
        lambda limit: smallest_eigenpairs(build_lplus_radial(limit, 0, 1), 0),
        lambda limit: spectrum_scan(limit, count=1),
    ],
)
def test_spectral_parameter_errors(single_well_limit, call):
    with pytest.raises(ParameterError):
        call(single_well_limit)


@pytest.mark.slow
def test_coercivity_on_a_single_peak(single_well_model, single_well_limit):
    state = AnsatzState.at_wells(0.2, single_well_limit)
    report = coercivity_check(
        state, BoxGrid(1.0, 25), single_well_model, nodes_per_peak=3, boundary_tol=1e-2
    )
    assert report.rho_estimate > 0.0
    assert report.min_rayleigh < 0.0
    assert report.negative_count >= 1
    assert report.upper_C > report.rho_estimate
    assert report.row()["n"] == 25
