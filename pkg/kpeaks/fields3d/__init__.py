"""Potentials, ansatz fields and the two quadrature backends."""
# fmt: off
from kpeaks.fields3d.potential import (
    PRESET_NAMES, PotentialModel, eval_potential, grad_potential,
    potential_preset, quadratic_wells,
)
from kpeaks.fields3d.quadrature import (
    MulticenterQuadrature, QuadratureOrders, SphereSurface,
    SphericalQuadrature, bipolar_integral,
)
from kpeaks.fields3d.lattice import BoxGrid, Field3D, LatticeKirchhoff, check_resolution
from kpeaks.fields3d.ansatz import (
    AnsatzField, AnsatzState, FieldCombination, GaussianBump,
    InteractionReport, PeakDomain, SmoothField,
    assemble_ansatz, cross_terms,
)
# fmt: on
