"""The Kirchhoff energy and its small-eps expansion.

Also the linear form l_eps, the local Pohozaev terms and the defect of the
naive single-equation ansatz.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from tqdm import tqdm

from kpeaks.errors import BackendMismatch, ParameterError
from kpeaks.kirchhoff_limit import (
    LimitSystemSolution,
    LocalShape,
    ProblemParams,
    WellData,
    build_limit_system,
    build_single_kirchhoff_family,
)
from kpeaks.radial_core import grad_norm_sq, lp_norm_pow, positive_power
from kpeaks.fields3d.ansatz import AnsatzField, AnsatzState, SmoothField
from kpeaks.fields3d.lattice import BoxGrid, Field3D, LatticeKirchhoff
from kpeaks.fields3d.potential import PotentialModel, eval_potential
from kpeaks.fields3d.quadrature import (
    MulticenterQuadrature,
    QuadratureOrders,
    SphereSurface,
    SphericalQuadrature,
)


logger = logging.getLogger(__name__)


def fit_order(eps_list: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log|value| against log(eps).

    Returns inf when fewer than two nonzero values are left to fit.
    """
    eps = np.asarray(eps_list, dtype=float)
    magnitude = np.abs(np.asarray(values, dtype=float))
    keep = magnitude > 0.0
    if np.count_nonzero(keep) < 2:
        return math.inf
    slope, _ = np.polyfit(np.log(eps[keep]), np.log(magnitude[keep]), 1)
    return float(slope)


def _rule_for(
    fields: Sequence[SmoothField], orders: QuadratureOrders
) -> MulticenterQuadrature:
    centers = np.unique(np.concatenate([f.centers for f in fields]), axis=0)
    radius = max(f.support_radius for f in fields)
    return MulticenterQuadrature.build(centers, radius, orders)


def _smooth_energy(
    u: SmoothField, eps: float, model: PotentialModel, params: ProblemParams, orders
) -> float:
    rule = _rule_for([u], orders)
    values = u.values(rule.points)
    grad_sq = rule.integrate(np.sum(u.gradients(rule.points) ** 2, axis=1))
    potential_term = rule.integrate(model.values(rule.points) * values**2)
    exponent = params.p + 1.0
    nonlinear = rule.integrate(positive_power(values, exponent)) / exponent
    quadratic = 0.5 * (eps**2 * params.a * grad_sq + potential_term)
    return quadratic + 0.25 * params.b * eps * grad_sq**2 - nonlinear


def energy_functional(
    u,
    eps: float,
    model: PotentialModel,
    params: ProblemParams,
    orders: QuadratureOrders = QuadratureOrders(),
) -> float:
    """I_eps(u) on the backend that matches the type of u."""
    if isinstance(u, Field3D):
        return LatticeKirchhoff(u.grid, eps, params, model).energy(u.interior())
    if isinstance(u, SmoothField):
        return _smooth_energy(u, eps, model, params, orders)
    raise BackendMismatch(
        f"Cannot evaluate the energy of a {type(u).__name__}; "
        "pass a Field3D or a SmoothField"
    )


@dataclass(frozen=True)
class ExpansionConstants:
    """C1, the per-well C2_j and the Hoelder order governing the remainder."""

    C1: float
    C2: Tuple[float, ...]
    theta: float

    def predicted(self, eps: float, gaps: Sequence[float]) -> float:
        """C1 eps^3 + sum_j C2_j (V(y^j) - V(a_j)) eps^3."""
        return eps**3 * (self.C1 + math.fsum(c * g for c, g in zip(self.C2, gaps)))


def _remainder_theta(wells: Sequence[WellData]) -> float:
    return min(
        w.hoelder_theta if w.local_shape is LocalShape.HOELDER_CUSP else 1.0
        for w in wells
    )


def expansion_constants(
    limit: LimitSystemSolution, params: Optional[ProblemParams] = None
) -> ExpansionConstants:
    """Constants of the expansion of I_eps(W_{eps,Y}), by radial quadrature on w."""
    params = params or limit.params
    p = params.p
    nonlinear = math.fsum(lp_norm_pow(w, p + 1.0) for w in limit.w_profiles)
    grad_total = math.fsum(grad_norm_sq(w) for w in limit.w_profiles)
    c1 = (0.5 - 1.0 / (p + 1.0)) * nonlinear - 0.25 * params.b * grad_total**2
    c2 = tuple(0.5 * lp_norm_pow(w, 2.0) for w in limit.w_profiles)
    return ExpansionConstants(c1, c2, _remainder_theta(limit.wells))


@dataclass(frozen=True, eq=False)
class EnergyReport:  # pylint: disable=too-many-instance-attributes
    """Measured and predicted I_eps(W_{eps,Y}) along an eps scan."""

    eps_list: Tuple[float, ...]
    measured: Tuple[float, ...]
    predicted: Tuple[float, ...]
    residuals: Tuple[float, ...]
    fitted_order: float
    constants: ExpansionConstants
    gaps: Tuple[float, ...]
    measured_at_wells: Optional[Tuple[float, ...]] = None

    @property
    def linear_measured(self) -> Optional[Tuple[float, ...]]:
        """(I_eps(W_{eps,Y}) - I_eps(W_{eps,A})) / eps^3, when offsets were scanned."""
        if self.measured_at_wells is None:
            return None
        return tuple(
            (m - m0) / e**3
            for m, m0, e in zip(self.measured, self.measured_at_wells, self.eps_list)
        )

    @property
    def linear_predicted(self) -> float:
        """sum_j C2_j (V(y^j) - V(a_j))."""
        return math.fsum(c * g for c, g in zip(self.constants.C2, self.gaps))

    @property
    def linear_relative_error(self) -> Optional[float]:
        """Relative mismatch of the linear coefficient at the smallest eps."""
        measured = self.linear_measured
        if measured is None or self.linear_predicted == 0.0:
            return None
        smallest = int(np.argmin(self.eps_list))
        mismatch = abs(measured[smallest] - self.linear_predicted)
        return mismatch / abs(self.linear_predicted)

    def rows(self) -> List[Dict]:
        """Table rows, one per eps."""
        columns = zip(self.eps_list, self.measured, self.predicted, self.residuals)
        return [
            dict(eps=e, I_measured=m, I_predicted=p, residual=r)
            for e, m, p, r in columns
        ]


def offsets_for_potential_gap(
    model: PotentialModel, gap: float, direction: Sequence[float] = (1.0, 0.0, 0.0)
) -> np.ndarray:
    """Per-well displacements t_j e with V(a_j + t_j e) - V(a_j) = gap."""
    unit = np.asarray(direction, dtype=float)
    unit = unit / np.linalg.norm(unit)
    offsets = []
    for index, well in enumerate(model.wells):
        if gap == 0.0:
            offsets.append(np.zeros(3))
            continue
        center = np.array(well.center)
        base = eval_potential(model, center)
        reach = model.blend_radius

        def excess(t, center=center, base=base):
            return eval_potential(model, center + t * unit) - base - gap

        if excess(reach) <= 0.0:
            raise ParameterError(
                f"Well {index} does not rise by {gap} within its blend radius {reach}"
            )
        offsets.append(optimize.brentq(excess, 0.0, reach, xtol=1e-14) * unit)
    return np.array(offsets)


# pylint: disable=too-many-arguments,too-many-locals
def expansion_scan(
    limit: LimitSystemSolution,
    model: PotentialModel,
    eps_list: Sequence[float],
    offsets: Optional[np.ndarray] = None,
    orders: QuadratureOrders = QuadratureOrders(),
    threads: int = 1,
    no_progress_bar: bool = True,
) -> EnergyReport:
    """Measure I_eps(W_{eps,Y}) for Y = A + offsets against the expansion.

    The residual order is fitted over the scanned eps.
    """
    eps_list = tuple(float(e) for e in eps_list)
    if len(eps_list) < 2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError(
            "eps list must be strictly decreasing with at least two values, "
            f"got {eps_list}"
        )
    centers = np.array([w.center for w in limit.wells])
    shifted = offsets is not None and np.any(offsets)
    peaks = centers + (np.asarray(offsets, dtype=float) if shifted else 0.0)
    gaps = tuple(
        eval_potential(model, y) - eval_potential(model, a)
        for y, a in zip(peaks, centers)
    )
    constants = expansion_constants(limit)

    def energy_at(points, eps):
        field = AnsatzField(limit.w_profiles, points, eps)
        return energy_functional(field, eps, model, limit.params, orders)

    def measure(eps):
        at_wells = energy_at(centers, eps) if shifted else None
        return energy_at(peaks, eps), at_wells

    logger.info("Energy scan initiated: eps %s, gaps %s", eps_list, gaps)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(
            tqdm(
                executor.map(measure, eps_list),
                total=len(eps_list),
                ascii=True,
                disable=no_progress_bar,
            )
        )
    measured = tuple(r[0] for r in results)
    predicted = tuple(constants.predicted(e, gaps) for e in eps_list)
    residuals = tuple(m - p for m, p in zip(measured, predicted))
    report = EnergyReport(
        eps_list,
        measured,
        predicted,
        residuals,
        fit_order(eps_list, residuals),
        constants,
        gaps,
        tuple(r[1] for r in results) if shifted else None,
    )
    logger.info(
        "Energy scan completed: fitted residual order %.4f", report.fitted_order
    )
    return report


def l_eps(
    state: AnsatzState,
    test,
    model: PotentialModel,
    orders: QuadratureOrders = QuadratureOrders(),
) -> float:
    """l_eps(phi) = <W, phi>_eps + eps b |grad W|^2 (grad W, grad phi) - int W^p phi.

    |grad W|^2 is integrated over R^3.
    """
    params = state.limit.params
    if isinstance(test, Field3D):
        lattice = LatticeKirchhoff(test.grid, state.eps, params, model)
        ansatz = state.field().on_grid(test.grid)
        return math.fsum(lattice.gradient(ansatz.interior()) * test.interior())
    if not isinstance(test, SmoothField):
        raise BackendMismatch(f"Cannot pair l_eps with a {type(test).__name__}")
    ansatz = state.field()
    rule = _rule_for([ansatz, test], orders)
    w_values, w_grads = ansatz.values(rule.points), ansatz.gradients(rule.points)
    t_values, t_grads = test.values(rule.points), test.gradients(rule.points)
    grad_sq = rule.integrate(np.sum(w_grads**2, axis=1))
    grad_dot = rule.integrate(np.sum(w_grads * t_grads, axis=1))
    coefficient = state.eps**2 * params.a + state.eps * params.b * grad_sq
    potential_term = rule.integrate(model.values(rule.points) * w_values * t_values)
    nonlinear = rule.integrate(positive_power(w_values, params.p) * t_values)
    return coefficient * grad_dot + potential_term - nonlinear


def l_eps_dual_norm(state: AnsatzState, model: PotentialModel, grid: BoxGrid) -> float:
    """sup |l_eps(phi)| / ||phi||_eps over lattice fields phi."""
    lattice = LatticeKirchhoff(grid, state.eps, state.limit.params, model)
    ansatz = state.field().on_grid(grid)
    return lattice.dual_norm(lattice.gradient(ansatz.interior()))


@dataclass(frozen=True, eq=False)
class PohozaevTerms:
    """Both sides of the local Pohozaev identity on a ball, for j = 1, 2, 3."""

    lhs: np.ndarray
    rhs: np.ndarray
    eps1_sq: float

    @property
    def residual(self) -> float:
        """max_j |lhs_j - rhs_j|."""
        return float(np.max(np.abs(self.lhs - self.rhs)))


# pylint: disable=too-many-arguments
def pohozaev_terms(
    u: SmoothField,
    eps: float,
    model: PotentialModel,
    params: ProblemParams,
    center: Sequence[float],
    radius: float,
    orders: QuadratureOrders = QuadratureOrders(),
) -> PohozaevTerms:
    """Volume side int_B d_jV u^2 and boundary side on the sphere of the given radius.

    The boundary side is eps1^2 int (|grad u|^2 nu_j - 2 d_nu u d_j u)
    + int V u^2 nu_j - 2/(p+1) int u^{p+1} nu_j, with eps1^2 = eps^2 a +
    eps b int_{R^3} |grad u|^2 taken from u itself.
    """
    everywhere = _rule_for([u], orders)
    grad_sq = everywhere.integrate(np.sum(u.gradients(everywhere.points) ** 2, axis=1))
    eps1_sq = eps**2 * params.a + eps * params.b * grad_sq

    ball = SphericalQuadrature.build(center, radius, orders)
    u_ball = u.values(ball.points)
    grad_v = model.gradients(ball.points)
    lhs = np.array([ball.integrate(grad_v[:, j] * u_ball**2) for j in range(3)])

    sphere = SphereSurface.build(center, radius, orders)
    normals = sphere.normals
    u_s = u.values(sphere.points)
    grads = u.gradients(sphere.points)
    normal_derivative = np.sum(grads * normals, axis=1)
    flux = np.sum(grads**2, axis=1)
    v_s = model.values(sphere.points)
    nonlinear = 2.0 / (params.p + 1.0) * positive_power(u_s, params.p + 1.0)
    rhs = np.array(
        [
            eps1_sq
            * sphere.integrate(
                flux * normals[:, j] - 2.0 * normal_derivative * grads[:, j]
            )
            + sphere.integrate(v_s * u_s**2 * normals[:, j])
            - sphere.integrate(nonlinear * normals[:, j])
            for j in range(3)
        ]
    )
    return PohozaevTerms(lhs, rhs, eps1_sq)


def pohozaev_residual(
    u: SmoothField,
    eps: float,
    model: PotentialModel,
    params: ProblemParams,
    center: Sequence[float],
    radius: float,
    orders: QuadratureOrders = QuadratureOrders(),
) -> float:
    """|LHS - RHS| of the local Pohozaev identity, max over the three directions."""
    return pohozaev_terms(u, eps, model, params, center, radius, orders).residual


@dataclass(frozen=True, eq=False)
class DefectReport:
    """Projected defects over eps^3, per eps and per well, for both ansatz families."""

    eps_list: Tuple[float, ...]
    naive: np.ndarray
    system: np.ndarray
    oracle: Tuple[float, ...]
    system_order: float

    def rows(self) -> List[Dict]:
        """Table rows, one per eps."""
        rows = []
        for index, eps in enumerate(self.eps_list):
            row = dict(eps=eps)
            for j in range(self.naive.shape[1]):
                row[f"naive_ratio_{j + 1}"] = float(self.naive[index, j])
                row[f"system_ratio_{j + 1}"] = float(self.system[index, j])
            rows.append(row)
        return rows

    def naive_converged(self, tolerance: float = 0.05) -> bool:
        """Naive ratios at the two smallest eps agree and match the oracle."""
        order = np.argsort(self.eps_list)
        last, previous = self.naive[order[0]], self.naive[order[1]]
        oracle = np.array(self.oracle)
        stable = np.all(np.abs(last - previous) <= tolerance * np.abs(last))
        close = np.all(np.abs(last - oracle) <= tolerance * np.abs(oracle))
        return bool(stable and close)


def _projected_defect(
    u: AnsatzField,
    eps: float,
    model: PotentialModel,
    params: ProblemParams,
    orders: QuadratureOrders,
) -> np.ndarray:
    """int D(u) t_j / eps^3 for the j-th peak t_j of u.

    D(u) = -(eps^2 a + eps b int|grad u|^2) Lap u + V u - u^p.
    """
    rule = _rule_for([u], orders)
    values = u.values(rule.points)
    grad_sq = rule.integrate(np.sum(u.gradients(rule.points) ** 2, axis=1))
    coefficient = eps**2 * params.a + eps * params.b * grad_sq
    defect = -coefficient * u.laplacians(rule.points)
    defect += model.values(rule.points) * values - positive_power(values, params.p)
    projections = []
    for profile, peak in zip(u.profiles, u.peaks):
        single = AnsatzField((profile,), peak[None, :], eps)
        projections.append(rule.integrate(defect * single.values(rule.points)) / eps**3)
    return np.array(projections)


def nonexistence_defect(
    params: ProblemParams,
    wells: Sequence[WellData],
    model: PotentialModel,
    eps_list: Sequence[float],
    tol: float = 1e-8,
    orders: QuadratureOrders = QuadratureOrders(),
    threads: int = 1,
    no_progress_bar: bool = True,
) -> DefectReport:
    """Defects of the naive single-equation ansatz and of the system ansatz.

    Both families put their peaks at the wells.
    """
    if len(wells) < 2:
        raise ParameterError("The defect comparison needs at least two wells")
    if not params.b > 0.0:
        logger.warning("Defect scan with b=0: both ansatz families coincide")
    limit = build_limit_system(params, wells, tol, threads)
    family = build_single_kirchhoff_family(params, wells, tol)
    peaks = np.array([w.center for w in wells])
    oracle = tuple(
        params.b * k_j * g_j for k_j, g_j in zip(family.couplings, family.grad_norms)
    )
    eps_list = tuple(float(e) for e in eps_list)

    def defect_of(profiles, eps):
        field = AnsatzField(profiles, peaks, eps)
        return _projected_defect(field, eps, model, params, orders)

    def measure(eps):
        return defect_of(family.profiles, eps), defect_of(limit.w_profiles, eps)

    logger.info("Defect scan initiated: eps %s, oracle %s", eps_list, oracle)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(
            tqdm(
                executor.map(measure, eps_list),
                total=len(eps_list),
                ascii=True,
                disable=no_progress_bar,
            )
        )
    naive = np.array([r[0] for r in results])
    system = np.array([r[1] for r in results])
    order = min(fit_order(eps_list, system[:, j]) for j in range(len(wells)))
    logger.info("Defect scan completed: system ratio order %.4f", order)
    return DefectReport(eps_list, naive, system, oracle, order)
