"""Lyapunov-Schmidt reduction on the box lattice.

The corrector, the reduced energy and its minimization over D_delta.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import threading
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, optimize
from scipy.sparse import linalg as splinalg
from tqdm import tqdm

from kpeaks.errors import (
    BoundaryMinimum,
    ConstraintDrift,
    NewtonDiverged,
    ParameterError,
)
from kpeaks.kirchhoff_limit import LimitSystemSolution
from kpeaks.fields3d.ansatz import AnsatzState, PeakDomain, assemble_ansatz
from kpeaks.fields3d.lattice import (
    BoxGrid,
    Field3D,
    LatticeKirchhoff,
    check_resolution,
)
from kpeaks.fields3d.potential import PotentialModel
from kpeaks.spectral import translation_basis


logger = logging.getLogger(__name__)


CONSTRAINT_TOL = 1e-10
MAX_BACKTRACKS = 20
BOUNDARY_MARGIN = 0.05
PENALTY = 1e3


@dataclass(frozen=True)
class ReductionSettings:  # pylint: disable=too-many-instance-attributes
    """Lattice, Newton and simplex-search settings of the reduction."""

    n: int = 48
    half_width: float = 1.6
    newton_tol: float = 1e-9
    max_newton: int = 30
    tau: float = 0.1
    simplex_tol: float = 1e-3
    max_evaluations: int = 150
    n_starts: int = 3
    perturbation: float = 0.3
    boundary_tol: float = 1e-10
    nodes_per_peak: float = 8.0
    minres_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not self.newton_tol > 0.0:
            raise ParameterError(f"newton_tol must be positive, got {self.newton_tol}")
        if not 0.0 < self.tau < 0.5:
            raise ParameterError(f"tau must lie in (0, 1/2), got {self.tau}")
        if self.max_newton < 1 or self.n_starts < 1 or self.max_evaluations < 1:
            raise ParameterError(
                "max_newton, n_starts and max_evaluations must be positive"
            )

    def check_tau(self, theta: float) -> None:
        """Raise ParameterError unless tau < theta / 2."""
        if not self.tau < 0.5 * theta:
            raise ParameterError(
                f"tau={self.tau} must be smaller than theta/2={0.5 * theta}"
            )

    def grid_for(self, centers: np.ndarray) -> BoxGrid:
        """The lattice centered at the centroid of the wells."""
        centroid = tuple(np.mean(np.atleast_2d(centers), axis=0))
        return BoxGrid(self.half_width, self.n, centroid)


@dataclass(frozen=True, eq=False)
class PhiSolution:  # pylint: disable=too-many-instance-attributes
    """The corrector phi_{eps,Y} in E_{eps,Y} and the reduced energy it gives."""

    eps: float
    peaks: np.ndarray
    corrector: Field3D
    norm_eps: float
    projection_residuals: np.ndarray
    newton_iterations: int
    residual: float
    energy: float
    ansatz_norm: float

    @property
    def scaled_norm(self) -> float:
        """||phi||_eps / eps^(3/2)."""
        return self.norm_eps / self.eps**1.5

    def bound(self, theta: float, tau: float) -> float:
        """The eps^(theta - tau) shape the scaled norm should stay below."""
        return self.eps ** (theta - tau)


class ReductionProblem:
    """Limit profiles, potential and settings shared by every j_eps evaluation."""

    def __init__(
        self,
        limit: LimitSystemSolution,
        model: PotentialModel,
        settings: ReductionSettings,
    ):
        self.limit = limit
        self.model = model
        self.settings = settings
        self.grid = settings.grid_for(model.centers)
        self._lattices: Dict[float, LatticeKirchhoff] = {}
        self._lock = threading.Lock()

    @property
    def wells(self) -> np.ndarray:
        """Well centers A."""
        return self.model.centers

    def lattice(self, eps: float) -> LatticeKirchhoff:
        """The discrete functional at eps, built once."""
        with self._lock:
            if eps not in self._lattices:
                check_resolution(
                    self.grid, eps, self.limit.sqrt_c, self.settings.nodes_per_peak
                )
                self._lattices[eps] = LatticeKirchhoff(
                    self.grid, eps, self.limit.params, self.model
                )
            return self._lattices[eps]

    def state(
        self, peaks: np.ndarray, eps: float, domain: Optional[PeakDomain] = None
    ) -> AnsatzState:
        """The ansatz state at Y."""
        return AnsatzState(eps, peaks, self.limit, domain=domain)

    def ansatz(self, state: AnsatzState) -> np.ndarray:
        """W_{eps,Y} on the lattice unknowns."""
        sampled = assemble_ansatz(
            state.with_corrector(None), "box", self.grid, self.settings.boundary_tol
        )
        return sampled.interior()


class _ConstraintSpace:
    """Euclidean projector onto {phi : <phi, d_y W>_eps = 0}, by QR factorization."""

    def __init__(self, lattice: LatticeKirchhoff, basis: np.ndarray):
        self.lattice = lattice
        self.basis = basis
        self.constraints = np.column_stack(
            [lattice.gram @ column for column in basis.T]
        )
        self.q, _ = np.linalg.qr(self.constraints)
        self.basis_norms = np.array([lattice.norm(column) for column in basis.T])

    def project(self, vector: np.ndarray) -> np.ndarray:
        return vector - self.q @ (self.q.T @ vector)

    def residuals(self, phi: np.ndarray) -> np.ndarray:
        """|<phi, Z_j>_eps| / ||Z_j||_eps for every constraint vector."""
        return np.abs(self.constraints.T @ phi) / self.basis_norms

    def multipliers(self, gradient: np.ndarray) -> np.ndarray:
        """Least-squares coefficients mu with gradient ~ sum_j mu_j A Z_j."""
        return np.linalg.lstsq(self.constraints, gradient, rcond=None)[0]


def _newton_step(
    hessian, gradient, space: _ConstraintSpace, rtol: float
) -> np.ndarray:
    lattice = space.lattice
    size = lattice.size

    def projected_hessian(v):
        return space.project(hessian @ space.project(np.ravel(v)))

    def projected_reference_solve(v):
        return space.project(lattice.reference_solve(space.project(np.ravel(v))))

    projected = splinalg.LinearOperator(
        (size, size), matvec=projected_hessian, dtype=float
    )
    preconditioner = splinalg.LinearOperator(
        (size, size), matvec=projected_reference_solve, dtype=float
    )
    step, info = splinalg.minres(
        projected,
        -space.project(gradient),
        M=preconditioner,
        rtol=rtol,
        maxiter=10 * size,
    )
    if info != 0:
        logger.warning(
            "MINRES stopped with info=%d before reaching rtol %.1e", info, rtol
        )
    return space.project(step)


# pylint: disable=too-many-locals
def solve_phi(problem: ReductionProblem, state: AnsatzState) -> PhiSolution:
    """Newton iteration for phi in E_{eps,Y}, starting at phi = 0.

    It stops once the projected first variation is below newton_tol.
    """
    settings = problem.settings
    lattice = problem.lattice(state.eps)
    ansatz = problem.ansatz(state)
    space = _ConstraintSpace(lattice, translation_basis(state, problem.grid))
    scale = lattice.norm(ansatz)

    def residual_of(phi):
        return lattice.dual_norm(space.project(lattice.gradient(ansatz + phi))) / scale

    def check_constraints(phi, iteration):
        norm = lattice.norm(phi)
        drift = space.residuals(phi)
        if norm > 0.0 and np.max(drift) > CONSTRAINT_TOL * norm:
            raise ConstraintDrift(
                f"Iterate {iteration} leaves E: projection residual "
                f"{np.max(drift):.3e} against ||phi||_eps={norm:.3e}"
            )
        return drift

    phi = np.zeros(lattice.size)
    residual = residual_of(phi)
    iteration = 0
    logger.debug(
        "Corrector Newton at eps=%s: initial residual %.3e", state.eps, residual
    )
    while residual > settings.newton_tol:
        if iteration >= settings.max_newton:
            raise NewtonDiverged(
                f"Corrector Newton did not reach {settings.newton_tol:.1e} "
                f"in {settings.max_newton} iterations",
                last_residual=residual,
            )
        iteration += 1
        hessian = lattice.hessian(ansatz + phi)
        gradient = lattice.gradient(ansatz + phi)
        step = _newton_step(hessian, gradient, space, settings.minres_tol)
        length = 1.0
        for _ in range(MAX_BACKTRACKS + 1):
            trial = space.project(phi + length * step)
            trial_residual = residual_of(trial)
            if trial_residual < residual:
                break
            length *= 0.5
        else:
            raise NewtonDiverged(
                f"Line search failed after {MAX_BACKTRACKS} backtracks "
                f"at Newton iteration {iteration}",
                last_residual=residual,
            )
        phi, residual = trial, trial_residual
        check_constraints(phi, iteration)
        logger.debug(
            "Newton iteration %d: step length %g, residual %.3e",
            iteration,
            length,
            residual,
        )

    drift = check_constraints(phi, iteration)
    return PhiSolution(
        state.eps,
        np.array(state.peaks),
        Field3D.from_interior(problem.grid, phi),
        lattice.norm(phi),
        drift,
        iteration,
        residual,
        lattice.energy(ansatz + phi),
        scale,
    )


@dataclass(frozen=True)
class RemainderReport:
    """|J(phi) - J(0) - l(phi) - <Lambda phi, phi>/2| against the shape of its bound."""

    eps: float
    remainder: float
    bound_shape: float

    @property
    def ratio(self) -> float:
        """Remainder over the bound shape; should stay bounded along eps."""
        return self.remainder / self.bound_shape if self.bound_shape > 0.0 else 0.0


def remainder_check(
    problem: ReductionProblem, state: AnsatzState, phi: PhiSolution
) -> RemainderReport:
    """Evaluate the cubic-and-higher remainder of J in phi.

    The bound shape is eps^(-3(p-1)/2)||phi||^(p+1) + eps^(-3/2)||phi||^3.
    """
    lattice = problem.lattice(state.eps)
    ansatz = problem.ansatz(state)
    correction = phi.corrector.interior()
    quadratic = 0.5 * float(correction @ (lattice.hessian(ansatz) @ correction))
    linear = float(lattice.gradient(ansatz) @ correction)
    change = lattice.energy(ansatz + correction) - lattice.energy(ansatz)
    remainder = abs(change - linear - quadratic)
    p, eps, norm = problem.limit.params.p, state.eps, phi.norm_eps
    bound = eps ** (-1.5 * (p - 1.0)) * norm ** (p + 1.0) + eps**-1.5 * norm**3
    return RemainderReport(eps, remainder, bound)


def reduced_energy(problem: ReductionProblem, peaks: np.ndarray, eps: float) -> float:
    """j_eps(Y) = I_eps(W_{eps,Y} + phi_{eps,Y})."""
    return solve_phi(problem, problem.state(peaks, eps)).energy


@dataclass(frozen=True)
class LandscapeEntry:
    """One evaluation of the reduced energy."""

    peaks: Tuple[float, ...]
    energy: float
    phi_norm: float
    newton_iterations: int


@dataclass(frozen=True, eq=False)
class ReducedLandscape:  # pylint: disable=too-many-instance-attributes
    """Every sampled (Y, j_eps(Y)) and the minimizer Y_eps."""

    eps: float
    domain: PeakDomain
    entries: Tuple[LandscapeEntry, ...]
    argmin: np.ndarray
    energy: float
    energy_at_wells: float
    unprojected_residual: float
    refined: bool
    phi: PhiSolution

    @property
    def distances(self) -> np.ndarray:
        """|y_eps^i - a_i|."""
        return self.domain.distances(self.argmin)

    @property
    def interior(self) -> bool:
        """Y_eps keeps the boundary margin inside D_delta."""
        margin = BOUNDARY_MARGIN * self.domain.delta
        return self.domain.boundary_distance(self.argmin) >= margin

    @property
    def energy_ordering(self) -> bool:
        """j(Y_eps) <= j(A) up to the relative Newton noise."""
        return self.energy <= self.energy_at_wells + 1e-9 * abs(self.energy_at_wells)

    def rows(self) -> List[Dict]:
        """Table rows, one per evaluation."""
        rows = []
        for entry in self.entries:
            row = {}
            for i, triple in enumerate(np.reshape(entry.peaks, (-1, 3))):
                row.update(
                    {f"y{i}_{axis}": value for axis, value in zip("xyz", triple)}
                )
            row.update(
                j_eps=entry.energy,
                phi_norm=entry.phi_norm,
                newton_iters=entry.newton_iterations,
            )
            rows.append(row)
        return rows


class _Evaluations:
    """Thread-safe record of reduced-energy evaluations keyed by Y."""

    def __init__(self, problem: ReductionProblem, eps: float):
        self.problem = problem
        self.eps = eps
        self.solutions: Dict[Tuple[float, ...], PhiSolution] = {}
        self._lock = threading.Lock()

    def solve(self, peaks: np.ndarray) -> PhiSolution:
        key = tuple(float(x) for x in np.ravel(peaks))
        with self._lock:
            if key in self.solutions:
                return self.solutions[key]
        solution = solve_phi(self.problem, self.problem.state(peaks, self.eps))
        with self._lock:
            self.solutions.setdefault(key, solution)
        return solution

    def entries(self) -> Tuple[LandscapeEntry, ...]:
        return tuple(
            LandscapeEntry(key, s.energy, s.norm_eps, s.newton_iterations)
            for key, s in sorted(self.solutions.items())
        )


def _starts(domain: PeakDomain, settings: ReductionSettings) -> List[np.ndarray]:
    rng = np.random.default_rng(settings.seed)
    starts = [domain.centers.copy()]
    for _ in range(settings.n_starts - 1):
        directions = rng.normal(size=domain.centers.shape)
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        starts.append(
            domain.centers + settings.perturbation * domain.delta * directions
        )
    return starts


def _refinement_accepted(energy: float, simplex_energy: float, rel_tol: float) -> bool:
    """Whether a root of mu(Y) = 0 is no worse than the simplex minimum."""
    return energy <= simplex_energy + rel_tol * abs(simplex_energy)


def _multiplier_residual(
    problem: ReductionProblem, solution: PhiSolution, state: AnsatzState
) -> np.ndarray:
    lattice = problem.lattice(state.eps)
    space = _ConstraintSpace(lattice, translation_basis(state, problem.grid))
    gradient = lattice.gradient(problem.ansatz(state) + solution.corrector.interior())
    return space.multipliers(gradient) / solution.ansatz_norm


def unprojected_residual(problem: ReductionProblem, solution: PhiSolution) -> float:
    """Dual eps-norm of the full first variation at W + phi, relative to ||W||_eps."""
    state = problem.state(solution.peaks, solution.eps)
    lattice = problem.lattice(solution.eps)
    gradient = lattice.gradient(problem.ansatz(state) + solution.corrector.interior())
    return lattice.dual_norm(gradient) / solution.ansatz_norm


# pylint: disable=too-many-locals
def minimize_j(
    problem: ReductionProblem,
    eps: float,
    domain: PeakDomain,
    threads: int = 1,
    no_progress_bar: bool = True,
) -> ReducedLandscape:
    """Multi-start Nelder-Mead for j_eps over D_delta.

    An interior simplex minimum is refined by solving mu(Y) = 0 for the
    constraint multipliers; the root replaces it only if j_eps does not rise.
    """
    settings = problem.settings
    evaluations = _Evaluations(problem, eps)

    def objective(flat):
        peaks = np.reshape(flat, domain.centers.shape)
        inside = domain.project(peaks)
        excess = float(np.sum((peaks - inside) ** 2))
        energy = evaluations.solve(inside).energy
        return energy + PENALTY * abs(energy) * excess / domain.delta**2

    def search(start):
        steps = [start.ravel() + 0.1 * domain.delta * e for e in np.eye(start.size)]
        simplex = np.vstack([start.ravel()] + steps)
        return optimize.minimize(
            objective,
            start.ravel(),
            method="Nelder-Mead",
            options=dict(
                initial_simplex=simplex,
                xatol=settings.simplex_tol,
                fatol=0.0,
                maxfev=settings.max_evaluations,
            ),
        )

    def multipliers(flat):
        solution = evaluations.solve(np.reshape(flat, domain.centers.shape))
        return _multiplier_residual(problem, solution, problem.state(flat, eps))

    logger.info(
        "Reduced minimization initiated: eps=%s, k=%d, delta=%.4g",
        eps,
        domain.k,
        domain.delta,
    )
    at_wells = evaluations.solve(domain.centers)
    starts = _starts(domain, settings)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(
            tqdm(
                executor.map(search, starts),
                total=len(starts),
                ascii=True,
                disable=no_progress_bar,
            )
        )
    best = min(results, key=lambda r: r.fun)
    argmin = domain.project(np.reshape(best.x, domain.centers.shape))
    solution = evaluations.solve(argmin)

    refined = False
    if domain.boundary_distance(argmin) >= BOUNDARY_MARGIN * domain.delta:
        root = optimize.root(
            multipliers,
            argmin.ravel(),
            method="hybr",
            options=dict(eps=1e-8, maxfev=20 * argmin.size),
        )
        candidate = np.reshape(root.x, argmin.shape)
        if not (root.success and domain.contains(candidate)):
            logger.warning("Multiplier refinement rejected: %s", root.message)
        else:
            refined_solution = evaluations.solve(candidate)
            if _refinement_accepted(
                refined_solution.energy, solution.energy, settings.simplex_tol
            ):
                argmin, solution, refined = candidate, refined_solution, True
            else:
                logger.warning(
                    "Multiplier refinement rejected: j=%.12g is above the simplex "
                    "minimum %.12g",
                    refined_solution.energy,
                    solution.energy,
                )

    margin = domain.boundary_distance(argmin)
    if margin < BOUNDARY_MARGIN * domain.delta:
        raise BoundaryMinimum(
            f"Reduced energy is minimized at distance {margin:.3e} from the boundary "
            f"of D_delta (margin {BOUNDARY_MARGIN * domain.delta:.3e}); "
            "no interior critical point"
        )
    landscape = ReducedLandscape(
        eps,
        domain,
        evaluations.entries(),
        argmin,
        solution.energy,
        at_wells.energy,
        unprojected_residual(problem, solution),
        refined,
        solution,
    )
    logger.info(
        "Reduced minimization completed: j=%.12g (j(A)=%.12g), distances %s, "
        "unprojected residual %.3e",
        landscape.energy,
        landscape.energy_at_wells,
        landscape.distances.tolist(),
        landscape.unprojected_residual,
    )
    return landscape


def comparison_points(eps: float, domain: PeakDomain, eta: float = 0.5) -> np.ndarray:
    """The configuration a_j + eps^eta e_1, projected into D_delta."""
    shift = np.zeros_like(domain.centers)
    shift[:, 0] = eps**eta
    return domain.project(domain.centers + shift)


@dataclass(frozen=True, eq=False)
class MultipeakReport:  # pylint: disable=too-many-instance-attributes
    """Pass/fail of the three multi-peak clauses with the values behind them."""

    eps: float
    maxima: np.ndarray
    maxima_values: np.ndarray
    maxima_distances: np.ndarray
    outside_sup: float
    threshold: float
    energy_ratio: float
    c_energy: float
    clause_i: bool
    clause_ii: bool
    clause_iii: bool

    @property
    def passed(self) -> bool:
        """All three clauses hold."""
        return self.clause_i and self.clause_ii and self.clause_iii

    def to_dict(self) -> Dict:
        """JSON-ready report."""
        return dict(
            eps=self.eps,
            maxima=self.maxima.tolist(),
            maxima_distances=self.maxima_distances.tolist(),
            clause_i=dict(passed=self.clause_i, count=len(self.maxima)),
            clause_ii=dict(
                passed=self.clause_ii,
                outside_sup=self.outside_sup,
                threshold=self.threshold,
            ),
            clause_iii=dict(
                passed=self.clause_iii,
                energy_over_eps3=self.energy_ratio,
                c_energy=self.c_energy,
            ),
        )


def default_energy_constant(limit: LimitSystemSolution) -> float:
    """Ten times the largest single-peak eps^-3 int(eps^2 a |grad w|^2 + w^2)."""
    a = limit.params.a
    return 10.0 * max(a * g + m for g, m in zip(limit.grad_norms, limit.l2_norms))


def lattice_energy_norm(u: Field3D, eps: float, a: float) -> float:
    """h^3 sum (eps^2 a |D u|^2 + u^2), forward differences over the whole lattice."""
    h = u.grid.spacing
    differences = (np.diff(u.values, axis=axis) for axis in range(3))
    gradient_sq = sum(math.fsum(np.ravel(d**2)) for d in differences) / h**2
    return h**3 * (eps**2 * a * gradient_sq + math.fsum(np.ravel(u.values**2)))


# pylint: disable=too-many-arguments,too-many-locals
def multipeak_diagnostics(
    u: Field3D,
    eps: float,
    wells: Sequence[Sequence[float]],
    c_energy: float,
    a: float = 1.0,
    radius_factor: float = 10.0,
    tau: float = 0.01,
    max_distance: float = 0.05,
) -> MultipeakReport:
    """Check k maxima near the wells, smallness away from them and the energy bound."""
    wells = np.atleast_2d(np.array(wells, dtype=float))
    values = u.values
    threshold = tau * float(np.max(values))
    neighbourhood = ndimage.maximum_filter(
        values, size=3, mode="constant", cval=-np.inf
    )
    is_max = (neighbourhood == values) & (values > threshold)
    index = np.argwhere(is_max)
    if len(index):
        maxima = u.grid.points[np.ravel_multi_index(index.T, values.shape)]
    else:
        maxima = np.zeros((0, 3))
    maxima_values = values[is_max]
    if len(maxima):
        gaps = np.linalg.norm(maxima[:, None, :] - wells[None, :, :], axis=-1)
        nearest = np.argmin(gaps, axis=1)
        distances = gaps[np.arange(len(maxima)), nearest]
        one_per_well = sorted(nearest.tolist()) == list(range(len(wells)))
    else:
        distances, one_per_well = np.zeros(0), False
    clause_i = (
        len(maxima) == len(wells)
        and one_per_well
        and bool(np.all(distances <= max_distance))
    )

    centers = maxima if clause_i else wells
    offsets = u.grid.points[:, None, :] - centers[None, :, :]
    far = np.all(np.linalg.norm(offsets, axis=-1) >= radius_factor * eps, axis=1)
    outside_sup = float(np.max(np.abs(np.ravel(values)[far]))) if np.any(far) else 0.0
    clause_ii = outside_sup <= threshold

    energy_ratio = lattice_energy_norm(u, eps, a) / eps**3
    clause_iii = energy_ratio <= c_energy
    report = MultipeakReport(
        eps,
        maxima,
        maxima_values,
        distances,
        outside_sup,
        threshold,
        energy_ratio,
        c_energy,
        clause_i,
        clause_ii,
        clause_iii,
    )
    logger.info(
        "Multi-peak diagnostics: %d maxima, clauses (i) %s (ii) %s (iii) %s",
        len(maxima),
        clause_i,
        clause_ii,
        clause_iii,
    )
    return report


@dataclass(frozen=True, eq=False)
class CriticalPointReport:
    """Peak positions extrapolated to eps -> 0 and |grad V| there."""

    eps_list: Tuple[float, ...]
    limit_points: np.ndarray
    gradient_norms: np.ndarray
    critical_points: np.ndarray
    tolerance: float = field(default=1e-2)

    @property
    def passed(self) -> bool:
        """Every extrapolated peak is a critical point of V within tolerance."""
        return bool(np.all(self.gradient_norms <= self.tolerance))


def critical_point_check(
    landscapes: Sequence[ReducedLandscape],
    model: PotentialModel,
    tolerance: float = 1e-2,
) -> CriticalPointReport:
    """Extrapolate the argmins linearly in eps and evaluate |grad V| at the limits."""
    if len({landscape.eps for landscape in landscapes}) < 2:
        raise ParameterError(
            "Extrapolation needs landscapes at two or more distinct eps values"
        )
    eps = np.array([landscape.eps for landscape in landscapes])
    peaks = np.stack([np.ravel(landscape.argmin) for landscape in landscapes])
    limit = np.polynomial.polynomial.polyfit(eps, peaks, 1)[0]
    limit = np.reshape(limit, landscapes[0].argmin.shape)
    norms = np.linalg.norm(model.gradients(limit), axis=1)
    logger.info(
        "Critical point check: |grad V| at extrapolated peaks %s", norms.tolist()
    )
    return CriticalPointReport(
        tuple(eps.tolist()), limit, norms, model.critical_points(), tolerance
    )
