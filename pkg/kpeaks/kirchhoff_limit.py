"""The limiting system of the Kirchhoff problem and its single-well counterpart.

Every profile is centered at the origin; translations only happen when an
ansatz is assembled.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from kpeaks.errors import InvariantViolation, ParameterError, SolverError
from kpeaks.radial_core import (
    FIRST_SPACING,
    MAX_SPACING,
    RadialGrid,
    RadialProfile,
    grad_norm_sq,
    lp_norm_pow,
    positive_power,
    solve_ground_state,
)


logger = logging.getLogger(__name__)

# Grid density of the limit profiles; their interpolant is checked between nodes.
PROFILE_DENSITY = 2


@dataclass(frozen=True)
class ProblemParams:
    """Coefficients a, b and the exponent p."""

    a: float
    b: float
    p: float

    def __post_init__(self):
        if not self.a > 0.0:
            raise ParameterError(f"a must be positive, got {self.a}")
        if not self.b >= 0.0:
            raise ParameterError(f"b must be nonnegative, got {self.b}")
        if not 1.0 < self.p < 5.0:
            raise ParameterError(f"p must lie in (1, 5), got {self.p}")


class LocalShape(Enum):
    """Shape of the potential near a well."""

    QUADRATIC = "quadratic"
    HOELDER_CUSP = "hoelder_cusp"
    FLAT_CAP = "flat_cap"


@dataclass(frozen=True)
class WellData:
    """A well center a_i with V(a_i) and the local shape of V around it."""

    center: Tuple[float, float, float]
    value: float
    hoelder_theta: float = 1.0
    local_shape: LocalShape = LocalShape.QUADRATIC
    curvature: float = 1.0
    tilt: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "tilt", tuple(float(x) for x in self.tilt))
        object.__setattr__(self, "local_shape", LocalShape(self.local_shape))
        if len(self.center) != 3 or len(self.tilt) != 3:
            raise ParameterError("Well centers and tilts are points in R^3")
        if not self.value > 0.0:
            raise ParameterError(f"Well value must be positive, got {self.value}")
        if not 0.0 < self.hoelder_theta <= 1.0:
            raise ParameterError(
                f"Hoelder exponent must lie in (0, 1], got {self.hoelder_theta}"
            )
        if self.curvature < 0.0:
            raise ParameterError(
                f"Well curvature must be nonnegative, got {self.curvature}"
            )


def check_distinct(wells: Sequence[WellData]) -> None:
    """Reject empty well lists and coincident centers."""
    if not wells:
        raise ParameterError("At least one well is required")
    centers = np.array([well.center for well in wells])
    for i in range(len(wells)):
        for j in range(i + 1, len(wells)):
            if np.linalg.norm(centers[i] - centers[j]) <= 0.0:
                raise ParameterError(
                    f"Wells {i} and {j} share the center {wells[i].center}"
                )


def solve_scaling(a: float, b_bar: float) -> float:
    """Return the positive root c of c = a + b_bar * sqrt(c)."""
    if not a > 0.0:
        raise ParameterError(f"a must be positive, got {a}")
    if not b_bar >= 0.0:
        raise ParameterError(f"b_bar must be nonnegative, got {b_bar}")
    sqrt_c = 0.5 * (b_bar + math.sqrt(b_bar * b_bar + 4.0 * a))
    return sqrt_c * sqrt_c


@dataclass(frozen=True, eq=False)
class LimitSystemSolution:
    """Profiles w^i solving -c Delta w^i + V(a_i) w^i = (w^i)^p.

    All components share the constant c.
    """

    params: ProblemParams
    wells: Tuple[WellData, ...]
    profiles: Tuple[RadialProfile, ...]
    c: float
    b_bar: float
    w_profiles: Tuple[RadialProfile, ...]
    tol: float
    self_consistent: bool = True

    @property
    def k(self) -> int:
        """Number of wells."""
        return len(self.wells)

    @property
    def sqrt_c(self) -> float:
        """Square root of the shared constant."""
        return math.sqrt(self.c)

    @property
    def grad_norms(self) -> Tuple[float, ...]:
        """Integrals of |grad w^i|^2."""
        return tuple(grad_norm_sq(w) for w in self.w_profiles)

    @property
    def l2_norms(self) -> Tuple[float, ...]:
        """Integrals of (w^i)^2."""
        return tuple(lp_norm_pow(w, 2.0) for w in self.w_profiles)

    def summary(self) -> Dict:
        """JSON-ready description of the solution."""
        residuals = system_residual(self)
        return dict(
            a=self.params.a,
            b=self.params.b,
            p=self.params.p,
            wells=[
                dict(center=list(w.center), value=w.value, shape=w.local_shape.value)
                for w in self.wells
            ],
            b_bar=self.b_bar,
            c=self.c,
            self_consistent=self.self_consistent,
            per_well=[
                dict(
                    lam=q.lam,
                    u0=q.central_value,
                    grad_norm_sq=grad_norm_sq(q),
                    residual=float(res),
                )
                for q, res in zip(self.profiles, residuals)
            ],
        )


def _ground_states(
    wells: Sequence[WellData], p: float, tol: float, threads: int
) -> List[RadialProfile]:
    def solve(index: int) -> RadialProfile:
        try:
            result = solve_ground_state(wells[index].value, p, tol, PROFILE_DENSITY)
            return result.profile
        except SolverError as err:
            raise err.for_well(index) from err

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        return list(executor.map(solve, range(len(wells))))


def build_limit_system(
    params: ProblemParams,
    wells: Sequence[WellData],
    tol: float = 1e-8,
    threads: int = 1,
    b_bar: Optional[float] = None,
) -> LimitSystemSolution:
    """Solve the limit system by the closed-form scaling of the ground states."""
    check_distinct(wells)
    profiles = _ground_states(wells, params.p, tol, threads)
    computed_b_bar = params.b * math.fsum(grad_norm_sq(q) for q in profiles)
    override = b_bar is not None
    used_b_bar = float(b_bar) if override else computed_b_bar
    c = solve_scaling(params.a, used_b_bar)
    sqrt_c = math.sqrt(c)
    w_profiles = tuple(q.rescaled(sqrt_c) for q in profiles)
    if not override:
        closure = params.a + params.b * math.fsum(grad_norm_sq(w) for w in w_profiles)
        if abs(c - closure) > tol * c:
            raise InvariantViolation(
                f"Limit system not self-consistent: c={c!r}, "
                f"a + b*sum|grad w|^2={closure!r}"
            )
    logger.info(
        "Limit system solved: k=%d, b_bar=%r, c=%r", len(wells), used_b_bar, c
    )
    return LimitSystemSolution(
        params,
        tuple(wells),
        tuple(profiles),
        c,
        used_b_bar,
        w_profiles,
        tol,
        self_consistent=not override,
    )


def solve_single_kirchhoff(
    params: ProblemParams, well: WellData, tol: float = 1e-8
) -> Tuple[RadialProfile, float]:
    """Solve -(a + b int|grad U|^2) Delta U + V(a_i) U = U^p on its own."""
    ground = solve_ground_state(well.value, params.p, tol).profile
    c_i = solve_scaling(params.a, params.b * grad_norm_sq(ground))
    return ground.rescaled(math.sqrt(c_i)), c_i


@dataclass(frozen=True, eq=False)
class SingleKirchhoffSolution:
    """Per-well single-equation profiles U^(i), constants c_i and couplings K_i."""

    profiles: Tuple[RadialProfile, ...]
    constants: Tuple[float, ...]
    couplings: Tuple[float, ...] = field(default=())

    @property
    def grad_norms(self) -> Tuple[float, ...]:
        """Integrals of |grad U^(i)|^2."""
        return tuple(grad_norm_sq(u) for u in self.profiles)


def build_single_kirchhoff_family(
    params: ProblemParams, wells: Sequence[WellData], tol: float = 1e-8
) -> SingleKirchhoffSolution:
    """Solve the single Kirchhoff equation for every well and form K_i."""
    check_distinct(wells)
    solved = []
    for index, well in enumerate(wells):
        try:
            solved.append(solve_single_kirchhoff(params, well, tol))
        except SolverError as err:
            raise err.for_well(index) from err
    profiles = tuple(profile for profile, _ in solved)
    norms = [grad_norm_sq(profile) for profile in profiles]
    couplings = tuple(
        math.fsum(norms[:i] + norms[i + 1 :]) for i in range(len(profiles))
    )
    return SingleKirchhoffSolution(profiles, tuple(c for _, c in solved), couplings)


def verification_grid(profile: RadialProfile) -> RadialGrid:
    """A grid unrelated to the profile's own nodes, in the profile's length units."""
    length = math.sqrt(profile.diffusion)
    grid = RadialGrid.geometric(
        profile.lam,
        ratio=1.013,
        first_spacing=0.7 * FIRST_SPACING,
        max_spacing=0.7 * MAX_SPACING,
    )
    return grid.scaled(length)


def system_residual(sol: LimitSystemSolution) -> np.ndarray:
    """Per-component sup residual of the limit system on independent grids."""
    gradients = math.fsum(grad_norm_sq(w) for w in sol.w_profiles)
    c = sol.params.a + sol.params.b * gradients
    if not sol.self_consistent:
        c = sol.c
    residuals = []
    for well, w in zip(sol.wells, sol.w_profiles):
        nodes = verification_grid(w).nodes
        nodes = nodes[nodes <= w.grid.r_max]
        values = np.asarray(w.evaluate(nodes))
        source = well.value * values - positive_power(values, sol.params.p)
        residual = -c * np.asarray(w.laplacian(nodes)) + source
        residuals.append(float(np.max(np.abs(residual))))
    return np.array(residuals)
