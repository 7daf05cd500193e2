"""Radial ground states by shooting, and radial profiles with exponential tails.

A ground state solves -c(u'' + 2u'/r) + lambda*u = u^p on (0, inf) with
u'(0) = 0, u > 0 and u -> 0. Shooting profiles are built with c = 1; the
rescaled profiles used by the limit system carry their own diffusion c.
"""
from dataclasses import dataclass
import functools
import logging
import math
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, interpolate

from kpeaks.errors import (
    MaxIterations,
    NoSignChange,
    ParameterError,
    ResidualCheckFailed,
)


logger = logging.getLogger(__name__)


SERIES_START = 1e-6
GRID_RATIO = 1.02
FIRST_SPACING = 1e-3
MAX_SPACING = 0.02
DECAY_LENGTHS = 30.0
MATCH_DECAY = 1e-8
RELIABILITY = 1e-7
TAIL_RATE_TOLERANCE = 0.02
MAX_DOUBLINGS = 60
MAX_BISECTIONS = 200
PROFILE_RTOL = 1e-13
STENCIL_WIDTH = 9
CELL_GAUSS_POINTS = 6

ArrayLike = Union[float, np.ndarray]


def positive_power(u: ArrayLike, p: float) -> np.ndarray:
    """Return u_+^p elementwise."""
    return np.maximum(u, 0.0) ** p


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii from 0 to r_max, geometric near the origin."""

    nodes: np.ndarray
    grading: float
    r_max: float

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or nodes[0] != 0.0:
            raise ValueError("Radial grid nodes must be one-dimensional and start at 0")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("Radial grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    # pylint: disable=too-many-arguments
    @classmethod
    def geometric(
        cls,
        lambda_min: float,
        ratio: float = GRID_RATIO,
        first_spacing: float = FIRST_SPACING,
        max_spacing: float = MAX_SPACING,
        density: int = 1,
    ) -> "RadialGrid":
        """Build a graded grid spanning DECAY_LENGTHS slowest decay lengths."""
        r_max = DECAY_LENGTHS / math.sqrt(lambda_min)
        spacing = first_spacing / density
        cap = max_spacing / density
        step_ratio = ratio ** (1.0 / density)
        nodes = [0.0]
        while nodes[-1] + spacing < r_max:
            nodes.append(nodes[-1] + spacing)
            spacing = min(spacing * step_ratio, cap)
        if r_max - nodes[-1] < 0.5 * spacing:
            nodes[-1] = r_max
        else:
            nodes.append(r_max)
        return cls(np.array(nodes), ratio, r_max)

    def refined(self) -> "RadialGrid":
        """Return the grid with every cell split at its midpoint."""
        mids = 0.5 * (self.nodes[1:] + self.nodes[:-1])
        nodes = np.empty(2 * self.nodes.size - 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mids
        return RadialGrid(nodes, math.sqrt(self.grading), self.r_max)

    def scaled(self, factor: float) -> "RadialGrid":
        """Stretch all radii by a positive factor."""
        return RadialGrid(self.nodes * factor, self.grading, self.r_max * factor)

    def covers(self, lam: float, diffusion: float = 1.0) -> bool:
        """Check r_max against the decay length of a tail.

        The tail decays at rate sqrt(lam / diffusion).
        """
        length = DECAY_LENGTHS * math.sqrt(diffusion / lam)
        return self.r_max >= length * (1.0 - 1e-12)

    def __len__(self):
        return self.nodes.size


@dataclass(frozen=True)
class TailModel:
    """Far field u(r) = amplitude * exp(-rate * r) / r for r > r_match."""

    amplitude: float
    rate: float
    r_match: float

    def evaluate(self, r: np.ndarray, derivative: int = 0) -> np.ndarray:
        """Evaluate the tail or one of its first two derivatives."""
        r = np.asarray(r, dtype=float)
        decay = self.amplitude * np.exp(-self.rate * r)
        if derivative == 0:
            return decay / r
        if derivative == 1:
            return -decay * (self.rate * r + 1.0) / r**2
        if derivative == 2:
            return decay * (self.rate**2 * r**2 + 2.0 * self.rate * r + 2.0) / r**3
        raise ValueError(
            f"Tail derivatives are available up to order 2, not {derivative}"
        )

    def rescaled(self, factor: float) -> "TailModel":
        """Tail of r -> u(r / factor)."""
        return TailModel(
            self.amplitude * factor, self.rate / factor, self.r_match * factor
        )


@dataclass(frozen=True, eq=False)
class RadialProfile:  # pylint: disable=too-many-instance-attributes
    """A sampled radial function with an optional exponential far-field tail."""

    grid: RadialGrid
    values: np.ndarray
    derivs: np.ndarray
    lam: float
    p: float
    curvature: Optional[np.ndarray] = None
    tail: Optional[TailModel] = None
    diffusion: float = 1.0

    def __post_init__(self):
        for name in ("values", "derivs", "curvature"):
            array = getattr(self, name)
            if array is None:
                continue
            array = np.array(array, dtype=float)
            if array.shape != self.grid.nodes.shape:
                raise ValueError(f"Profile {name} do not match the grid")
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @classmethod
    def from_function(  # pylint: disable=too-many-arguments
        cls,
        grid: RadialGrid,
        func: Callable[[np.ndarray], np.ndarray],
        first: Callable[[np.ndarray], np.ndarray],
        second: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        lam: float = 1.0,
        p: float = 3.0,
    ) -> "RadialProfile":
        """Sample an analytic radial function; it is zero-extended beyond the grid."""
        nodes = grid.nodes
        curvature = None if second is None else second(nodes)
        return cls(grid, func(nodes), first(nodes), lam, p, curvature=curvature)

    @property
    def central_value(self) -> float:
        """Return u(0)."""
        return float(self.values[0])

    @property
    def r_match(self) -> float:
        """Return the radius beyond which the tail model is used."""
        return self.tail.r_match if self.tail is not None else self.grid.r_max

    @functools.cached_property
    def match_index(self) -> int:
        """Index of the last grid node handled by interpolation."""
        edge = self.r_match * (1.0 + 1e-14)
        return int(np.searchsorted(self.grid.nodes, edge, side="right")) - 1

    @functools.cached_property
    def _interpolant(self):
        stop = self.match_index + 1
        nodes = self.grid.nodes[:stop]
        if self.curvature is None:
            return interpolate.CubicHermiteSpline(
                nodes, self.values[:stop], self.derivs[:stop]
            )
        data = np.column_stack(
            [self.values[:stop], self.derivs[:stop], self.curvature[:stop]]
        )
        return interpolate.BPoly.from_derivatives(nodes, data)

    def evaluate(self, r: ArrayLike, derivative: int = 0) -> ArrayLike:
        """Evaluate u, u' or u'' at radii r >= 0."""
        radii = np.asarray(r, dtype=float)
        flat = np.atleast_1d(radii).ravel()
        out = np.zeros_like(flat)
        inside = flat <= self.r_match
        if np.any(inside):
            out[inside] = self._interpolant(flat[inside], nu=derivative)
        outside = ~inside
        if self.tail is not None and np.any(outside):
            out[outside] = self.tail.evaluate(flat[outside], derivative)
        if radii.ndim == 0:
            return float(out[0])
        return out.reshape(radii.shape)

    def laplacian(self, r: ArrayLike) -> ArrayLike:
        """Evaluate u'' + 2u'/r, with the limit 3u''(0) at the origin."""
        radii = np.asarray(r, dtype=float)
        second = np.asarray(self.evaluate(radii, 2), dtype=float)
        first = np.asarray(self.evaluate(radii, 1), dtype=float)
        safe = np.where(radii > 0.0, radii, 1.0)
        result = np.where(radii > 0.0, second + 2.0 * first / safe, 3.0 * second)
        if result.ndim == 0:
            return float(result)
        return result

    def rescaled(self, factor: float) -> "RadialProfile":
        """Return the profile of r -> u(r / factor).

        It solves the same equation with diffusion * factor^2.
        """
        curvature = None if self.curvature is None else self.curvature / factor**2
        tail = None if self.tail is None else self.tail.rescaled(factor)
        return RadialProfile(
            self.grid.scaled(factor),
            self.values,
            self.derivs / factor,
            self.lam,
            self.p,
            curvature=curvature,
            tail=tail,
            diffusion=self.diffusion * factor**2,
        )

    def scaled(self, factor: float) -> "RadialProfile":
        """Return factor * u."""
        curvature = None if self.curvature is None else self.curvature * factor
        tail = None
        if self.tail is not None:
            tail = TailModel(
                self.tail.amplitude * factor, self.tail.rate, self.tail.r_match
            )
        return RadialProfile(
            self.grid,
            self.values * factor,
            self.derivs * factor,
            self.lam,
            self.p,
            curvature=curvature,
            tail=tail,
            diffusion=self.diffusion,
        )

    @functools.cached_property
    def cell_rule(self) -> Tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre points and weights on [0, r_match]."""
        nodes = self.grid.nodes[: self.match_index + 1]
        left, right = nodes[:-1], nodes[1:]
        abscissae, weights = leggauss(CELL_GAUSS_POINTS)
        half = 0.5 * (right - left)
        points = (0.5 * (left + right))[:, None] + half[:, None] * abscissae[None, :]
        return points.ravel(), (half[:, None] * weights[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class ShootingResult:
    """Outcome of solve_ground_state."""

    profile: RadialProfile
    u0: float
    iterations: int
    residual_sup: float


def _crosses_zero(_r, y):
    return y[0]


_crosses_zero.terminal = True  # type: ignore[attr-defined]
_crosses_zero.direction = -1  # type: ignore[attr-defined]


def _turns_up(_r, y):
    return y[1]


_turns_up.terminal = True  # type: ignore[attr-defined]
_turns_up.direction = 1  # type: ignore[attr-defined]


# pylint: disable=too-many-arguments
def _shoot(
    u0: float,
    lam: float,
    p: float,
    r_end: float,
    rtol: float,
    t_eval: Optional[np.ndarray] = None,
    max_step: float = np.inf,
):
    """Integrate from the series start; return (overshoot, solution)."""

    def rhs(r, y):
        u, v = y
        return [v, -2.0 * v / r + lam * u - abs(u) ** (p - 1.0) * u]

    r0 = SERIES_START
    a2 = (lam * u0 - u0**p) / 6.0
    y0 = [u0 + a2 * r0**2, 2.0 * a2 * r0]
    sol = integrate.solve_ivp(
        rhs,
        (r0, r_end),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=1e-300,
        t_eval=t_eval,
        max_step=max_step,
        events=(_crosses_zero, _turns_up),
    )
    overshoot = sol.t_events[0].size > 0
    return overshoot, sol


def _trajectory_on(nodes: np.ndarray, sol) -> Tuple[np.ndarray, np.ndarray]:
    values = np.full(nodes.size - 1, np.nan)
    derivs = np.full(nodes.size - 1, np.nan)
    count = sol.t.size
    values[:count] = sol.y[0]
    derivs[:count] = sol.y[1]
    return values, derivs


def shooting_bracket(
    lam: float, p: float, r_end: float, rtol: float
) -> Tuple[float, float]:
    """Find [u_lo, u_hi] with u_lo an undershoot and u_hi an overshoot."""
    u_lo = lam ** (1.0 / (p - 1.0))
    u_hi = 2.0 * u_lo
    for _ in range(MAX_DOUBLINGS):
        overshoot, _ = _shoot(u_hi, lam, p, r_end, rtol)
        if overshoot:
            return u_lo, u_hi
        u_lo = u_hi
        u_hi *= 2.0
    raise NoSignChange(
        f"No overshoot found for lambda={lam}, p={p} "
        f"after {MAX_DOUBLINGS} doublings"
    )


@functools.lru_cache(maxsize=64)
def solve_ground_state(
    lam: float, p: float, tol: float = 1e-8, density: int = 1
) -> ShootingResult:
    """Solve -u'' - (2/r)u' + lam*u = u^p for the positive radial ground state."""
    if not lam > 0.0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not 1.0 < p < 5.0:
        raise ParameterError(f"p must lie in (1, 5), got {p}")
    if not tol > 0.0:
        raise ParameterError(f"tol must be positive, got {tol}")
    grid = RadialGrid.geometric(lam, density=density)
    rtol = min(tol / 10.0, 1e-12)
    u_lo, u_hi = shooting_bracket(lam, p, grid.r_max, rtol)
    logger.debug("Shooting bracket for lambda=%s, p=%s: [%r, %r]", lam, p, u_lo, u_hi)

    iterations = 0
    while u_hi - u_lo > 4.0 * np.spacing(u_hi):
        if iterations >= MAX_BISECTIONS:
            raise MaxIterations(
                f"Bisection stalled after {iterations} steps "
                f"at width {u_hi - u_lo!r}"
            )
        mid = 0.5 * (u_lo + u_hi)
        if not u_lo < mid < u_hi:
            break
        overshoot, _ = _shoot(mid, lam, p, grid.r_max, rtol)
        if overshoot:
            u_hi = mid
        else:
            u_lo = mid
        iterations += 1

    profile = _profile_from_bracket(grid, u_lo, u_hi, lam, p, rtol)
    residual_sup = ode_residual(profile)
    logger.debug(
        "Ground state lambda=%s, p=%s: u0=%r, %d bisections, "
        "residual %.3e, r_match %.3f",
        lam,
        p,
        u_lo,
        iterations,
        residual_sup,
        profile.r_match,
    )
    if residual_sup > tol:
        raise ResidualCheckFailed(
            f"Ground state residual {residual_sup:.3e} exceeds tol {tol:.3e}"
        )
    return ShootingResult(profile, u_lo, iterations, residual_sup)


# pylint: disable=too-many-arguments,too-many-locals
def _profile_from_bracket(
    grid: RadialGrid, u_lo: float, u_hi: float, lam: float, p: float, rtol: float
) -> RadialProfile:
    nodes = grid.nodes
    # At most one cell per step: u' feeds the verification stencil.
    rtol = min(rtol, PROFILE_RTOL)
    max_step = float(np.max(np.diff(nodes)))
    final = functools.partial(
        _shoot, lam=lam, p=p, r_end=grid.r_max, rtol=rtol, t_eval=nodes[1:]
    )
    _, sol_lo = final(u_lo, max_step=max_step)
    _, sol_hi = final(u_hi, max_step=max_step)
    lo_values, lo_derivs = _trajectory_on(nodes, sol_lo)
    hi_values, _ = _trajectory_on(nodes, sol_hi)
    values = np.concatenate([[u_lo], lo_values])
    derivs = np.concatenate([[0.0], lo_derivs])

    with np.errstate(invalid="ignore"):
        spread = np.abs(np.concatenate([[u_hi], hi_values]) - values)
        agree = spread <= RELIABILITY * np.abs(values)
        agree &= values > 0.0
    unreliable = np.flatnonzero(~agree)
    last_reliable = (unreliable[0] - 1) if unreliable.size else nodes.size - 1
    with np.errstate(invalid="ignore"):
        small = values < MATCH_DECAY * u_lo
        linear = small | (positive_power(values, p - 1.0) / lam < MATCH_DECAY)
    linear_nodes = np.flatnonzero(linear)
    match = int(linear_nodes[0]) if linear_nodes.size else nodes.size - 1
    match = min(match, int(last_reliable))
    if match < 8:
        raise ResidualCheckFailed(
            f"Shooting trajectory unreliable beyond r={nodes[match]:.3e}"
        )

    r_m, u_m, du_m = nodes[match], values[match], derivs[match]
    rate = -du_m / u_m - 1.0 / r_m
    if abs(rate - math.sqrt(lam)) > TAIL_RATE_TOLERANCE * math.sqrt(lam):
        raise ResidualCheckFailed(
            f"Fitted tail rate {rate:.6f} is not within 2% "
            f"of sqrt(lambda)={math.sqrt(lam):.6f}"
        )
    tail = TailModel(u_m * r_m * math.exp(rate * r_m), rate, r_m)

    far = nodes[match + 1 :]
    values[match + 1 :] = tail.evaluate(far)
    derivs[match + 1 :] = tail.evaluate(far, 1)
    curvature = np.empty_like(values)
    curvature[0] = (lam * u_lo - u_lo**p) / 3.0
    near = slice(1, match + 1)
    source = lam * values[near] - positive_power(values[near], p)
    curvature[near] = source - 2.0 * derivs[near] / nodes[near]
    curvature[match + 1 :] = tail.evaluate(far, 2)

    if np.any(np.diff(values) >= 0.0) or np.any(values <= 0.0):
        raise ResidualCheckFailed(
            "Ground state is not positive and strictly decreasing"
        )
    return RadialProfile(grid, values, derivs, lam, p, curvature=curvature, tail=tail)


def _stencil_weights(nodes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nine-point first derivative weights at nodes 1..N-2.

    Window indices below zero refer to the mirror image -r of node |index|.
    """
    half = STENCIL_WIDTH // 2
    extended = np.concatenate([-nodes[half:0:-1], nodes])
    targets = np.arange(1, nodes.size - 1) + half
    starts = np.clip(targets - half, 0, extended.size - STENCIL_WIDTH)
    windows = starts[:, None] + np.arange(STENCIL_WIDTH)[None, :]
    offsets = extended[windows] - extended[targets][:, None]
    scale = np.max(np.abs(offsets), axis=1)
    scaled = offsets / scale[:, None]
    powers = np.arange(STENCIL_WIDTH)
    factorials = np.array([math.factorial(k) for k in powers], dtype=float)
    vandermonde = scaled[:, None, :] ** powers[None, :, None]
    vandermonde /= factorials[None, :, None]
    rhs = np.zeros((targets.size, STENCIL_WIDTH))
    rhs[:, 1] = 1.0
    weights = np.linalg.solve(vandermonde, rhs[:, :, None])[:, :, 0]
    return windows - half, weights / scale[:, None]


# pylint: disable=too-many-arguments
def stencil_residual(
    nodes: np.ndarray,
    values: np.ndarray,
    derivs: np.ndarray,
    diffusion: float,
    lam: float,
    p: float,
) -> np.ndarray:
    """Pointwise |-c(u'' + 2u'/r) + lam*u - u^p| at nodes 1..N-2.

    u'' is the nine-point difference of the sampled u', continued oddly to r < 0.
    """
    windows, first = _stencil_weights(nodes)
    sign = np.where(windows < 0, -1.0, 1.0)
    d2 = np.sum(first * sign * derivs[np.abs(windows)], axis=1)
    inner = slice(1, nodes.size - 1)
    r = nodes[inner]
    u = values[inner]
    laplacian = d2 + 2.0 * derivs[inner] / r
    return np.abs(-diffusion * laplacian + lam * u - positive_power(u, p))


def ode_residual(profile: RadialProfile) -> float:
    """Sup over interior nodes of the finite-difference ODE residual."""
    residual = stencil_residual(
        profile.grid.nodes,
        profile.values,
        profile.derivs,
        profile.diffusion,
        profile.lam,
        profile.p,
    )
    return float(np.max(residual)) if residual.size else 0.0


def grad_norm_sq(profile: RadialProfile) -> float:
    """Return the integral of |grad u|^2 over R^3."""
    points, weights = profile.cell_rule
    derivs = profile.evaluate(points, 1)
    body = math.fsum(weights * derivs**2 * points**2)
    tail = 0.0
    if profile.tail is not None:
        tail_model = profile.tail
        amp, rate, r_m = tail_model.amplitude, tail_model.rate, tail_model.r_match
        tail = amp**2 * math.exp(-2.0 * rate * r_m) * (0.5 * rate + 1.0 / r_m)
    return 4.0 * math.pi * (body + tail)


def lp_norm_pow(profile: RadialProfile, q: float) -> float:
    """Return the integral of u^q over R^3."""
    if q < 1.0:
        raise ValueError(f"q must be at least 1, got {q}")
    points, weights = profile.cell_rule
    values = np.abs(profile.evaluate(points))
    body = math.fsum(weights * values**q * points**2)
    return 4.0 * math.pi * (body + _tail_power_integral(profile.tail, q))


def _tail_power_integral(tail: Optional[TailModel], q: float) -> float:
    if tail is None:
        return 0.0
    amp, rate, r_m = tail.amplitude, tail.rate, tail.r_match
    if q == 2.0:
        return amp**2 * math.exp(-2.0 * rate * r_m) / (2.0 * rate)
    if q == 1.0:
        return amp * math.exp(-rate * r_m) * (rate * r_m + 1.0) / rate**2
    def integrand(r):
        return (amp * math.exp(-rate * r)) ** q * r ** (2.0 - q)

    value, _ = integrate.quad(integrand, r_m, np.inf, epsabs=0.0, epsrel=1e-12)
    return value
