"""Cartesian box backend: lattice fields and the discrete Kirchhoff functional.

Unknowns are the interior lattice values; boundary values are zero.
"""
from dataclasses import dataclass
import functools
import json
import logging
import math
from typing import Dict, Sequence

import numpy as np
from scipy import fft, sparse
from scipy.sparse import linalg as splinalg

from kpeaks.errors import NoConvergence, ParameterError, UnresolvedPeak
from kpeaks.kirchhoff_limit import ProblemParams
from kpeaks.radial_core import positive_power
from kpeaks.fields3d.potential import PotentialModel


logger = logging.getLogger(__name__)


GRAM_TOL = 1e-13
GRAM_MAXITER = 500


@dataclass(frozen=True)
class BoxGrid:
    """The n^3 lattice on the cube of half-width L around a center."""

    half_width: float
    n: int
    center: Sequence[float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        if not self.half_width > 0.0:
            raise ParameterError(
                f"Box half-width must be positive, got {self.half_width}"
            )
        if self.n < 5:
            raise ParameterError(
                f"Lattice needs at least 5 nodes per axis, got {self.n}"
            )

    @property
    def spacing(self) -> float:
        """Lattice spacing h = 2L / (n - 1)."""
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def axes(self):
        """Coordinates along x, y and z."""
        line = np.linspace(-self.half_width, self.half_width, self.n)
        return [c + line for c in self.center]

    @property
    def interior_shape(self):
        """Shape of the block of unknowns."""
        return (self.n - 2,) * 3

    @functools.cached_property
    def points(self) -> np.ndarray:
        """All lattice points as an (n^3, 3) array in 'ij' order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @functools.cached_property
    def interior_points(self) -> np.ndarray:
        """Interior lattice points in the order of the unknowns."""
        mesh = np.meshgrid(*[axis[1:-1] for axis in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, point: Sequence[float], margin: float = 0.0) -> bool:
        """Check that a point lies in the box at least margin away from its faces."""
        offset = np.abs(np.asarray(point, dtype=float) - np.array(self.center))
        return bool(np.all(offset <= self.half_width - margin))


@dataclass(frozen=True, eq=False)
class Field3D:
    """Values on the n^3 lattice of a BoxGrid."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n,) * 3:
            raise ValueError(
                f"Field values of shape {values.shape} "
                f"do not match an n={self.grid.n} lattice"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_interior(cls, grid: BoxGrid, interior: np.ndarray) -> "Field3D":
        """Zero-extend interior unknowns to the whole lattice."""
        values = np.zeros((grid.n,) * 3)
        values[1:-1, 1:-1, 1:-1] = np.reshape(interior, grid.interior_shape)
        return cls(grid, values)

    def interior(self) -> np.ndarray:
        """Interior values as a flat vector of unknowns."""
        return self.values[1:-1, 1:-1, 1:-1].ravel().copy()

    def boundary_ratio(self) -> float:
        """Largest boundary-face magnitude relative to the overall maximum."""
        peak = float(np.max(np.abs(self.values)))
        if peak == 0.0:
            return 0.0
        faces = np.ones_like(self.values, dtype=bool)
        faces[1:-1, 1:-1, 1:-1] = False
        return float(np.max(np.abs(self.values[faces]))) / peak

    def __add__(self, other: "Field3D") -> "Field3D":
        if other.grid != self.grid:
            raise ValueError("Fields live on different lattices")
        return Field3D(self.grid, self.values + other.values)

    def header(self) -> Dict:
        """JSON header describing the binary layout."""
        return dict(
            L=self.grid.half_width,
            n=self.grid.n,
            center=list(self.grid.center),
            ordering="x-fastest",
            dtype="float64",
            endianness="little",
        )

    def to_bytes(self) -> bytes:
        """Flat float64 little-endian values, x varying fastest."""
        return np.ravel(self.values, order="F").astype("<f8").tobytes()

    def __repr__(self):
        return f"Field3D({json.dumps(self.header())})"


def stiffness_1d(size: int, spacing: float) -> sparse.csr_matrix:
    """Dirichlet second difference matrix (2, -1) / h^2 on interior nodes."""
    diagonals = [np.full(size - 1, -1.0), np.full(size, 2.0), np.full(size - 1, -1.0)]
    return sparse.diags(diagonals, [-1, 0, 1], format="csr") / spacing**2


def stiffness_3d(size: int, spacing: float) -> sparse.csr_matrix:
    """Seven-point -Laplacian with zero Dirichlet data, as a Kronecker sum."""
    one = stiffness_1d(size, spacing)
    eye = sparse.identity(size, format="csr")
    terms = [
        sparse.kron(sparse.kron(one, eye), eye),
        sparse.kron(sparse.kron(eye, one), eye),
        sparse.kron(sparse.kron(eye, eye), one),
    ]
    return (terms[0] + terms[1] + terms[2]).tocsr()


def check_resolution(
    grid: BoxGrid, eps: float, sqrt_c: float, nodes_per_peak: float
) -> None:
    """Raise UnresolvedPeak unless h <= eps * sqrt(c) / nodes_per_peak."""
    width = eps * sqrt_c
    if grid.spacing > width / nodes_per_peak * (1.0 + 1e-12):
        needed = math.ceil(2 * grid.half_width * nodes_per_peak / width) + 1
        raise UnresolvedPeak(
            f"Lattice spacing {grid.spacing:.4g} does not resolve "
            f"the peak width {width:.4g} with {nodes_per_peak} nodes "
            f"(need n >= {needed})"
        )


class LatticeKirchhoff:
    """Discrete I_eps, its derivatives and the eps-inner product.

    All of them act on the interior unknowns.
    """

    def __init__(
        self, grid: BoxGrid, eps: float, params: ProblemParams, model: PotentialModel
    ):
        if not eps > 0.0:
            raise ParameterError(f"eps must be positive, got {eps}")
        self.grid = grid
        self.eps = eps
        self.params = params
        self.model = model
        self.h3 = grid.spacing**3
        self.stiffness = stiffness_3d(grid.n - 2, grid.spacing)
        self.potential = model.values(grid.interior_points)
        stiffness = eps**2 * params.a * self.stiffness
        self.gram = self.h3 * (stiffness + sparse.diags(self.potential))
        extremes = float(self.potential.min()) + float(self.potential.max())
        self._reference_potential = 0.5 * extremes

    @property
    def size(self) -> int:
        """Number of unknowns."""
        return self.stiffness.shape[0]

    def grad_sq(self, u: np.ndarray) -> float:
        """Discrete integral of |grad u|^2."""
        return self.h3 * math.fsum(u * (self.stiffness @ u))

    def energy(self, u: np.ndarray) -> float:
        """Discrete I_eps(u)."""
        a, b, p = self.params.a, self.params.b, self.params.p
        grad_sq = self.grad_sq(u)
        potential_term = self.h3 * math.fsum(self.potential * u * u)
        quadratic = 0.5 * (self.eps**2 * a * grad_sq + potential_term)
        nonlocal_term = 0.25 * b * self.eps * grad_sq**2
        nonlinear = self.h3 * math.fsum(positive_power(u, p + 1.0)) / (p + 1.0)
        return quadratic + nonlocal_term - nonlinear

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Derivative of the discrete energy with respect to the unknowns."""
        a, b, p = self.params.a, self.params.b, self.params.p
        coefficient = self.eps**2 * a + self.eps * b * self.grad_sq(u)
        local = self.potential * u - positive_power(u, p)
        return self.h3 * (coefficient * (self.stiffness @ u) + local)

    def hessian(self, u: np.ndarray) -> splinalg.LinearOperator:
        """Second derivative at u, including the rank-one nonlocal term."""
        a, b, p = self.params.a, self.params.b, self.params.p
        coefficient = self.eps**2 * a + self.eps * b * self.grad_sq(u)
        stiff_u = self.stiffness @ u
        local = self.potential - p * positive_power(u, p - 1.0)
        rank_one = 2.0 * b * self.eps * self.h3**2

        def matvec(v):
            v = np.ravel(v)
            out = self.h3 * (coefficient * (self.stiffness @ v) + local * v)
            if rank_one:
                out += rank_one * stiff_u * float(stiff_u @ v)
            return out

        shape = (self.size, self.size)
        return splinalg.LinearOperator(shape, matvec=matvec, dtype=float)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete <u, v>_eps."""
        return math.fsum(u * (self.gram @ v))

    def norm(self, u: np.ndarray) -> float:
        """Discrete ||u||_eps."""
        return math.sqrt(max(self.inner(u, u), 0.0))

    @functools.cached_property
    def _eigenvalues(self) -> np.ndarray:
        m = self.grid.n - 2
        h = self.grid.spacing
        one = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, m + 1) / (m + 1))) / h**2
        total = one[:, None, None] + one[None, :, None] + one[None, None, :]
        stiffness = self.eps**2 * self.params.a * total
        return self.h3 * (stiffness + self._reference_potential)

    def reference_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the inverse Gram matrix with V frozen at a constant.

        The solve is diagonal in sine transforms.
        """
        block = np.reshape(rhs, self.grid.interior_shape)
        spectrum = fft.dstn(block, type=1) / self._eigenvalues
        return fft.idstn(spectrum, type=1).ravel()

    @functools.cached_property
    def gram_preconditioner(self) -> splinalg.LinearOperator:
        """The constant-potential inverse as a LinearOperator."""
        return splinalg.LinearOperator(
            (self.size, self.size), matvec=self.reference_solve, dtype=float
        )

    def gram_solve(self, rhs: np.ndarray, rtol: float = GRAM_TOL) -> np.ndarray:
        """Solve A x = rhs for the Gram matrix A by preconditioned CG."""
        if not np.any(rhs):
            return np.zeros_like(rhs)
        solution, info = splinalg.cg(
            self.gram,
            rhs,
            rtol=rtol,
            atol=0.0,
            maxiter=GRAM_MAXITER,
            M=self.gram_preconditioner,
        )
        if info != 0:
            raise NoConvergence(f"Gram solve did not converge (info={info})")
        return solution

    def riesz(self, functional: np.ndarray) -> np.ndarray:
        """Riesz representative of a dual vector in the eps-inner product."""
        return self.gram_solve(functional)

    def dual_norm(self, functional: np.ndarray) -> float:
        """sup |g(phi)| / ||phi||_eps, via the Riesz representative."""
        return math.sqrt(max(math.fsum(functional * self.riesz(functional)), 0.0))
