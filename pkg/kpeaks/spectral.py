"""Spectra of the linearized limit operators, and Hessian coercivity."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
from typing import Dict, List, Optional, Tuple
import warnings

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg
from tqdm import tqdm

from kpeaks.errors import NoConvergence, ParameterError
from kpeaks.kirchhoff_limit import LimitSystemSolution
from kpeaks.radial_core import positive_power
from kpeaks.fields3d.ansatz import AnsatzState, assemble_ansatz
from kpeaks.fields3d.lattice import BoxGrid, LatticeKirchhoff, check_resolution
from kpeaks.fields3d.potential import PotentialModel


logger = logging.getLogger(__name__)


RADIAL_STEP = 0.005
KERNEL_THRESHOLD = 1e-6
LOBPCG_TOL = 1e-7
LOBPCG_MAXITER = 400
EXTRA_MODES = 4


@dataclass(frozen=True, eq=False)
class RadialOperatorMatrix:
    """The l-mode of L+ acting on v = r phi.

    The grid is uniform with v = 0 at r = 0 and r = R.

    In v the matrix is symmetric for the plain dr product; the rank-one term
    alpha q q^T (l = 0 only) carries the nonlocal part of the linearization.
    """

    ell: int
    well_index: int
    radii: np.ndarray
    spacing: float
    local: sparse.csr_matrix
    rank_one: Optional[Tuple[float, np.ndarray]] = None

    @property
    def size(self) -> int:
        """Number of unknowns."""
        return self.radii.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply the matrix to a vector in the v representation."""
        v = np.ravel(v)
        out = self.local @ v
        if self.rank_one is not None:
            alpha, q = self.rank_one
            out = out + alpha * q * float(q @ v)
        return out

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """Apply the operator to radial values phi(r_j)."""
        return self.matvec(self.radii * phi) / self.radii

    def inner(self, phi: np.ndarray, psi: np.ndarray) -> float:
        """Weighted product h sum r^2 phi psi."""
        return self.spacing * math.fsum(self.radii**2 * phi * psi)

    def as_operator(self) -> splinalg.LinearOperator:
        """The matrix as a symmetric LinearOperator."""
        shape = (self.size, self.size)
        return splinalg.LinearOperator(shape, matvec=self.matvec, dtype=float)

    def inverse(self) -> splinalg.LinearOperator:
        """Sparse LU of the local part.

        The rank-one term is folded in by Sherman-Morrison.
        """
        lu = splinalg.splu(self.local.tocsc())
        shape = (self.size, self.size)
        if self.rank_one is None:

            def solve_local(x):
                return lu.solve(np.ravel(x))

            return splinalg.LinearOperator(shape, matvec=solve_local, dtype=float)
        alpha, q = self.rank_one
        solved_q = lu.solve(q)
        denominator = 1.0 + alpha * float(q @ solved_q)

        def solve(x):
            y = lu.solve(np.ravel(x))
            return y - alpha * solved_q * float(q @ y) / denominator

        return splinalg.LinearOperator(shape, matvec=solve, dtype=float)


def _fourth_order_second_difference(
    size: int, spacing: float, ell: int
) -> sparse.csr_matrix:
    """Five-point v''.

    The ghost at r = -h is v(-h) = (-1)^(l+1) v(h); past r = R, v is
    reflected oddly.
    """
    offsets = [-2, -1, 0, 1, 2]
    coefficients = [-1.0, 16.0, -30.0, 16.0, -1.0]
    diagonals = [np.full(size - abs(o), c) for o, c in zip(offsets, coefficients)]
    diagonals[2][0] -= (-1.0) ** (ell + 1)
    diagonals[2][-1] += 1.0
    return sparse.diags(diagonals, offsets, format="csr") / (12.0 * spacing**2)


def build_lplus_radial(
    limit: LimitSystemSolution, well_index: int, ell: int, include_nonlocal: bool = True
) -> RadialOperatorMatrix:
    """Discretize -c (d^2/dr^2 + (2/r) d/dr - l(l+1)/r^2) + V(a_i) - p w^(p-1).

    For l = 0 the nonlocal term is added as a rank-one update.
    """
    if ell < 0:
        raise ParameterError(f"Angular mode must be nonnegative, got {ell}")
    if not 0 <= well_index < limit.k:
        raise ParameterError(
            f"Well index {well_index} out of range for k={limit.k}"
        )
    profile = limit.w_profiles[well_index]
    lam, p, c, b = profile.lam, limit.params.p, limit.c, limit.params.b
    spacing = RADIAL_STEP * limit.sqrt_c
    size = int(profile.grid.r_max / spacing) - 1
    radii = spacing * np.arange(1, size + 1)
    w = np.asarray(profile.evaluate(radii))
    diagonal = c * ell * (ell + 1) / radii**2 + lam - p * positive_power(w, p - 1.0)
    second = _fourth_order_second_difference(size, spacing, ell)
    local = (-c * second + sparse.diags(diagonal)).tocsr()
    rank_one = None
    if include_nonlocal and ell == 0 and b > 0.0:
        laplacian = (lam * w - positive_power(w, p)) / c
        rank_one = (8.0 * math.pi * b * spacing, radii * laplacian)
    return RadialOperatorMatrix(ell, well_index, radii, spacing, local, rank_one)


@dataclass(frozen=True, eq=False)
class EigenPairs:
    """Eigenvalues sorted by magnitude and eigenvectors as radial functions phi."""

    values: np.ndarray
    vectors: np.ndarray


def smallest_eigenpairs(matrix: RadialOperatorMatrix, count: int) -> EigenPairs:
    """The count smallest-magnitude eigenpairs, by shift-invert about zero."""
    if not 0 < count < matrix.size - 1:
        raise ParameterError(
            f"Cannot compute {count} eigenpairs of a size-{matrix.size} matrix"
        )
    try:
        values, vectors = splinalg.eigsh(
            matrix.as_operator(),
            k=count,
            sigma=0.0,
            which="LM",
            OPinv=matrix.inverse(),
            tol=1e-12,
        )
    except splinalg.ArpackNoConvergence as err:
        raise NoConvergence(
            f"Eigen-solve for l={matrix.ell}, well {matrix.well_index} "
            "did not converge: "
            f"{len(err.eigenvalues)} of {count} eigenvalues found"
        ) from err
    order = np.argsort(np.abs(values))
    phi = vectors[:, order] / matrix.radii[:, None]
    logger.debug(
        "Eigenvalues for l=%d, well %d: %s",
        matrix.ell,
        matrix.well_index,
        values[order].tolist(),
    )
    return EigenPairs(values[order], phi)


@dataclass(frozen=True)
class SpectrumEntry:
    """One eigenvalue of one angular mode of one well."""

    well: int
    ell: int
    rank: int
    eigenvalue: float
    kernel_flag: bool


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Eigenvalues of L+ per well and angular mode.

    Kernel flags and translation cosines come along with them.
    """

    entries: Tuple[SpectrumEntry, ...]
    translation_cosines: Tuple[float, ...]
    radial_gaps: Tuple[float, ...]

    def kernel_modes(self) -> List[Tuple[int, int]]:
        """(well, l) pairs with a flagged near-zero eigenvalue, with multiplicity."""
        return [(e.well, e.ell) for e in self.entries if e.kernel_flag]

    def nondegenerate(self, min_cosine: float = 0.999, min_gap: float = 0.01) -> bool:
        """Kernel exactly once at l = 1 per well, aligned with w', and a radial gap."""
        wells = sorted({e.well for e in self.entries})
        expected = [(well, 1) for well in wells]
        return (
            self.kernel_modes() == expected
            and all(c >= min_cosine for c in self.translation_cosines)
            and all(g >= min_gap for g in self.radial_gaps)
        )

    def rows(self) -> List[Dict]:
        """Table rows."""
        return [
            dict(
                well=e.well,
                ell=e.ell,
                eigenvalue_rank=e.rank,
                eigenvalue=e.eigenvalue,
                kernel_flag=int(e.kernel_flag),
            )
            for e in self.entries
        ]


def translation_cosine(
    matrix: RadialOperatorMatrix, limit: LimitSystemSolution, vector: np.ndarray
) -> float:
    """|cos| between an eigenvector and the sampled w' in the weighted product."""
    slope = np.asarray(limit.w_profiles[matrix.well_index].evaluate(matrix.radii, 1))
    dot = matrix.inner(vector, slope)
    norms = matrix.inner(vector, vector) * matrix.inner(slope, slope)
    return abs(dot) / math.sqrt(norms)


# pylint: disable=too-many-locals
def spectrum_scan(
    limit: LimitSystemSolution,
    ell_max: int = 3,
    count: int = 4,
    threads: int = 1,
    no_progress_bar: bool = True,
    kernel_threshold: float = KERNEL_THRESHOLD,
) -> SpectrumReport:
    """Run l = 0..ell_max for every well.

    An eigenvalue is flagged near zero relative to the next one.
    """
    if count < 2:
        raise ParameterError("At least two eigenvalues are needed to set the scale")
    jobs = [(well, ell) for well in range(limit.k) for ell in range(ell_max + 1)]

    def solve(job):
        matrix = build_lplus_radial(limit, *job)
        return matrix, smallest_eigenpairs(matrix, count)

    logger.info(
        "Spectrum scan initiated: k=%d, l <= %d, %d eigenvalues each",
        limit.k,
        ell_max,
        count,
    )
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        results = list(
            tqdm(
                executor.map(solve, jobs),
                total=len(jobs),
                ascii=True,
                disable=no_progress_bar,
            )
        )

    entries, cosines, gaps = [], [], []
    for (well, ell), (matrix, pairs) in zip(jobs, results):
        scale = abs(pairs.values[1])
        for rank, value in enumerate(pairs.values):
            flagged = rank == 0 and abs(value) <= kernel_threshold * scale
            entries.append(SpectrumEntry(well, ell, rank, float(value), flagged))
        if ell == 0:
            gaps.append(abs(pairs.values[0]) / scale)
        if ell == 1:
            cosines.append(translation_cosine(matrix, limit, pairs.vectors[:, 0]))
    report = SpectrumReport(tuple(entries), tuple(cosines), tuple(gaps))
    logger.info("Spectrum scan completed: kernel at %s", report.kernel_modes())
    return report


@dataclass(frozen=True, eq=False)
class CoercivityReport:  # pylint: disable=too-many-instance-attributes
    """Rayleigh-quotient estimates for the Hessian on the constraint complement."""

    eps: float
    n: int
    peaks: np.ndarray
    rho_estimate: float
    min_rayleigh: float
    negative_count: int
    unprojected_min_abs: float
    upper_C: float
    eigenvalues: Tuple[float, ...]
    converged: bool

    def row(self) -> Dict:
        """Table row."""
        return dict(
            eps=self.eps, n=self.n, rho_estimate=self.rho_estimate, upper_C=self.upper_C
        )


def translation_basis(state: AnsatzState, grid: BoxGrid) -> np.ndarray:
    """The 3k vectors d/dy^i_j w^i((x - y^i)/eps) on the lattice unknowns."""
    derivatives = state.field().translation_derivatives(grid.interior_points)
    return derivatives.reshape(derivatives.shape[0], -1)


def _pencil_extremes(hessian, gram, preconditioner, count, constraints, largest, seed):
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((gram.shape[0], count))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        values, vectors = splinalg.lobpcg(
            hessian,
            start,
            B=gram,
            M=preconditioner,
            Y=constraints,
            tol=LOBPCG_TOL,
            maxiter=LOBPCG_MAXITER,
            largest=largest,
        )
    messages = [str(w.message) for w in caught]
    converged = not any("not reach" in m or "converge" in m for m in messages)
    if not converged:
        logger.warning("LOBPCG stopped before reaching tol %.1e", LOBPCG_TOL)
    return np.sort(values), vectors, converged


# pylint: disable=too-many-arguments,too-many-locals
def coercivity_check(
    state: AnsatzState,
    grid: BoxGrid,
    model: PotentialModel,
    nodes_per_peak: float = 8.0,
    boundary_tol: float = 1e-10,
    seed: int = 0,
) -> CoercivityReport:
    """Estimate rho = min |mu| of the Hessian pencil (H, Gram).

    The pencil is restricted to the eps-orthogonal complement of the
    translations.
    """
    check_resolution(grid, state.eps, state.limit.sqrt_c, nodes_per_peak)
    lattice = LatticeKirchhoff(grid, state.eps, state.limit.params, model)
    plain = state.with_corrector(None)
    ansatz = assemble_ansatz(plain, "box", grid, boundary_tol).interior()
    hessian = lattice.hessian(ansatz)
    constraints = translation_basis(state, grid)
    count = state.limit.k + EXTRA_MODES
    logger.info(
        "Coercivity check initiated: eps=%s, n=%d, %d unknowns",
        state.eps,
        grid.n,
        lattice.size,
    )

    pencil = (hessian, lattice.gram, lattice.gram_preconditioner)
    projected, _, ok_low = _pencil_extremes(*pencil, count, constraints, False, seed)
    unprojected, _, ok_free = _pencil_extremes(*pencil, count, None, False, seed)
    top, _, ok_top = _pencil_extremes(*pencil, 1, constraints, True, seed)
    report = CoercivityReport(
        state.eps,
        grid.n,
        np.array(state.peaks),
        float(np.min(np.abs(projected))),
        float(projected[0]),
        int(np.count_nonzero(projected < 0.0)),
        float(np.min(np.abs(unprojected))),
        float(top[-1]),
        tuple(float(v) for v in projected),
        ok_low and ok_free and ok_top,
    )
    logger.info(
        "Coercivity check completed: rho=%.6g, min quotient %.6g, "
        "%d negative, unprojected %.3g, C=%.6g",
        report.rho_estimate,
        report.min_rayleigh,
        report.negative_count,
        report.unprojected_min_abs,
        report.upper_C,
    )
    return report
