"""Module for custom exceptions in kpeaks source code."""
from typing import Optional


class KpeaksError(Exception):
    """Base class for kpeaks exceptions."""

    exit_code = 1


class ConfigError(KpeaksError):
    """An exception for an invalid or inconsistent run configuration."""

    exit_code = 2


class UnknownConfigKey(ConfigError):
    """A configuration key that is not part of the schema."""


class UnknownPreset(ConfigError):
    """A potential preset name that does not exist."""


class ParameterError(ConfigError):
    """A parameter outside of its admissible range."""


class SolverError(KpeaksError):
    """An exception raised when a numerical solver fails."""

    exit_code = 3

    def __init__(self, message: str, well_index: Optional[int] = None):
        super().__init__(message)
        self.well_index = well_index

    def for_well(self, well_index: int) -> "SolverError":
        """Copy this error, tagged with the index of the well it concerns."""
        return self.__class__(f"Well {well_index}: {self}", well_index=well_index)


class NoSignChange(SolverError):
    """The shooting bracket could not be established."""


class MaxIterations(SolverError):
    """An iteration stalled before reaching its tolerance."""


class ResidualCheckFailed(SolverError):
    """A solution failed its pointwise residual verification."""


class NoConvergence(SolverError):
    """An eigen-solve did not converge."""


class NewtonDiverged(SolverError):
    """The Newton iteration for the corrector did not converge."""

    def __init__(
        self,
        message: str,
        last_residual: float = float("nan"),
        well_index: Optional[int] = None,
    ):
        super().__init__(message, well_index=well_index)
        self.last_residual = last_residual


class ConstraintDrift(SolverError):
    """The corrector left the constraint space E."""


class BoxTooSmall(SolverError):
    """A lattice field does not decay at the box boundary."""


class UnresolvedPeak(SolverError):
    """The lattice does not resolve the peak width."""


class BoundaryMinimum(SolverError):
    """The reduced energy is minimized on the boundary of the peak domain."""


class GradAtCusp(SolverError):
    """A potential gradient was requested at a cusp center."""


class BackendMismatch(SolverError):
    """A field lacks the data the chosen quadrature backend needs."""


class InvariantViolation(KpeaksError):
    """An acceptance check of a stage failed."""

    exit_code = 4
