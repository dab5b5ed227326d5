"""Typed error hierarchy shared by all solver modules."""


class ShellflowError(Exception):
    """Base class for all solver errors."""


# --- geometry ---------------------------------------------------------------

class OutOfBand(ShellflowError):
    """Point lies outside the tubular band where projection is single-valued."""


class Inadmissible(ShellflowError):
    """Shell displacement violates the admissibility bounds."""

    def __init__(self, report, message="shell displacement is inadmissible"):
        super().__init__(f"{message}: {report}")
        self.report = report


class NonPositiveJacobian(ShellflowError):
    """Transform Jacobian dropped to or below the configured floor."""


class NoConvergence(ShellflowError):
    """Newton iteration failed to converge within the iteration budget."""


class DegenerateSurface(ShellflowError):
    """Deformed-surface area factor fell below the degeneracy floor."""


# --- field plumbing ----------------------------------------------------------

class ShapeMismatch(ShellflowError):
    """Field shapes are inconsistent with the grid or with each other."""


class GridMismatch(ShellflowError):
    """Two runs or fields live on different grids."""


class OrderUnsupported(ShellflowError):
    """Requested differentiation order exceeds what the grid supports."""


class InsufficientSnapshots(ShellflowError):
    """Trajectory has too few snapshots for the requested time derivative."""


# --- transport ---------------------------------------------------------------

class NonPositiveDensity(ShellflowError):
    """Density field is not strictly positive."""


class OutOfSpan(ShellflowError):
    """Requested time lies outside the trajectory span."""


class CharacteristicEscape(ShellflowError):
    """Traced characteristic left the closed domain beyond the drift tolerance."""


class InterpolationOutOfDomain(ShellflowError):
    """Interpolation point lies outside the reference domain."""


# --- Galerkin / coupling -------------------------------------------------------

class UnderResolved(ShellflowError):
    """Grid does not resolve the requested modal basis."""


class IncompatibleData(ShellflowError):
    """Initial data violate the acceleration compatibility balance."""


class SingularSolve(ShellflowError):
    """Time-step operator could not be factorized."""


class NoContraction(ShellflowError):
    """Fixed-point iteration stopped contracting."""


class MaxIterExceeded(ShellflowError):
    """Fixed-point iteration exceeded its sweep budget."""


class HalvingExhausted(ShellflowError):
    """Time-interval halving limit reached without contraction."""


# --- configuration and I/O -----------------------------------------------------

class UnknownPreset(ShellflowError):
    """Preset name is not one of the built-in scenarios."""


class ParseError(ShellflowError):
    """Config file could not be parsed."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InvalidValue(ShellflowError):
    """Config value violates its constraint."""

    def __init__(self, key, constraint):
        super().__init__(f"{key}: must satisfy {constraint}")
        self.key = key
        self.constraint = constraint


class CorruptHeader(ShellflowError):
    """Snapshot file header is malformed or truncated."""


class FormatVersionMismatch(ShellflowError):
    """Snapshot file was written with an unsupported format version."""
