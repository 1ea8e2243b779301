"""Exception and warning types shared across the package.

Errors raised inside the full fit pipeline carry a ``stage`` attribute naming
the pipeline stage that failed (set by ``fit.fit_full``).
"""


class ResfitError(Exception):
    """Base class for all package errors."""

    stage: str | None = None


class InvalidParameterError(ResfitError):
    """A physical parameter or configuration value is out of its valid domain."""


class ValidationError(ResfitError):
    """Malformed user input: files, configs, CLI arguments."""


class DegenerateGeometryError(ResfitError):
    """Circle fit received collinear or otherwise degenerate points."""


class PhaseUnwrapError(ResfitError):
    """Phase unwrapping is ambiguous: an off-resonance step exceeds the safe limit."""

    def __init__(self, index: int, step_rad: float):
        self.index = index
        self.step_rad = step_rad
        super().__init__(
            f"phase unwrap failure at sample index {index}: "
            f"off-resonance phase step {step_rad:.3f} rad"
        )


class FitConvergenceError(ResfitError):
    """Iterative fit did not converge. Carries the last iterate."""

    def __init__(self, message: str, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class NonphysicalQiError(ResfitError):
    """Diameter correction produced 1/Q_l - cos(phi)/|Q_c| <= 0."""


class DegreesOfFreedomError(ResfitError):
    """Too few points for the requested fit (need more points than parameters)."""


class RankDeficiencyError(ResfitError):
    """Jacobian normal matrix is singular. Names the null direction."""

    def __init__(self, null_direction):
        self.null_direction = null_direction
        super().__init__(
            "singular J^T J in uncertainty estimate; null direction over "
            f"(Q_l, |Q_c|, f_r, phi) = {null_direction}"
        )


class UnreliableCalibrationWarning(UserWarning):
    """Off-resonant point is too close to the noise floor to calibrate against."""
