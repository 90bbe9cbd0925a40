"""Exception types shared across the package."""


class TaubNutError(Exception):
    """Base class for all package errors."""


class PointAtCenterError(TaubNutError):
    """A pointwise operation was requested inside the exclusion radius of a center."""


class StringProximityError(TaubNutError):
    """A point lies too close to the coordinate string of the active patch."""


class StepValidationError(TaubNutError):
    """A finite-difference step failed validation (too large, or point too singular)."""


class RadiusValidationError(TaubNutError):
    """A quadrature radius is incompatible with the center configuration."""


class DegenerateBundleError(TaubNutError):
    """An operation requiring non-integer asymptotic eigenvalues got an integer one."""


class FitQualityError(TaubNutError):
    """A least-squares fit exceeded its modelled residual envelope."""


class ConfigError(TaubNutError):
    """A run configuration failed to parse or validate."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")
