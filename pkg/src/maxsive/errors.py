"""Exception types shared across the package."""


class MaxsiveError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(MaxsiveError, ValueError):
    """Input values are non-finite or otherwise unusable."""


class ShapeError(MaxsiveError, ValueError):
    """Array dimensions violate an operation's contract."""


class ConfigError(MaxsiveError, ValueError):
    """A configuration value is out of its documented range."""


class DegenerateInputError(MaxsiveError, ValueError):
    """Statistic undefined for this input (e.g. zero variance)."""


class SpectrumSymmetryError(MaxsiveError, ValueError):
    """A spectrum expected to be conjugate-symmetric is not."""


class GeometryError(MaxsiveError, ValueError):
    """Template geometry degenerated (e.g. points collapsed after rounding)."""


class NoTemplateError(MaxsiveError, ValueError):
    """Magnitude map is flat; there is no template to locate."""


class CalibrationError(MaxsiveError, ValueError):
    """Too few trials to calibrate the requested false-positive rate."""


class PipelineParseError(MaxsiveError, ValueError):
    """Attack pipeline text could not be parsed."""
