"""Exception hierarchy shared across the package.

Every error raised by driftrisk derives from DriftRiskError so callers can
catch the whole family at once.  ValidationError doubles as a ValueError for
idiomatic use at API boundaries.
"""


class DriftRiskError(Exception):
    """Base class for all driftrisk errors."""


class ValidationError(DriftRiskError, ValueError):
    """A parameter or config value is outside its legal domain."""


class ConfigurationError(DriftRiskError):
    """A structurally invalid setup: unpriced leaf, missing accuracy, etc."""


class EstimationError(DriftRiskError):
    """An estimate cannot be produced, e.g. from an empty verdict trace."""


class UninformativeDetectorError(EstimationError):
    """Detector informativeness (TPR + TNR - 1) is at or below the floor.

    Correcting verdict rates with such a detector amplifies noise without
    bound, so the estimator refuses instead of returning garbage.
    """


class CalibrationError(DriftRiskError):
    """Labeled calibration data is missing a class or a required column."""


class SnapshotError(DriftRiskError):
    """A monitor snapshot payload is corrupt or has the wrong version."""
