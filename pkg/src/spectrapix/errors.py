"""Exception hierarchy shared across the package."""


class SpectrapixError(Exception):
    """Base class for all errors raised by this package."""


class GridError(SpectrapixError):
    """Grid shapes, pitches or placements are inconsistent."""


class PropagationError(SpectrapixError):
    """A field cannot be propagated (e.g. non-finite values)."""


class DispersionRangeError(SpectrapixError):
    """Requested wavelength lies outside the tabulated dispersion range."""


class DataFormatError(SpectrapixError):
    """A dataset or fixture file is malformed."""


class CheckpointError(SpectrapixError):
    """A checkpoint file is missing, malformed or version-incompatible."""


class TrainingDivergenceError(SpectrapixError):
    """Training produced a non-finite loss.

    Carries the iteration index at which the divergence was detected.
    """

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class DegenerateScoreError(SpectrapixError):
    """Class scores cannot be normalized (zero total detected power)."""


class ConfigError(SpectrapixError):
    """An experiment configuration is invalid or incomplete."""
