"""Exception types raised across the package."""


class PrnuError(Exception):
    """Base class for all package errors."""


class ImageFormatError(PrnuError):
    """File could not be decoded as a supported grayscale image."""


class DimensionMismatchError(PrnuError, ValueError):
    """Arrays that must share a shape do not."""


class EmptyInputError(PrnuError, ValueError):
    """An operation received an empty collection it cannot work with."""


class DegenerateScoreError(PrnuError, ValueError):
    """The source-sensor score of the input image is not positive.

    The spoofing termination criterion divides by this score, so the
    attack refuses to start.
    """
