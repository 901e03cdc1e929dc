"""Exception hierarchy shared by all lonrec modules."""


class LonrecError(ValueError):
    pass


class InvalidDimensionError(LonrecError):
    pass


class NotUnitaryError(LonrecError):
    pass


class DegeneratePolarError(LonrecError):
    pass


class SingularMatrixError(LonrecError):
    pass


class GaugeDegenerateError(LonrecError):
    """A reference entry in the first row or column vanishes."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"gauge reference entry {index} is zero")


class UndefinedVisibilityError(LonrecError):
    pass


class InsufficientModesError(LonrecError):
    pass


class DegenerateColumnError(LonrecError):
    pass


class UnphysicalGainError(LonrecError):
    pass


class UnderdeterminedError(LonrecError):
    pass


class InsufficientDataError(LonrecError):
    """Primary data lacks records a reconstruction method needs."""


class ReconstructionFailed(LonrecError):
    pass


class MalformedFileError(LonrecError):
    """An input file does not have the expected layout."""
