"""Exception hierarchy.

Validation errors mean the caller handed us something that breaks a contract
(bad input data, infeasible parameters). Corruption errors mean stored bytes
do not decode into something valid.
"""


class FwdIndexError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FwdIndexError, ValueError):
    pass


class NonAscendingError(ValidationError):
    pass


class ComponentRangeError(ValidationError):
    pass


class QuantizationError(ValidationError):
    pass


class UnsupportedDimensionError(ValidationError):
    pass


class CorruptionError(FwdIndexError, ValueError):
    pass


class FormatError(CorruptionError):
    """A file does not follow its binary layout."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class ChecksumError(FormatError):
    pass
