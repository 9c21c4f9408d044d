"""Exception types shared across the package."""


class OsdlError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(OsdlError, ValueError):
    """Operands have inconsistent shapes."""


class UnsupportedFamilyError(OsdlError, ValueError):
    """Unknown wavelet family tag."""


class InvalidOrderError(OsdlError, ValueError):
    """Wavelet order outside the embedded coefficient tables."""


class InvalidLengthError(OsdlError, ValueError):
    """Transform length is not a power of two (or too small)."""


class InvalidSignalLengthError(OsdlError, ValueError):
    """Signal length unsupported for the cropped construction."""


class TooManyLevelsError(OsdlError, ValueError):
    """Decomposition depth exceeds what the length admits."""


class InconsistentGramError(OsdlError, ValueError):
    """Gram matrix diagonal deviates from unit-norm columns."""


class DegenerateStepError(OsdlError, RuntimeError):
    """Step-size denominator vanished; no update direction."""


class InvalidSigmaError(OsdlError, ValueError):
    """Noise level must be positive."""


class FormatError(OsdlError, ValueError):
    """Malformed or unsupported file contents."""
