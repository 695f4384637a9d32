"""Exception hierarchy shared by the package."""


class ApblowError(Exception):
    """Base class for all errors raised by apblow."""


class DomainError(ApblowError, ValueError):
    """A parameter lies outside the admissible range of an operation."""


class PrecisionExhausted(ApblowError):
    """The radius rule can no longer produce a positive, representable radius."""


class CandidateSearchOverflow(ApblowError):
    """No dense-sequence point was found in the free region within budget."""


class InsufficientBalls(ApblowError):
    """The operation needs more balls than the system holds."""


class IndexOutOfRange(ApblowError, IndexError):
    """A ball index is outside ``1..L``."""


class CalibrationFailed(ApblowError):
    """No grid value of the slab margin satisfies the measure requirement."""


class RegionEmpty(ApblowError):
    """Rejection sampling found no point of the requested region."""


class NonSmoothPoint(ApblowError):
    """A finite-difference probe lies too close to a center or a sphere."""


class EmptyScan(ApblowError):
    """No ball of the requested index range fits inside the subdomain."""
