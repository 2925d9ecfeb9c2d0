"""Exception types raised across the package.

All errors derive from :class:`KOOWError`, so callers can catch one type.
Errors that describe bad user input also derive from :class:`ValueError`.
"""


class KOOWError(Exception):
    """Base class for every error raised by koow."""


class InputError(KOOWError, ValueError):
    """Invalid data or configuration supplied by the caller."""


class MissingColumn(InputError):
    def __init__(self, name):
        super().__init__(f"column not found: {name!r}")
        self.name = name


class NonNumericCell(InputError):
    def __init__(self, row, col, value=None):
        super().__init__(f"non-numeric or non-finite value {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col


class TooFewRows(InputError):
    pass


class ConstantTreatment(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NegativeLambda(InputError):
    pass


class InvalidSpan(InputError):
    pass


class MissingOutcome(InputError):
    pass


class GridMismatch(InputError):
    pass


class TooLarge(InputError):
    pass


class DegenerateMoments(KOOWError):
    """Sample covariance is singular and no ridge was requested."""


class NonFiniteObjective(KOOWError):
    pass


class NotConverged(KOOWError):
    """Solver hit its iteration cap. ``solution`` holds the last iterate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class FactorizationFailure(KOOWError):
    pass


class AllStartsFailed(KOOWError):
    pass


class RankDeficient(KOOWError):
    pass


class EmptyNeighborhood(KOOWError):
    pass


class ZeroVariance(KOOWError):
    pass


class SingularDesign(KOOWError):
    pass


class TooManyFailures(KOOWError):
    def __init__(self, message, excluded=0, total=0):
        super().__init__(message)
        self.excluded = excluded
        self.total = total
