"""Exception hierarchy.

Contract violations derive from :class:`ValidationError` (CLI exit code 1);
numerical breakdowns derive from :class:`ComputationError` (exit code 2).
"""


class PvcastError(Exception):
    """Base class for all package errors."""


class ValidationError(PvcastError, ValueError):
    """Input violates a documented precondition."""


class ComputationError(PvcastError, RuntimeError):
    """A numerical procedure failed on otherwise valid input."""


# data cube
class MissingColumn(ValidationError):
    def __init__(self, name):
        super().__init__(f"missing column {name!r}")
        self.name = name


class NonNumericCell(ValidationError):
    def __init__(self, row, col, value=None):
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")
        self.row = row
        self.col = col


class EmptyTable(ValidationError):
    pass


class KNotSatisfiable(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class ColumnConflict(UnknownColumn):
    """The same column name is provided by more than one source."""


class DisjointCoverage(ValidationError):
    pass


# interpolation
class InsufficientData(ValidationError):
    pass


class FitDiverged(ComputationError):
    pass


class SingularSystem(ComputationError):
    pass


# regressors / ensemble
class InvalidParam(ValidationError):
    def __init__(self, name, detail=""):
        msg = f"invalid parameter {name!r}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.name = name


class DegenerateData(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


# evolution
class EmptySpace(ValidationError):
    pass


class FitnessFailure(ComputationError):
    def __init__(self, genome, cause=None):
        super().__init__(f"fitness evaluation failed for {genome!r}: {cause!r}")
        self.genome = genome
        self.cause = cause


# covcor
class UnknownVariable(ValidationError):
    pass


class MissingVariable(ValidationError):
    pass


class RowMismatch(ValidationError):
    pass


# neural network
class InvalidConfig(ValidationError):
    pass


class NonFiniteLoss(ComputationError):
    pass


# arima / hybrid
class TooShort(ValidationError):
    pass


class MissingExog(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InsufficientTraining(ValidationError):
    pass


class AllZeroTruth(ValidationError):
    pass


class NonStationaryFit(UserWarning):
    """Issued (not raised) when fitted AR roots lie inside the unit circle."""


# command line
class UsageError(ValidationError):
    """Bad command-line flags or arguments."""
