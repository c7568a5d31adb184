"""Exception hierarchy.

Two families: ``ModelError`` for inputs that violate a contract (bad
matrices, bad data, reducible chains) and ``NumericalError`` for
algorithms that fail on otherwise valid input. The CLI maps the first to
exit code 2 and the second to exit code 3.
"""


class MobilityError(Exception):
    """Base class for all package errors."""


class ModelError(MobilityError, ValueError):
    """Input does not satisfy a model or data contract."""


class NumericalError(MobilityError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""


class NotSquare(ModelError):
    pass


class NegativeOffDiagonal(ModelError):
    pass


class RowSumViolation(ModelError):
    pass


class InvalidDistribution(ModelError):
    pass


class InvalidPartition(ModelError):
    pass


class EmptyWorkingSet(InvalidPartition):
    pass


class Reducible(ModelError):
    """The generator has more than one closed communicating class."""


class EmptyGrid(ModelError):
    pass


class EmptySeries(ModelError):
    pass


class AllZeroCounts(ModelError):
    pass


class DegenerateSample(ModelError):
    pass


class TruncationFailure(NumericalError):
    pass


class SolverFailure(NumericalError):
    pass


class LogarithmFailure(NumericalError):
    """The principal matrix logarithm does not exist."""


class NonConvergent(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass
