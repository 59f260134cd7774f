"""Exception hierarchy shared by every module in the package."""


class QudrcError(Exception):
    """Base class for all package errors."""


class RejectedGraph(QudrcError, ValueError):
    """The supplied graph violates a structural precondition."""


class NonFiniteInput(QudrcError, ValueError):
    """NaN or infinite values where finite reals are required."""


class IllegalEdge(QudrcError, ValueError):
    """A message was addressed along a link that does not exist."""


class ProtocolViolation(QudrcError, RuntimeError):
    """An internal protocol invariant broke. Indicates a bug, not bad input."""


class NoConvergence(QudrcError, RuntimeError):
    """The averaging protocol did not halt within its round budget."""


class DimensionMismatch(QudrcError, ValueError):
    pass


class SingularSystem(QudrcError, ArithmeticError):
    pass


class OracleFailure(QudrcError, RuntimeError):
    """A user supplied cost oracle returned a non-stationary point."""


class InsufficientData(QudrcError, ValueError):
    pass


class ConfigError(QudrcError, ValueError):
    pass
