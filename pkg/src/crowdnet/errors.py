"""Exception hierarchy.

Every error raised on bad input derives from :class:`ValidationError` so the
CLI can map it to exit code 1; anything else is treated as internal.
"""


class CrowdnetError(Exception):
    pass


class ValidationError(CrowdnetError, ValueError):
    pass


# netcore
class NonStochasticRow(ValidationError):
    pass


class NegativeWeight(ValidationError):
    pass


class TooSmall(ValidationError):
    pass


class WeightOutOfRange(ValidationError):
    pass


class AllZero(ValidationError):
    pass


class NotErgodic(ValidationError):
    pass


class NoConvergence(CrowdnetError, ArithmeticError):
    pass


# dynamics / heuristic
class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class DegenerateGroup(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


# statkit
class Separation(CrowdnetError, ArithmeticError):
    pass


class Singular(ValidationError):
    pass


NoConverge = NoConvergence


class TooFew(ValidationError):
    pass


class ZeroVariance(ValidationError):
    pass


# simlab
class BadDistributionParams(ValidationError):
    pass


# pipeline
class SchemaError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantError(ValidationError):
    pass
