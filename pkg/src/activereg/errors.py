"""Exception types raised across the package."""


class ActiveRegError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


class NonFinite(ActiveRegError, ValueError):
    pass


class NotPositiveDefinite(ActiveRegError, ArithmeticError):
    def __init__(self, message, min_pivot=None):
        super().__init__(message)
        self.min_pivot = min_pivot


class NotEnoughSamples(NotPositiveDefinite):
    """Weighted Gram matrix is singular: too few active samples for the model."""


class TooLarge(ActiveRegError, ValueError):
    pass


class ConditionViolated(ActiveRegError):
    def __init__(self, tag, message=""):
        super().__init__(f"condition [{tag}] violated" + (f": {message}" if message else ""))
        self.tag = tag


class UnsupportedFamily(ActiveRegError, ValueError):
    pass


class MissingBiasProxy(ActiveRegError, KeyError):
    pass


class AllModelsFailed(ActiveRegError):
    pass


class GammaOutOfRange(ActiveRegError, ValueError):
    pass


class Exhausted(ActiveRegError):
    pass


class ParseError(ActiveRegError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(ActiveRegError):
    def __init__(self, field, constraint):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint
