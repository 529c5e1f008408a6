"""Exception hierarchy for sefdensity."""


class SefError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(SefError, ValueError):
    pass


class InvalidK(SefError, ValueError):
    pass


class DegenerateInput(SefError, ValueError):
    pass


class OutOfRange(SefError, ValueError):
    pass


class UnequalBins(SefError, ValueError):
    pass


class GridMismatch(SefError, ValueError):
    pass


class InvalidBandwidth(SefError, ValueError):
    pass


class SingularHessian(SefError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NonConvergence(SefError, ArithmeticError):
    def __init__(self, message, iterations=None, max_score=None):
        super().__init__(message)
        self.iterations = iterations
        self.max_score = max_score


class SingularG(SefError, ArithmeticError):
    pass


class SingularSigma(SefError, ArithmeticError):
    pass


class TooFewIndividuals(SefError, ValueError):
    pass


class InvalidP(SefError, ValueError):
    pass


class Underdispersed(SefError, ValueError):
    pass


class ParseError(SefError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)
        self.line = line
        self.column = column


class MissingMetadata(SefError, ValueError):
    pass


class ZeroLibrary(SefError, ValueError):
    pass


class NegativeInput(SefError, ValueError):
    pass
