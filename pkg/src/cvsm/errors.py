"""Exception types shared across the toolkit."""


class CvsmError(Exception):
    pass


class InvalidInput(CvsmError, ValueError):
    """Input data violates a precondition (non-finite values, empty sentences)."""


class InvalidArgument(CvsmError, ValueError):
    """Bad argument: shape mismatch, out-of-range id, negative variance."""


class InvalidConfiguration(CvsmError, ValueError):
    pass


class InvalidState(CvsmError, RuntimeError):
    pass


class ContractViolation(CvsmError, RuntimeError):
    """An operation was called before its required setup (e.g. backprop before forward)."""


class ParseError(CvsmError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


class UndefinedSimilarity(CvsmError, ArithmeticError):
    pass
