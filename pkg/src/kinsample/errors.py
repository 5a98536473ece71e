class KinsampleError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(KinsampleError):
    """Invalid molecular / kinematic model input."""


class ParseError(KinsampleError):
    def __init__(self, message: str, path=None, line_number: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line_number is not None:
                where += f":{line_number}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line_number = line_number


class NumericalDegeneracyError(KinsampleError):
    pass


class PreconditionError(KinsampleError):
    pass
