"""Exception hierarchy shared by every module."""


class DriftrackError(Exception):
    """Base class for all library errors."""


class ExpressionSyntaxError(DriftrackError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(DriftrackError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class EvaluationDomainError(DriftrackError):
    """Raised when an expression is evaluated outside its mathematical domain."""


class OutOfDomainError(DriftrackError):
    """Raised when a field is evaluated outside its declared interval."""


class NonConvergenceError(DriftrackError):
    pass


class BracketError(DriftrackError):
    pass


class NotMartinetError(DriftrackError):
    pass


class NonTransverseError(DriftrackError):
    pass


class DegeneracyError(DriftrackError):
    pass


class ControlTooSmallError(DriftrackError):
    pass


class BlowUpError(DriftrackError):
    pass


class MissingFieldError(DriftrackError):
    pass


class NonPositiveDriftError(DriftrackError):
    pass


class InfeasibleError(DriftrackError):
    pass


class ArcSignLossError(DriftrackError):
    pass


class ConfigurationMismatchError(DriftrackError):
    pass


class SchemaError(DriftrackError):
    pass
