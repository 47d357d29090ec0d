"""Exception hierarchy shared by every module."""


class ESNRLError(Exception):
    """Base class for all errors raised by esnrl."""


class ParameterError(ESNRLError, ValueError):
    """An argument violates its documented precondition."""


class SingularityError(ESNRLError, ArithmeticError):
    """A linear system has no unique solution."""


class InitError(ESNRLError):
    """Reservoir weights could not be initialised."""


class ActionError(ParameterError):
    """An action lies outside the environment's action space."""


class DomainError(ParameterError):
    """A state lies outside the domain of a vector field."""


class NumericalError(ESNRLError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class StiffnessError(NumericalError):
    """Adaptive step size underflowed; carries the partial trajectory."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DivergenceError(NumericalError):
    """An iterative update blew up; carries the partial log."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(ESNRLError, ValueError):
    """An experiment configuration is invalid."""
