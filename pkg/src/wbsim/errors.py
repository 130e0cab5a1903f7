"""Exception hierarchy shared by every wbsim module."""


class WbsimError(Exception):
    """Base class for all simulator errors."""


class ParseError(WbsimError):
    """Malformed robot description or scenario text."""


class KinematicsError(WbsimError):
    """The joint graph is not a tree, or it references unknown links."""


class ValidationError(WbsimError):
    """A model field violates a physical invariant."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DimensionError(WbsimError, ValueError):
    pass


class UnknownFrameError(WbsimError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SingularMassMatrix(WbsimError):
    pass


class BadProblem(WbsimError, ValueError):
    """QP data breaks the solver preconditions (asymmetric Q, l > u)."""


class QPInfeasible(WbsimError):
    pass


class NonFiniteState(WbsimError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class SimulationError(WbsimError):
    """Wraps an error raised inside a simulation step."""

    def __init__(self, message, step_index=None, sim_time=None, cause=None):
        super().__init__(message)
        self.step_index = step_index
        self.sim_time = sim_time
        self.cause = cause


class ConfigError(WbsimError):
    pass


class OutputError(WbsimError, OSError):
    pass
