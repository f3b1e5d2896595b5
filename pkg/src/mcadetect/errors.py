"""Exception hierarchy shared by the simulator modules."""


class SimulationError(Exception):
    """Base class for numerical failures raised during a simulation."""


class SingularMatrix(SimulationError):
    pass


class SingularGram(SingularMatrix):
    pass


class SingularFeedback(SingularMatrix):
    pass


class SingularSystem(SingularMatrix):
    pass


class NonPositiveLambda(SimulationError):
    pass


class ZeroMatrix(SimulationError):
    pass


class ZeroSignal(SimulationError):
    pass


class InfeasibleMapping(SimulationError):
    pass


class DynamicRangeExceeded(SimulationError):
    pass


class StabilityViolation(SimulationError):
    pass


class NoConvergence(SimulationError):
    pass


class BadLength(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""
