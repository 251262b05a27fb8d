"""Exception hierarchy shared by every module of the engine."""


class CsRiskError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(CsRiskError, ValueError):
    """Invalid user input: grid sizes, parameters, configs, claim shapes."""


class LayoutError(ConfigurationError):
    """Operation not supported on the lattice layout it was given."""


class LatticeIndexError(CsRiskError, IndexError):
    """Step indices out of order or out of range."""


class TiltError(CsRiskError, ValueError):
    """Measure tilt whose per-step probabilities leave the unit interval."""


class CapabilityError(CsRiskError):
    """The driver lacks the structure an operation needs (e.g. differentiability)."""


class NumericError(CsRiskError, ArithmeticError):
    """A numerical procedure failed (non-convergence, non-finite values)."""


class StepSizeError(NumericError):
    """The time step is too coarse for the implicit scheme to contract."""


class ScenarioInfeasibleError(NumericError):
    """The optimal scenario has infinite penalty or yields an invalid tilt."""
