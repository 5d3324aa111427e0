"""Exception hierarchy shared by all rflab modules."""


class RFLabError(Exception):
    """Base class for every error raised by rflab."""


class DomainError(RFLabError, ValueError):
    """An argument lies outside the domain of an operation."""


class DivergenceError(DomainError):
    """A requested moment or integral is infinite."""


class PreconditionError(RFLabError, ValueError):
    """A stated hypothesis of an inequality check does not hold."""


class GridMismatchError(RFLabError, ValueError):
    """Two fields or metrics live on incompatible grids or times."""


class FlowSingularityError(RFLabError, RuntimeError):
    """The flow develops a singularity before the requested final time."""


class StabilityError(RFLabError, RuntimeError):
    """A time integrator cannot proceed stably with the requested step."""


class ConvergenceError(RFLabError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class UnsupportedFlowError(RFLabError, NotImplementedError):
    """The operation is not available for this kind of flow."""


class ConfigError(RFLabError, ValueError):
    """A configuration file or command-line option is malformed."""
