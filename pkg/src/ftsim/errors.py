"""Exception types raised across the simulator."""


class TopologyError(ValueError):
    """Invalid fat-tree parameters or node ids."""


class RoutingError(ValueError):
    """A routing function was asked for something the topology cannot do."""


class ConfigError(ValueError):
    """Bad experiment configuration text or values."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FlowControlError(RuntimeError):
    """Credit accounting or buffer capacity was violated during a run."""


class AuditError(RuntimeError):
    """A packet or credit conservation audit failed."""
