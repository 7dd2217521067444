"""Exception types shared across the package."""


class MixedTrafficError(Exception):
    """Base class."""


class ConfigError(MixedTrafficError, ValueError):
    """Invalid configuration value or schema violation."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class RoutingError(MixedTrafficError):
    pass


class ContractViolation(MixedTrafficError, RuntimeError):
    """A caller broke an operation's precondition."""


class NotReadyError(MixedTrafficError):
    """Replay buffer holds fewer transitions than requested."""


class NumericalError(MixedTrafficError, FloatingPointError):
    pass


class CheckpointError(MixedTrafficError):
    pass


class MissingArtifactError(MixedTrafficError):
    pass
