"""Exception hierarchy shared across the package."""


class DitaError(Exception):
    """Base class for all package errors."""


class ConfigError(DitaError, ValueError):
    """Invalid configuration: unknown key, bad type, or out-of-range value."""


class EpisodeSetupError(DitaError, ValueError):
    """An episode cannot be started (e.g. the target type is absent from the room)."""


class InterfaceError(DitaError, ValueError):
    """A caller passed a value outside an operation's interface (e.g. unknown action)."""


class ContractError(DitaError, RuntimeError):
    """A documented precondition was violated by the caller."""


class ShapeError(DitaError, ValueError):
    """Tensor dimensions do not chain."""


class DomainError(DitaError, ValueError):
    """Argument outside a function's mathematical domain."""


class CheckpointError(DitaError, IOError):
    """Checkpoint could not be read."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint carries an unknown format or version tag."""


class MalformedCheckpointError(CheckpointError):
    """Checkpoint is truncated or structurally invalid."""
