"""Exception taxonomy shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(ValueError):
    """An argument value is outside its legal range."""


class ConfigError(ValueError):
    """A configuration violates its invariants."""


class StateError(RuntimeError):
    """An operation was issued in an invalid object state."""


class ContractError(RuntimeError):
    """A caller-side contract was broken (e.g. missing gradients)."""


class DecodeError(ValueError):
    """An image file could not be decoded."""


class DatasetError(ValueError):
    """A dataset is malformed; ``files`` lists every offending entry."""

    def __init__(self, message, files=None):
        super().__init__(message)
        self.files = list(files) if files else []


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or inconsistent."""
