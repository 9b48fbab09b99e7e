"""Exception types shared across the package."""


class SpecklePairError(Exception):
    """Base class for all package errors."""


class DimensionError(SpecklePairError, ValueError):
    """Array shapes, grids or footprints do not line up."""


class UnsupportedConfigurationError(SpecklePairError, ValueError):
    pass


class AliasingError(SpecklePairError, ValueError):
    pass


class SamplingError(SpecklePairError, ValueError):
    """The grid cannot resolve the requested physical scales."""


class InputError(SpecklePairError, ValueError):
    pass


class TruncationError(SpecklePairError, ValueError):
    """Mode truncation keeps too little of the state's weight."""


class ConfigError(SpecklePairError, ValueError):
    pass


class StageError(SpecklePairError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
