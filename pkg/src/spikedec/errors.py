"""Exception hierarchy shared by all spikedec modules."""


class SpikedecError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SpikedecError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(SpikedecError):
    """A model, split, or layer configuration is invalid."""


class ParseError(SpikedecError):
    """A data file is malformed (bad magic, truncation, overflow)."""


class CheckpointError(SpikedecError):
    """A checkpoint manifest or weight blob is inconsistent."""


class EvalError(SpikedecError):
    """A numeric evaluation produced an undefined or non-finite result."""


class UsageError(SpikedecError):
    """An API was called in an unsupported order (e.g. backward without caches)."""
