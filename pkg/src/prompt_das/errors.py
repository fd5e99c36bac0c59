"""Exception hierarchy for the prompt-das pipeline.

Errors are grouped by the CLI exit code they map to: config problems (2),
data problems (3), numeric failures (4). Everything else is a plain bug and
propagates as-is.
"""


class PromptDasError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(PromptDasError):
    exit_code = 2


class DataError(PromptDasError):
    exit_code = 3


class NumericError(PromptDasError):
    exit_code = 4


# -- config-class errors ------------------------------------------------------

class BadConfig(ConfigError):
    pass


class InvalidSpec(ConfigError):
    pass


class RatioOutOfRange(ConfigError):
    pass


class DepthOutOfRange(ConfigError):
    pass


class ConfigMismatch(ConfigError):
    pass


class EmptyGrid(ConfigError):
    pass


# -- data-class errors --------------------------------------------------------

class MissingInput(DataError):
    pass


class SignalTooShort(DataError):
    pass


class EmptyRecord(DataError):
    pass


class WindowTooLong(DataError):
    pass


class NotDivisible(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class CorruptManifest(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class DatasetUnreadable(DataError):
    pass


class ChecksumMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class NoRunsFound(DataError):
    pass


# -- numeric errors -----------------------------------------------------------

class NonFiniteLoss(NumericError):
    pass


class FrozenViolation(NumericError):
    """Internal assertion: a frozen parameter changed during training."""
