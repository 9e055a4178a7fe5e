"""Exception hierarchy shared by every pocketnet module."""


class PocketNetError(Exception):
    """Base class for all pocketnet errors."""


class InvalidShapeError(PocketNetError, ValueError):
    pass


class InvalidParameterError(PocketNetError, ValueError):
    pass


class InvalidInputError(PocketNetError, ValueError):
    pass


class InvalidConfigError(PocketNetError, ValueError):
    pass


class NonFiniteError(PocketNetError, ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed.

    ``where`` names the layer, parameter or stage that produced it so a
    training abort can be traced back to its origin.
    """

    def __init__(self, where, detail=""):
        self.where = where
        msg = f"non-finite values in {where}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ContractViolationError(PocketNetError, RuntimeError):
    pass


class UndefinedMetricError(PocketNetError, ZeroDivisionError):
    pass


class GenerationError(PocketNetError, RuntimeError):
    pass


class PGMError(PocketNetError, ValueError):
    pass


class UnsupportedFormatError(PGMError):
    pass


class UnsupportedMaxvalError(PGMError):
    pass


class TruncatedPayloadError(PGMError):
    pass


class CheckpointError(PocketNetError, ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class InconsistentCheckpointError(CheckpointError):
    pass
