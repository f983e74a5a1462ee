"""Exception hierarchy.

Every error carries a ``kind`` used by the CLI to pick an exit code:
``data`` errors exit 2, ``numeric`` errors exit 3.
"""


class DispredError(Exception):
    kind = "data"


class DimensionError(DispredError, ValueError):
    pass


class LabelError(DispredError, ValueError):
    pass


class ParameterError(DispredError, ValueError):
    pass


class ConfigError(ParameterError):
    pass


class DataError(DispredError, ValueError):
    pass


class RangeError(DataError):
    pass


class MissingVariantError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"variants absent from genotype matrix: {shown}{more}")


class SplitError(DataError):
    pass


class DomainError(DataError):
    pass


class DegenerateBatchError(DispredError, ValueError):
    pass


class UndefinedAUCError(DispredError, ValueError):
    pass


class CheckpointError(DispredError, IOError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class NumericError(DispredError, ArithmeticError):
    kind = "numeric"
