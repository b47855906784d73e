"""Exception hierarchy, mapped to CLI exit codes in cli.py."""


class NcrankError(Exception):
    """Base class for package errors."""


class DataError(NcrankError):
    """Bad input data: parse failures, empty datasets, incompatible splits."""


class NumericError(NcrankError):
    """Numeric failure: shape mismatches, non-finite values."""


class ShapeError(NumericError):
    """Operands with incompatible shapes."""


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(
            f"training diverged: non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
