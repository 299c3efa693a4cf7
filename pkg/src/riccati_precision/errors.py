"""Exception hierarchy.

Every error carries the process exit code the command-line front end uses
when it surfaces the failure.
"""


class RiccatiError(Exception):
    exit_code = 1


class InvalidInput(RiccatiError, ValueError):
    exit_code = 3


class ConstantSignal(InvalidInput):
    """A row with zero variance cannot be normalized."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row} is constant and cannot be normalized")


class UnsupportedPenalty(InvalidInput):
    pass


class DegenerateInput(InvalidInput):
    pass


class TooLarge(InvalidInput):
    pass


class ParseError(InvalidInput):
    pass


class NonFiniteEntry(InvalidInput):
    def __init__(self, row, col, message=None):
        self.row = row
        self.col = col
        super().__init__(message or f"non-finite entry at row {row}, column {col}")


class TruncatedPayload(InvalidInput):
    pass


class NumericalError(RiccatiError, ArithmeticError):
    exit_code = 4


class RankDeficient(NumericalError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} is numerically dependent on the previous ones")


class StorageError(RiccatiError, OSError):
    exit_code = 5
