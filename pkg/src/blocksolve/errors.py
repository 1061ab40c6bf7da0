"""Exception hierarchy shared across the library."""


class BlockSolveError(Exception):
    """Base class for all library errors."""


class ShapeError(BlockSolveError):
    """Operands have inconsistent block sizes or lengths."""


class DuplicateEntry(BlockSolveError):
    """Two blocks (or scalars) were supplied for the same coordinate."""


class IndexOutOfRange(BlockSolveError):
    """A block coordinate lies outside the declared matrix dimensions."""


class MissingDiagonal(BlockSolveError):
    """A row lacks its diagonal block (required for factorization)."""

    def __init__(self, row: int):
        super().__init__(f"row {row} has no diagonal block")
        self.row = row


class SingularPivot(BlockSolveError):
    """A diagonal block could not be inverted during factorization."""

    def __init__(self, row: int):
        super().__init__(f"singular pivot block in row {row}")
        self.row = row


class TooManyPartitions(BlockSolveError):
    """More partitions requested than there are block rows."""


class PlanInvalidated(BlockSolveError):
    """A cached copy plan no longer matches the matrices it was built for."""


class SingularWellMatrix(BlockSolveError):
    """The dense well matrix D admits no LU factorization."""


class ParseError(BlockSolveError):
    """A system file has a malformed header or body."""


class BlockingError(BlockSolveError):
    """Scalar dimensions are not divisible by the declared block size."""


class SolveFailed(BlockSolveError):
    """Both the configured backend and the reference fallback failed."""

    def __init__(self, primary_report, fallback_report):
        super().__init__("primary backend and reference fallback both failed")
        self.primary_report = primary_report
        self.fallback_report = fallback_report
