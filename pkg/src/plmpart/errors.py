"""Exception hierarchy shared by all modules."""


class PlmError(Exception):
    """Base class for errors raised by plmpart."""


class PartitionError(PlmError, ValueError):
    """Invalid ordering or cell assignment request."""


class SingularGramError(PlmError):
    """The within-cell centered Gram matrix is (numerically) singular."""

    def __init__(self, smallest_singular_value, message=None):
        self.smallest_singular_value = float(smallest_singular_value)
        super().__init__(
            message
            or "centered Gram matrix is singular "
            f"(smallest singular value {self.smallest_singular_value:.3g}); "
            "is some X column constant within every cell?"
        )


class RankDeficientError(PlmError, ValueError):
    """Constraint matrix of a linear hypothesis lacks full row rank."""


class BandwidthTooSmall(PlmError):
    """Local polynomial design is singular at some evaluation point."""

    def __init__(self, point, bandwidth):
        self.point = float(point)
        self.bandwidth = float(bandwidth)
        super().__init__(
            f"singular local design at u={self.point:.6g} with bandwidth h={self.bandwidth:.6g}"
        )


class GroupTooSmall(PlmError):
    """A category level has too few observations to smooth."""


class DataError(PlmError, ValueError):
    """Problems reading or validating input data."""


class MissingColumn(DataError):
    pass


class NonNumericValue(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        super().__init__(f"row {row}: column {column!r} has non-numeric value {value!r}")


class EmptyData(DataError):
    pass
